#pragma once

// Independent reference computations used by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "persona/filter.hpp"
#include "persona/sampler.hpp"

namespace oracle {

struct Window {
  std::vector<std::string> ids;
  double range = 0.0;
};

// Every w-subset that is contiguous in (reward, id) order, scored directly.
inline Window best_window(const std::vector<persona::Candidate>& cands, std::size_t w) {
  std::vector<std::pair<double, std::string>> sorted;
  for (const auto& c : cands) sorted.emplace_back(*c.reward, c.id);
  std::sort(sorted.begin(), sorted.end());
  Window best;
  double best_mean = -std::numeric_limits<double>::infinity();
  best.range = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + w <= sorted.size(); ++s) {
    double lo = sorted[s].first, hi = sorted[s].first, sum = 0.0;
    for (std::size_t i = s; i < s + w; ++i) {
      lo = std::min(lo, sorted[i].first);
      hi = std::max(hi, sorted[i].first);
      sum += sorted[i].first;
    }
    const double range = hi - lo, mean = sum / static_cast<double>(w);
    if (range < best.range || (range == best.range && mean > best_mean)) {
      best.range = range;
      best_mean = mean;
      best.ids.clear();
      for (std::size_t i = s; i < s + w; ++i) best.ids.push_back(sorted[i].second);
    }
  }
  return best;
}

// Textbook Lloyd: assign to nearest (lowest index on ties), recompute means,
// stop when no assignment changes. Empty clusters keep their centroid.
inline std::vector<std::size_t> lloyd(const std::vector<std::vector<double>>& pts, std::vector<std::vector<double>> cent,
                                      int max_iter = 300) {
  std::vector<std::size_t> assign(pts.size(), static_cast<std::size_t>(-1));
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::size_t arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cent.size(); ++c) {
        double d = 0.0;
        for (std::size_t k = 0; k < pts[i].size(); ++k) d += (pts[i][k] - cent[c][k]) * (pts[i][k] - cent[c][k]);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      changed |= assign[i] != arg;
      assign[i] = arg;
    }
    if (!changed) break;
    for (std::size_t c = 0; c < cent.size(); ++c) {
      std::vector<double> sum(pts[0].size(), 0.0);
      int n = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (assign[i] != c) continue;
        ++n;
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += pts[i][k];
      }
      if (n == 0) continue;
      for (auto& v : sum) v /= n;
      cent[c] = sum;
    }
  }
  return assign;
}

// Two partitions are the same up to relabeling.
inline bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  std::map<std::size_t, std::size_t> fwd, back;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [f, fi] = fwd.emplace(a[i], b[i]);
    auto [r, ri] = back.emplace(b[i], a[i]);
    if (f->second != b[i] || r->second != a[i]) return false;
  }
  return true;
}

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Cohen's kappa from the confusion table.
inline double kappa(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, double> ca, cb;
  double agree = 0.0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1;
    cb[b[i]] += 1;
    agree += a[i] == b[i];
  }
  double pe = 0.0;
  for (const auto& [k, v] : ca) pe += (v / n) * (cb.count(k) ? cb[k] / n : 0.0);
  return (agree / n - pe) / (1.0 - pe);
}

// Nominal alpha via explicit pairable-value enumeration:
// D_o over ordered within-unit pairs weighted 1/(m_u - 1), D_e over all ordered
// pairs of pairable values.
inline double alpha(const std::vector<std::vector<std::optional<int>>>& m) {
  std::vector<std::vector<int>> units;
  for (std::size_t u = 0; u < m[0].size(); ++u) {
    std::vector<int> vals;
    for (const auto& row : m) {
      if (row[u]) vals.push_back(*row[u]);
    }
    if (vals.size() >= 2) units.push_back(vals);
  }
  std::vector<int> all;
  double d_o = 0.0;
  for (const auto& vals : units) {
    double dis = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      for (std::size_t j = 0; j < vals.size(); ++j) dis += (i != j && vals[i] != vals[j]);
    }
    d_o += dis / static_cast<double>(vals.size() - 1);
    all.insert(all.end(), vals.begin(), vals.end());
  }
  const double n = static_cast<double>(all.size());
  d_o /= n;
  double d_e = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = 0; j < all.size(); ++j) d_e += (i != j && all[i] != all[j]);
  }
  d_e /= n * (n - 1);
  return 1.0 - d_o / d_e;
}

}  // namespace oracle
