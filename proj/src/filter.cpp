#include "persona/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "persona/error.hpp"
#include "persona/util.hpp"

namespace persona {

WindowSelection reward_window(const std::vector<Candidate>& candidates, std::size_t w) {
  if (w == 0) throw Error(Errc::PreconditionFailed, "reward_window: w must be >= 1");
  if (candidates.size() < w) {
    throw Error(Errc::TooFewCandidates, std::to_string(candidates.size()) + " candidates for window " + std::to_string(w));
  }
  std::vector<const Candidate*> sorted;
  for (const auto& c : candidates) {
    if (!c.reward || !std::isfinite(*c.reward)) throw Error(Errc::PreconditionFailed, c.id + ": missing or non-finite reward");
    sorted.push_back(&c);
  }
  std::sort(sorted.begin(), sorted.end(), [](const Candidate* a, const Candidate* b) {
    return *a->reward != *b->reward ? *a->reward < *b->reward : a->id < b->id;
  });

  std::size_t best = 0;
  double best_range = std::numeric_limits<double>::infinity();
  double best_mean = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + w <= sorted.size(); ++s) {
    const double range = *sorted[s + w - 1]->reward - *sorted[s]->reward;
    double sum = 0.0;
    for (std::size_t i = s; i < s + w; ++i) sum += *sorted[i]->reward;
    const double mean = sum / static_cast<double>(w);
    if (range < best_range || (range == best_range && mean > best_mean)) {
      best = s;
      best_range = range;
      best_mean = mean;
    }
  }
  WindowSelection out;
  out.window_start = best;
  out.range = best_range;
  for (std::size_t i = best; i < best + w; ++i) {
    out.selected_ids.push_back(sorted[i]->id);
    out.rewards.push_back(*sorted[i]->reward);
  }
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

std::size_t nearest(std::span<const double> p, const std::vector<Vec>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void check_points(const std::vector<Vec>& points, std::size_t k) {
  if (k == 0) throw Error(Errc::PreconditionFailed, "kmeans: k must be >= 1");
  if (points.size() < k) throw Error(Errc::PreconditionFailed, "kmeans: fewer points than clusters");
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw Error(Errc::DimensionMismatch, "kmeans: ragged points");
  }
}

}  // namespace

std::vector<Vec> kmeans_plus_plus(const std::vector<Vec>& points, std::size_t k, Rng& rng) {
  check_points(points, k);
  std::vector<Vec> centroids;
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(points.size());
    } else {
      double target = rng.uniform() * total;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        if (target < d2[i]) {
          pick = i;
          break;
        }
        target -= d2[i];
      }
      while (d2[pick] <= 0.0 && pick > 0) --pick;
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

KMeansResult lloyd(const std::vector<Vec>& points, std::vector<Vec> centroids, const KMeansOptions& opts) {
  const std::size_t k = centroids.size();
  check_points(points, k);
  const std::size_t dim = points.front().size();
  KMeansResult r;
  r.assignment.assign(points.size(), 0);

  for (int it = 0; it < opts.max_iter; ++it) {
    r.iterations = it + 1;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      r.assignment[i] = nearest(points[i], centroids);
      ++counts[r.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = points.size();
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (r.assignment[i] != donor) continue;
        const double d = squared_distance(points[i], centroids[donor]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.assignment[far] = c;
      --counts[donor];
      counts[c] = 1;
    }
    std::vector<Vec> next(k, Vec(dim, 0.0));
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) next[r.assignment[i]][d] += points[i][d];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      for (double& v : next[c]) v /= static_cast<double>(counts[c]);
      shift = std::max(shift, std::sqrt(squared_distance(next[c], centroids[c])));
    }
    centroids = std::move(next);
    if (shift < opts.tol) break;
  }
  r.centroids = std::move(centroids);
  r.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) r.inertia += squared_distance(points[i], r.centroids[r.assignment[i]]);
  return r;
}

KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed, const KMeansOptions& opts) {
  check_points(points, k);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  Rng rng(derive_seed(seed, "kmeans"));
  for (int restart = 0; restart < std::max(1, opts.restarts); ++restart) {
    auto result = lloyd(points, kmeans_plus_plus(points, k, rng), opts);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

FarthestMode parse_farthest_mode(const std::string& s) {
  if (s == "sum") return FarthestMode::Sum;
  if (s == "min") return FarthestMode::Min;
  throw Error(Errc::ConfigError, "farthest mode must be sum|min, got " + s);
}

std::string to_string(FarthestMode m) { return m == FarthestMode::Sum ? "sum" : "min"; }

double farthest_score(std::span<const double> point, const std::vector<Vec>& centroids, std::size_t own, FarthestMode mode) {
  double acc = mode == FarthestMode::Sum ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (c == own) continue;
    const double d = std::sqrt(squared_distance(point, centroids[c]));
    acc = mode == FarthestMode::Sum ? acc + d : std::min(acc, d);
  }
  return std::isfinite(acc) ? acc : 0.0;
}

DiversitySelection diverse_select(const std::vector<Candidate>& candidates, std::size_t k, std::uint64_t seed,
                                  FarthestMode mode, const KMeansOptions& opts) {
  if (candidates.size() < k) throw Error(Errc::PreconditionFailed, "diverse_select: fewer candidates than k");
  std::vector<Vec> points;
  for (const auto& c : candidates) {
    if (!c.embedding) throw Error(Errc::PreconditionFailed, c.id + ": missing embedding");
    points.push_back(EmbeddingVec::normalized(c.embedding->values).values);
  }

  DiversitySelection out;
  std::vector<std::size_t> assignment;
  if (k == candidates.size()) {
    assignment.resize(k);
    std::iota(assignment.begin(), assignment.end(), 0);
    out.centroids = points;
  } else {
    auto km = kmeans(points, k, seed, opts);
    assignment = std::move(km.assignment);
    out.centroids = std::move(km.centroids);
  }

  std::vector<std::size_t> best(k, candidates.size());
  std::vector<double> best_score(k, -1.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::size_t c = assignment[i];
    const double s = farthest_score(points[i], out.centroids, c, mode);
    out.cluster_of[candidates[i].id] = c;
    out.farthest_score[candidates[i].id] = s;
    if (best[c] == candidates.size() || s > best_score[c] ||
        (s == best_score[c] && candidates[i].id < candidates[best[c]].id)) {
      best[c] = i;
      best_score[c] = s;
    }
  }
  for (std::size_t c = 0; c < k; ++c) out.finalist_ids.push_back(candidates[best[c]].id);
  return out;
}

}  // namespace persona
