#include "persona/rouge.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "persona/util.hpp"

namespace persona {

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (c < 0x80 && std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
  }
  return split_ws(cleaned);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge(std::string_view hypothesis, std::string_view reference, RougeVariant variant) {
  RougeScore s;
  s.variant = variant;
  const auto hyp = rouge_tokens(hypothesis);
  const auto ref = rouge_tokens(reference);
  if (hyp.empty() || ref.empty()) return s;

  std::size_t overlap = 0;
  if (variant == RougeVariant::Rouge1) {
    std::unordered_map<std::string, std::size_t> ref_counts;
    for (const auto& t : ref) ++ref_counts[t];
    for (const auto& t : hyp) {
      auto it = ref_counts.find(t);
      if (it != ref_counts.end() && it->second > 0) {
        --it->second;
        ++overlap;
      }
    }
  } else {
    overlap = lcs_length(hyp, ref);
  }
  s.precision = static_cast<double>(overlap) / static_cast<double>(hyp.size());
  s.recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace persona
