#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace persona {

enum class RougeVariant { Rouge1, RougeL };

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  RougeVariant variant = RougeVariant::Rouge1;
};

/// Lowercase, delete ASCII punctuation, split on whitespace. No stemming.
std::vector<std::string> rouge_tokens(std::string_view text);

/// Unigram overlap (clipped counts) or LCS-based P/R/F1 of `hypothesis`
/// against `reference`. Empty input on either side scores zero.
RougeScore rouge(std::string_view hypothesis, std::string_view reference, RougeVariant variant = RougeVariant::Rouge1);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace persona
