#pragma once

#include <string>
#include <vector>

namespace lll::bench {

// Lowercases, then drops punctuation tokens and the articles a/an/the.
std::vector<std::string> normalize_text(const std::vector<std::string>& words);

// Exact match of the normalized token sequences.
double score_em(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

// Token-multiset F1 after normalization. Both empty scores 1, one empty 0.
double score_nf1(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

}  // namespace lll::bench
