#include "lll/bench/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace lll::bench {

namespace {

bool is_punct_token(const std::string& w) {
  return std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::ispunct(c); });
}

bool is_article(const std::string& w) { return w == "a" || w == "an" || w == "the"; }

}  // namespace

std::vector<std::string> normalize_text(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const std::string& w : words) {
    std::string lower = w;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower.empty() || is_punct_token(lower) || is_article(lower)) continue;
    out.push_back(std::move(lower));
  }
  return out;
}

double score_em(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  return normalize_text(pred) == normalize_text(gold) ? 1.0 : 0.0;
}

double score_nf1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  const auto p = normalize_text(pred);
  const auto g = normalize_text(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> pc, gc;
  for (const auto& w : p) ++pc[w];
  for (const auto& w : g) ++gc[w];
  int overlap = 0;
  for (const auto& [w, n] : pc) {
    auto it = gc.find(w);
    if (it != gc.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace lll::bench
