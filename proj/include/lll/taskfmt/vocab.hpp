#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace lll::taskfmt {

// Closed word-level vocabulary. Ids are assigned with the special tokens
// first ([PAD], [EOS], [ANS], [ANS2], [GEN], one task token per task), then
// the content words in sorted order, so the mapping is deterministic.
// The canonical per-task question strings and the shared identity question
// live here too: pseudo-sample parsing needs them as landmarks.
class Vocab {
 public:
  static Vocab build(const std::vector<std::string>& task_names,
                     const std::vector<std::vector<std::string>>& task_questions,
                     const std::vector<std::string>& identity_question,
                     std::vector<std::string> content_words);

  int id(const std::string& word) const;  // throws on unknown words
  const std::string& word(int id) const;
  bool contains(const std::string& word) const;
  int size() const { return static_cast<int>(words_.size()); }

  int n_tasks() const { return static_cast<int>(task_tokens_.size()); }
  const std::string& task_name(int k) const;
  int task_id_by_name(const std::string& name) const;

  int pad() const { return pad_; }
  int eos() const { return eos_; }
  int ans() const { return ans_; }
  int ans2() const { return ans2_; }
  int gen() const { return gen_; }
  int task_token(int k) const;
  bool is_special(int id) const { return id < n_specials_; }
  // Task index when `id` is a task token, nullopt otherwise.
  std::optional<int> task_of_token(int id) const;

  const std::vector<int>& task_question(int k) const;
  const std::vector<int>& identity_question() const { return identity_question_; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
  std::string decode_joined(const std::vector<int>& ids) const;

  // One token per line, specials first (the file order is the id order).
  void save(const std::string& path) const;
  // Rebuilds from a saved token list; task metadata is re-derived from the
  // task token lines and the provided question strings are re-validated.
  static Vocab load(const std::string& path, const std::vector<std::string>& task_names,
                    const std::vector<std::vector<std::string>>& task_questions,
                    const std::vector<std::string>& identity_question);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> task_names_;
  std::vector<int> task_tokens_;
  std::vector<std::vector<int>> task_questions_;
  std::vector<int> identity_question_;
  int pad_ = 0, eos_ = 0, ans_ = 0, ans2_ = 0, gen_ = 0;
  int n_specials_ = 0;
};

}  // namespace lll::taskfmt
