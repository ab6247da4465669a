#include "lll/taskfmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace lll::taskfmt {

namespace {

std::string task_token_string(const std::string& name) { return "__" + name + "__"; }

constexpr const char* kPad = "__pad__";
constexpr const char* kEos = "__eos__";
constexpr const char* kAns = "__ans__";
constexpr const char* kAns2 = "__ans2__";
constexpr const char* kGen = "__gen__";

}  // namespace

Vocab Vocab::build(const std::vector<std::string>& task_names,
                   const std::vector<std::vector<std::string>>& task_questions,
                   const std::vector<std::string>& identity_question,
                   std::vector<std::string> content_words) {
  if (task_names.empty()) throw std::invalid_argument("vocab: at least one task required");
  if (task_questions.size() != task_names.size())
    throw std::invalid_argument("vocab: one canonical question per task required");

  Vocab v;
  auto push = [&v](const std::string& w) {
    if (v.ids_.count(w)) throw std::invalid_argument("vocab: duplicate token " + w);
    v.ids_[w] = static_cast<int>(v.words_.size());
    v.words_.push_back(w);
  };

  push(kPad);
  push(kEos);
  push(kAns);
  push(kAns2);
  push(kGen);
  v.pad_ = 0;
  v.eos_ = 1;
  v.ans_ = 2;
  v.ans2_ = 3;
  v.gen_ = 4;
  for (const std::string& name : task_names) {
    v.task_tokens_.push_back(static_cast<int>(v.words_.size()));
    push(task_token_string(name));
  }
  v.task_names_ = task_names;
  v.n_specials_ = static_cast<int>(v.words_.size());

  std::sort(content_words.begin(), content_words.end());
  content_words.erase(std::unique(content_words.begin(), content_words.end()), content_words.end());
  for (const std::string& w : content_words) {
    if (w.rfind("__", 0) == 0) throw std::invalid_argument("vocab: content word " + w + " clashes with special style");
    push(w);
  }

  for (const auto& q : task_questions) v.task_questions_.push_back(v.encode(q));
  v.identity_question_ = v.encode(identity_question);
  for (std::size_t i = 0; i < v.task_questions_.size(); ++i) {
    if (v.task_questions_[i].empty()) throw std::invalid_argument("vocab: empty canonical question");
    for (std::size_t j = 0; j < i; ++j)
      if (v.task_questions_[i] == v.task_questions_[j])
        throw std::invalid_argument("vocab: canonical questions must be distinct per task");
  }
  if (v.identity_question_.empty()) throw std::invalid_argument("vocab: empty identity question");
  return v;
}

int Vocab::id(const std::string& word) const {
  auto it = ids_.find(word);
  if (it == ids_.end()) throw std::out_of_range("vocab: unknown word '" + word + "'");
  return it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " outside vocabulary");
  return words_[id];
}

bool Vocab::contains(const std::string& word) const { return ids_.count(word) > 0; }

const std::string& Vocab::task_name(int k) const {
  if (k < 0 || k >= n_tasks()) throw std::out_of_range("vocab: task index " + std::to_string(k));
  return task_names_[k];
}

int Vocab::task_id_by_name(const std::string& name) const {
  for (int k = 0; k < n_tasks(); ++k)
    if (task_names_[k] == name) return k;
  throw std::out_of_range("vocab: unknown task name '" + name + "'");
}

int Vocab::task_token(int k) const {
  if (k < 0 || k >= n_tasks()) throw std::out_of_range("vocab: task index " + std::to_string(k));
  return task_tokens_[k];
}

std::optional<int> Vocab::task_of_token(int id) const {
  for (int k = 0; k < n_tasks(); ++k)
    if (task_tokens_[k] == id) return k;
  return std::nullopt;
}

const std::vector<int>& Vocab::task_question(int k) const {
  if (k < 0 || k >= n_tasks()) throw std::out_of_range("vocab: task index " + std::to_string(k));
  return task_questions_[k];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const std::string& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(word(i));
  return out;
}

std::string Vocab::decode_joined(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot write " + path);
  for (const std::string& w : words_) f << w << '\n';
}

Vocab Vocab::load(const std::string& path, const std::vector<std::string>& task_names,
                  const std::vector<std::vector<std::string>>& task_questions,
                  const std::vector<std::string>& identity_question) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) lines.push_back(line);

  const int n_specials = 5 + static_cast<int>(task_names.size());
  if (static_cast<int>(lines.size()) < n_specials)
    throw std::runtime_error("vocab: file " + path + " too short for the special tokens");
  std::vector<std::string> expected{kPad, kEos, kAns, kAns2, kGen};
  for (const std::string& name : task_names) expected.push_back(task_token_string(name));
  for (int i = 0; i < n_specials; ++i)
    if (lines[i] != expected[i])
      throw std::runtime_error("vocab: file " + path + " does not list special token " + expected[i] +
                               " at position " + std::to_string(i));

  std::vector<std::string> content(lines.begin() + n_specials, lines.end());
  Vocab v = build(task_names, task_questions, identity_question, std::move(content));
  if (v.words_ != lines) throw std::runtime_error("vocab: file " + path + " is not in canonical order");
  return v;
}

}  // namespace lll::taskfmt
