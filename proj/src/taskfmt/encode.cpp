#include "lll/taskfmt/encode.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lll::taskfmt {

namespace {

using nlohmann::json;

void append(std::vector<int>& out, const std::vector<int>& part) {
  out.insert(out.end(), part.begin(), part.end());
}

// input = seq[:-1], target = seq[1:]; the mask selects target positions whose
// absolute index in `seq` lies in [lo, hi).
EncodedExample shifted(const std::vector<int>& seq, std::size_t lo, std::size_t hi, Kind kind) {
  EncodedExample e;
  e.kind = kind;
  e.input_ids.assign(seq.begin(), seq.end() - 1);
  e.target_ids.assign(seq.begin() + 1, seq.end());
  e.loss_mask.assign(seq.size() - 1, 0);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const std::size_t abs_index = t + 1;
    if (abs_index >= lo && abs_index < hi) e.loss_mask[t] = 1;
  }
  return e;
}

void check_length(const std::vector<int>& seq, int max_seq_len, const char* what) {
  if (static_cast<int>(seq.size()) > max_seq_len)
    throw std::length_error(std::string(what) + ": encoded length " + std::to_string(seq.size()) +
                            " exceeds max_seq_len " + std::to_string(max_seq_len));
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

bool has_special(const std::vector<int>& ids, const Vocab& v) {
  return std::any_of(ids.begin(), ids.end(), [&](int id) { return v.is_special(id); });
}

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::QA: return "qa";
    case Kind::LM: return "lm";
    case Kind::ID: return "id";
  }
  return "?";
}

std::size_t EncodedExample::active_positions() const {
  std::size_t n = 0;
  for (auto f : loss_mask) n += f ? 1 : 0;
  return n;
}

void validate_sample(const Sample& s, const Vocab& v) {
  if (s.task_id < 0 || s.task_id >= v.n_tasks())
    throw std::invalid_argument("sample: task id " + std::to_string(s.task_id) + " outside the " +
                                std::to_string(v.n_tasks()) + " known tasks");
  if (s.context.empty()) throw std::invalid_argument("sample: empty context");
  if (s.question.empty()) throw std::invalid_argument("sample: empty question");
  if (s.answer.empty()) throw std::invalid_argument("sample: empty answer");
  for (const auto* part : {&s.context, &s.question, &s.answer})
    if (has_special(*part, v)) throw std::invalid_argument("sample: special token inside content");
}

EncodedExample encode_qa(const Sample& s, const Vocab& v, int max_seq_len) {
  validate_sample(s, v);
  std::vector<int> seq;
  append(seq, s.context);
  append(seq, s.question);
  seq.push_back(v.ans());
  const std::size_t answer_start = seq.size();
  append(seq, s.answer);
  seq.push_back(v.eos());
  check_length(seq, max_seq_len, "encode_qa");
  return shifted(seq, answer_start, seq.size(), Kind::QA);
}

EncodedExample encode_lm(const Sample& s, const Vocab& v, int max_seq_len, bool use_task_token) {
  validate_sample(s, v);
  std::vector<int> seq;
  seq.push_back(use_task_token ? v.task_token(s.task_id) : v.gen());
  append(seq, s.context);
  append(seq, s.question);
  seq.push_back(v.ans());
  append(seq, s.answer);
  seq.push_back(v.eos());
  check_length(seq, max_seq_len, "encode_lm");
  return shifted(seq, 1, seq.size(), Kind::LM);
}

EncodedExample encode_id(const Sample& s, const Vocab& v, int max_seq_len) {
  validate_sample(s, v);
  std::vector<int> seq;
  append(seq, s.context);
  append(seq, v.identity_question());
  seq.push_back(v.ans2());
  const std::size_t target_start = seq.size();
  seq.push_back(v.task_token(s.task_id));
  seq.push_back(v.eos());
  check_length(seq, max_seq_len, "encode_id");
  return shifted(seq, target_start, seq.size(), Kind::ID);
}

std::optional<ParsedPseudo> parse_pseudo(const std::vector<int>& tokens, const Vocab& v) {
  if (tokens.empty()) return std::nullopt;
  const auto task = v.task_of_token(tokens[0]);
  if (!task) return std::nullopt;

  // Cut at the first [EOS]; anything after it is garbage by construction.
  std::vector<int> body(tokens.begin() + 1, tokens.end());
  if (auto eos = std::find(body.begin(), body.end(), v.eos()); eos != body.end()) body.erase(eos, body.end());

  const auto ans = std::find(body.begin(), body.end(), v.ans());
  if (ans == body.end()) return std::nullopt;
  std::vector<int> prefix(body.begin(), ans);
  std::vector<int> answer(ans + 1, body.end());
  if (answer.empty() || has_special(answer, v)) return std::nullopt;

  // The question is whichever canonical task question ends the prefix;
  // prefer the longest match in case one question string ends another.
  int matched = -1;
  std::size_t matched_len = 0;
  for (int k = 0; k < v.n_tasks(); ++k) {
    const auto& q = v.task_question(k);
    if (q.size() >= prefix.size()) continue;  // context must be non-empty
    if (std::equal(q.begin(), q.end(), prefix.end() - q.size()) && q.size() > matched_len) {
      matched = k;
      matched_len = q.size();
    }
  }
  if (matched < 0) return std::nullopt;

  ParsedPseudo out;
  out.sample.task_id = *task;
  out.sample.question.assign(prefix.end() - matched_len, prefix.end());
  out.sample.context.assign(prefix.begin(), prefix.end() - matched_len);
  out.sample.answer = std::move(answer);
  if (out.sample.context.empty() || has_special(out.sample.context, v)) return std::nullopt;
  out.corresponding = matched == *task;
  return out;
}

void write_samples_jsonl(const std::string& path, const std::vector<Sample>& samples, const Vocab& v) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot write " + path);
  for (const Sample& s : samples) {
    json rec{{"task", v.task_name(s.task_id)},
             {"context", v.decode_joined(s.context)},
             {"question", v.decode_joined(s.question)},
             {"answer", v.decode_joined(s.answer)}};
    f << rec.dump() << '\n';
  }
}

std::vector<Sample> read_samples_jsonl(const std::string& path, const Vocab& v) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = json::parse(line);
    for (const char* field : {"task", "context", "question", "answer"})
      if (!rec.contains(field))
        throw std::runtime_error("dataset: " + path + ":" + std::to_string(lineno) + " missing field " + field);
    Sample s;
    s.task_id = v.task_id_by_name(rec["task"].get<std::string>());
    s.context = v.encode(split_words(rec["context"].get<std::string>()));
    s.question = v.encode(split_words(rec["question"].get<std::string>()));
    s.answer = v.encode(split_words(rec["answer"].get<std::string>()));
    validate_sample(s, v);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lll::taskfmt
