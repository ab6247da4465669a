#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lll/taskfmt/vocab.hpp"

namespace lll::taskfmt {

// One QA-format example. All fields are token ids over a Vocab.
struct Sample {
  int task_id = -1;
  std::vector<int> context;
  std::vector<int> question;
  std::vector<int> answer;

  bool operator==(const Sample&) const = default;
};

enum class Kind { QA, LM, ID };

const char* kind_name(Kind k);

// Next-token training view of a sample: input_ids feed the model, target_ids
// are the inputs shifted by one, loss_mask says which target positions count.
struct EncodedExample {
  std::vector<int> input_ids;
  std::vector<int> target_ids;
  std::vector<std::uint8_t> loss_mask;
  Kind kind = Kind::QA;

  std::size_t active_positions() const;
};

void validate_sample(const Sample& s, const Vocab& v);

// C + TQ + [ANS] + A + [EOS]; loss on the answer and [EOS] only.
EncodedExample encode_qa(const Sample& s, const Vocab& v, int max_seq_len);
// [TASK_k] (or [GEN]) + C + TQ + [ANS] + A + [EOS]; loss on everything after
// the leading token.
EncodedExample encode_lm(const Sample& s, const Vocab& v, int max_seq_len, bool use_task_token);
// C + IDQ + [ANS2] + [TASK_k] + [EOS]; loss on [TASK_k] and [EOS].
EncodedExample encode_id(const Sample& s, const Vocab& v, int max_seq_len);

struct ParsedPseudo {
  Sample sample;
  // True when the question matches the canonical question of the task named
  // by the leading task token.
  bool corresponding = false;
};

// Splits a generated [TASK_k]-prefixed token sequence on the question and
// [ANS] landmarks. Returns nullopt for malformed sequences (missing
// landmarks, empty parts, stray special tokens).
std::optional<ParsedPseudo> parse_pseudo(const std::vector<int>& tokens, const Vocab& v);

// Dataset files: one record per line with fields task, context, question,
// answer (words, space separated).
void write_samples_jsonl(const std::string& path, const std::vector<Sample>& samples, const Vocab& v);
std::vector<Sample> read_samples_jsonl(const std::string& path, const Vocab& v);

}  // namespace lll::taskfmt
