#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lll/llltrain/stream.hpp"
#include "lll/taskfmt/encode.hpp"

namespace lll::bench {

enum class Metric { EM, NF1 };

const char* metric_name(Metric m);

// One synthetic task of the three-task suite. Generators are deterministic
// functions of (seed, index); train and test splits draw from disjoint index
// ranges of the same distribution.
struct ToyTask {
  int id = -1;
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::string> question;  // canonical TQ words
  std::string answer_space;
  Metric metric = Metric::EM;
};

// The suite: cls (sentiment-style keyword classification, EM), span (copy the
// two tokens after a marker, nF1), slot (request sentence to "slot : value",
// EM).
std::vector<ToyTask> toy_suite(std::uint64_t cls_seed = 101, std::uint64_t span_seed = 202,
                               std::uint64_t slot_seed = 303);

// Closed vocabulary covering everything the three generators can emit.
taskfmt::Vocab toy_vocab();

// Sentiment analog: one polarity keyword among fillers, balanced labels
// (ceil(n/2) positive). `index_base` selects the split.
std::vector<taskfmt::Sample> gen_task_cls(const taskfmt::Vocab& v, std::uint64_t seed, int n,
                                          int index_base = 0);
// SRL analog: answer is the two tokens following the "mark" token.
std::vector<taskfmt::Sample> gen_task_span(const taskfmt::Vocab& v, std::uint64_t seed, int n,
                                           int index_base = 0);
// Dialogue-state analog: request template with a slot value, answer
// "slotname : value".
std::vector<taskfmt::Sample> gen_task_slot(const taskfmt::Vocab& v, std::uint64_t seed, int n,
                                           int index_base = 0);

// Test splits start at this index so they never overlap training indices.
inline constexpr int kTestIndexBase = 1000000;

// Scoring callback (normalized, per the task's metric) over token ids.
std::function<double(const std::vector<int>&, const std::vector<int>&)> scorer_for(
    const ToyTask& task, const taskfmt::Vocab& v);

// Bundles a toy task into the training-stream form.
llltrain::TaskData make_task_data(const taskfmt::Vocab& v, const ToyTask& task, int n_train,
                                  int n_test);

// All six orderings of the three task ids.
std::vector<std::vector<int>> all_task_orders();

std::vector<int> parse_order(const std::string& names_csv, const std::vector<ToyTask>& suite);
std::string order_string(const std::vector<int>& order, const std::vector<ToyTask>& suite);

}  // namespace lll::bench
