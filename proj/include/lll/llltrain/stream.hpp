#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lll/llltrain/loss.hpp"
#include "lll/llltrain/replay.hpp"

namespace lll::llltrain {

// The named RNG streams of one run, all derived from the run seed.
// Keeping them separate means toggling one consumer (say, the adapter's
// sampling noise) leaves the others' draws untouched.
struct RngSet {
  numcore::Rng init, shuffle, noise, gen;

  static RngSet from_seed(std::uint64_t seed) {
    return RngSet{numcore::Rng::stream(seed, "init"), numcore::Rng::stream(seed, "shuffle"),
                  numcore::Rng::stream(seed, "noise"), numcore::Rng::stream(seed, "gen")};
  }
};

// One task in the training stream. The scorer maps (predicted answer tokens,
// gold answer tokens) to [0,1]; the harness supplies the task-appropriate
// metric.
struct TaskData {
  int task_id = -1;
  std::string name;
  std::vector<taskfmt::Sample> train, test;
  std::function<double(const std::vector<int>&, const std::vector<int>&)> scorer;
};

struct ReplayStats {
  int task_id = -1;
  int requested = 0, kept = 0, rejected = 0, attempts = 0;
  std::optional<double> correspondence;
};

struct StageResult {
  int stage = 0;  // 1-based position in the order
  int task_id = -1;
  std::vector<ReplayStats> replay;
  std::vector<double> scores;  // 0-100, per seen task (index = position in order)
  double avg_score = 0;
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  Phase phase = Phase::Joint;
  LossBreakdown loss;
};

struct RunResult {
  std::vector<int> order;  // task ids in training order
  std::vector<std::string> task_names;
  double gamma = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> curves;
  std::vector<StageResult> stages;
  std::vector<double> final_scores;  // per task, order positions
  double final_avg = 0;

  nlohmann::json to_json() const;
  static RunResult from_json(const nlohmann::json& j);
};

// State view handed to the checkpoint hooks.
struct StreamState {
  int stage = 0;       // 1-based
  int epoch = -1;      // last completed epoch within the stage, -1 before any
  const std::vector<taskfmt::Sample>* stage_data = nullptr;
  const std::vector<ReplayStats>* stage_replay = nullptr;  // stats of this stage's replay
  const RunResult* partial = nullptr;
};

struct StreamHooks {
  std::function<void(const nlohmann::json&)> log;  // one record per line
  std::function<void(const StreamState&)> on_epoch_end;
  std::function<void(const StreamState&)> on_stage_end;
};

// Mid-run continuation point (see the checkpoint module): training resumes at
// `stage` / `next_epoch`. A mid-stage point restores the stage's mixed
// dataset verbatim so the RNG streams stay aligned; a stage-boundary point
// (no stage_data) mixes the stage as usual, replay generation included.
struct ResumePoint {
  int stage = 1;
  int next_epoch = 0;
  std::optional<std::vector<taskfmt::Sample>> stage_data;
  std::vector<ReplayStats> stage_replay;  // stats of the in-progress stage's replay
  RunResult partial;
};

// Greedy-decoded score of `task`'s test split, 0-100.
double evaluate_task(const Model& model, const TaskData& task, const taskfmt::Vocab& vocab,
                     int eval_max_new);

// Sequential training over the task stream: replay generation before each
// later task, per-epoch phases from the schedule, per-stage evaluation of all
// seen tasks. Backbone-only epochs leave adapter parameters bitwise unchanged
// and vice versa.
RunResult train_stream(Model& model, numcore::AdamW& opt, RngSet& rngs,
                       const std::vector<TaskData>& tasks_in_order, const LllConfig& cfg,
                       const taskfmt::Vocab& vocab, const StreamHooks& hooks = {},
                       std::optional<ResumePoint> resume = std::nullopt);

}  // namespace lll::llltrain
