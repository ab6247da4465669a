#pragma once

#include <string>

#include "lll/bench/tasks.hpp"
#include "lll/cli/checkpoint.hpp"
#include "lll/cli/runconfig.hpp"

namespace lll::cli {

// A run directory holds: config.txt (written before training), runlog.jsonl,
// last.ckpt (refreshed each epoch), stage<k>.ckpt + final.ckpt, and
// runresult.json (the RunResult plus the post-training generation
// diagnostic).
struct RunArtifacts {
  llltrain::RunResult result;
  nlohmann::json result_json;  // what runresult.json holds
  std::string out_dir;
};

// Executes one training run described by `cfg` into `out_dir`. When
// `resume_from` names a checkpoint, training continues from it; the
// checkpoint's config digest must match `cfg` exactly.
RunArtifacts run_one(const RunConfig& cfg, const std::string& out_dir,
                     const std::string& resume_from = "", bool verbose = false);

// Shared pieces, also used by eval/generate on loaded checkpoints.
struct RunSetup {
  taskfmt::Vocab vocab;
  std::vector<bench::ToyTask> suite;
  std::vector<int> order;                     // task ids in training order
  std::vector<llltrain::TaskData> tasks;      // in training order
};

RunSetup build_setup(const RunConfig& cfg);

// Post-training diagnostic: generates `count` pseudo samples per task from
// the current model and reports the plan's parse/correspondence statistics.
nlohmann::json generation_diagnostic(const llltrain::Model& model, const taskfmt::Vocab& vocab,
                                     const RunSetup& setup, int count, std::uint64_t seed,
                                     bool sample_decode);

// Moves the checkpoint's parameter store into a bound model; the other
// checkpoint fields stay usable.
llltrain::Model model_from_checkpoint(Checkpoint& ck, const RunConfig& cfg, int vocab_size,
                                      int n_tasks);

}  // namespace lll::cli
