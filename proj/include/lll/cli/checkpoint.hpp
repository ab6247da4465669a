#pragma once

#include <string>

#include "lll/cli/runconfig.hpp"
#include "lll/llltrain/stream.hpp"

namespace lll::cli {

// Everything needed to continue a run bit for bit: parameters with their
// optimizer moments, the optimizer step count, all RNG stream states, and the
// in-progress stage (mixed dataset included, so replay is not regenerated).
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string config_text;  // canonical RunConfig text
  std::string digest;
  std::string stage_label;
  int stage = 1;        // 1-based stage the run is inside
  int next_epoch = 0;   // first epoch not yet trained in that stage
  bool finished = false;

  numcore::ParamStore store;  // parameters + AdamW moments
  long opt_step = 0;
  std::array<std::uint64_t, 4> rng_init{}, rng_shuffle{}, rng_noise{}, rng_gen{};

  std::vector<taskfmt::Sample> stage_data;
  std::vector<llltrain::ReplayStats> stage_replay;
  nlohmann::json partial_result;  // RunResult::to_json of the completed part

  RunConfig config() const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lll::cli
