#pragma once

#include <cstdint>
#include <string>

#include "lll/numcore/tensor.hpp"
#include "lll/rvae/adapter.hpp"

namespace lll::llltrain {

// Training modes: naive joint training, the three single-turn splits, and
// the multi-turn alternate-lag schedule.
enum class TrainMode { Naive, AltM1, AltM1Rev, AltM1Star, Alt };

TrainMode mode_from_string(const std::string& s);
const char* mode_name(TrainMode m);

enum class Phase { BackboneOnly, Joint, AdapterOnly };

const char* phase_name(Phase p);
Phase phase_from_string(const std::string& s);

struct LllConfig {
  numcore::Real lambda_lm = numcore::Real(0.25);  // LM task weight
  numcore::Real beta_id = numcore::Real(0.5);     // ID task weight
  numcore::Real gamma = numcore::Real(0);         // replay sampling ratio in [0,1]
  int epochs_per_task = 24;
  int alt_turns = 3;  // M
  TrainMode mode = TrainMode::Naive;
  // The multi-turn schedule trains the adapter alone in each turn's second
  // half; this switches those epochs to joint training instead.
  bool alt_joint_second_half = false;
  bool use_id_task = true;
  rvae::ReconMode recon_mode = rvae::ReconMode::Mse;
  int batch_size = 16;
  std::uint64_t seed = 1;
  bool replay_sample_decode = true;  // draw pseudo-sample tokens; greedy when false
  int eval_max_new = 8;
  int lr_warmup_steps = 0;  // linear optimizer warmup over this many steps

  void validate(bool has_adapter) const;
};

// Phase of a 0-based epoch under the configured schedule. In the multi-turn
// mode the epochs split into M equal turns, each half backbone-only and half
// adapter-only (or joint, see alt_joint_second_half).
Phase phase_for_epoch(int epoch, const LllConfig& cfg);

// floor(gamma * new_task_size / (t - 1)) pseudo samples for each of the t-1
// previously learned tasks.
int pseudo_count(numcore::Real gamma, int t, int new_task_size);

}  // namespace lll::llltrain
