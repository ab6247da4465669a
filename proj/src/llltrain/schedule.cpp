#include "lll/llltrain/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace lll::llltrain {

TrainMode mode_from_string(const std::string& s) {
  if (s == "naive") return TrainMode::Naive;
  if (s == "alt_m1") return TrainMode::AltM1;
  if (s == "alt_m1_rev") return TrainMode::AltM1Rev;
  if (s == "alt_m1_star") return TrainMode::AltM1Star;
  if (s == "alt") return TrainMode::Alt;
  throw std::invalid_argument("train mode: expected naive|alt_m1|alt_m1_rev|alt_m1_star|alt, got '" + s + "'");
}

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Naive: return "naive";
    case TrainMode::AltM1: return "alt_m1";
    case TrainMode::AltM1Rev: return "alt_m1_rev";
    case TrainMode::AltM1Star: return "alt_m1_star";
    case TrainMode::Alt: return "alt";
  }
  return "?";
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::BackboneOnly: return "backbone";
    case Phase::Joint: return "joint";
    case Phase::AdapterOnly: return "adapter";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  if (s == "backbone") return Phase::BackboneOnly;
  if (s == "joint") return Phase::Joint;
  if (s == "adapter") return Phase::AdapterOnly;
  throw std::invalid_argument("phase: expected backbone|joint|adapter, got '" + s + "'");
}

void LllConfig::validate(bool has_adapter) const {
  if (lambda_lm < 0 || beta_id < 0) throw std::invalid_argument("lll config: task weights must be non-negative");
  if (gamma < 0 || gamma > 1) throw std::invalid_argument("lll config: gamma must lie in [0,1]");
  if (epochs_per_task < 1) throw std::invalid_argument("lll config: epochs_per_task must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("lll config: batch_size must be at least 1");
  if (eval_max_new < 1) throw std::invalid_argument("lll config: eval_max_new must be at least 1");
  if (lr_warmup_steps < 0) throw std::invalid_argument("lll config: lr_warmup_steps must be non-negative");
  if (mode != TrainMode::Naive && !has_adapter)
    throw std::invalid_argument(std::string("lll config: mode ") + mode_name(mode) + " requires an adapter");
  if (mode == TrainMode::Alt) {
    if (alt_turns < 1) throw std::invalid_argument("lll config: alt_turns must be at least 1");
    if (epochs_per_task % (2 * alt_turns) != 0)
      throw std::invalid_argument("lll config: epochs_per_task " + std::to_string(epochs_per_task) +
                                  " not divisible by 2*M = " + std::to_string(2 * alt_turns));
  } else if (mode != TrainMode::Naive && epochs_per_task % 2 != 0) {
    throw std::invalid_argument("lll config: single-turn modes need an even epochs_per_task");
  }
}

Phase phase_for_epoch(int epoch, const LllConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs_per_task)
    throw std::out_of_range("phase_for_epoch: epoch " + std::to_string(epoch) + " outside [0," +
                            std::to_string(cfg.epochs_per_task) + ")");
  const int half = cfg.epochs_per_task / 2;
  switch (cfg.mode) {
    case TrainMode::Naive: return Phase::Joint;
    case TrainMode::AltM1: return epoch < half ? Phase::BackboneOnly : Phase::Joint;
    case TrainMode::AltM1Rev: return epoch < half ? Phase::Joint : Phase::BackboneOnly;
    case TrainMode::AltM1Star: return epoch < half ? Phase::BackboneOnly : Phase::AdapterOnly;
    case TrainMode::Alt: {
      const int turn_len = cfg.epochs_per_task / cfg.alt_turns;
      const int pos = epoch % turn_len;
      if (pos < turn_len / 2) return Phase::BackboneOnly;
      return cfg.alt_joint_second_half ? Phase::Joint : Phase::AdapterOnly;
    }
  }
  throw std::logic_error("phase_for_epoch: unhandled mode");
}

int pseudo_count(numcore::Real gamma, int t, int new_task_size) {
  if (t < 2) throw std::invalid_argument("pseudo_count: task index " + std::to_string(t) + " must be at least 2");
  if (gamma < 0) throw std::invalid_argument("pseudo_count: gamma must be non-negative");
  if (new_task_size < 0) throw std::invalid_argument("pseudo_count: negative task size");
  return static_cast<int>(std::floor(static_cast<double>(gamma) * new_task_size / (t - 1)));
}

}  // namespace lll::llltrain
