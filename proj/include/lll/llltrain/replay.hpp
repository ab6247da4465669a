#pragma once

#include <optional>
#include <vector>

#include "lll/llltrain/model.hpp"
#include "lll/taskfmt/encode.hpp"

namespace lll::llltrain {

struct ReplayTaskPlan {
  int task_id = -1;
  int requested = 0;
  std::vector<taskfmt::Sample> samples;  // parsed, well-formed pseudo samples
  int kept_corresponding = 0;
  int rejected = 0;  // malformed generations
  int attempts = 0;

  bool shortfall() const { return static_cast<int>(samples.size()) < requested; }
  // Fraction of kept samples whose question matches the prompted task;
  // nullopt when nothing was kept.
  std::optional<double> correspondence_rate() const;
};

struct ReplayPlan {
  std::vector<ReplayTaskPlan> tasks;

  std::size_t total_samples() const;
  std::optional<double> overall_correspondence() const;
};

// Decodes `counts[i]` pseudo samples from the [TASK_k] prompt of each
// previous task, filtering malformed generations through parse_pseudo.
// Attempts are capped at three times the requested count per task; shortfalls
// are recorded in the plan, never thrown. Conditional adapters observe the
// prompted task id during generation.
ReplayPlan generate_replay(const Model& model, const taskfmt::Vocab& vocab,
                           const std::vector<int>& previous_tasks, const std::vector<int>& counts,
                           numcore::Rng& gen_rng, bool sample_decode);

}  // namespace lll::llltrain
