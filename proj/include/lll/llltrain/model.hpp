#pragma once

#include <optional>

#include "lll/rvae/adapter.hpp"
#include "lll/tinylm/model.hpp"

namespace lll::llltrain {

// The trainable composite: backbone plus optional adapter, all parameters in
// one store. Backbone parameters live under "lm.", adapter parameters under
// "rvae.", which is what the phase-dependent gradient filters key on.
struct Model {
  tinylm::ModelConfig mcfg;
  std::optional<rvae::RvaeConfig> acfg;
  numcore::ParamStore store;
  tinylm::LmParams lm;
  std::optional<rvae::RvaeParams> adapter;

  static constexpr const char* kBackbonePrefix = "lm.";
  static constexpr const char* kAdapterPrefix = "rvae.";

  static Model create(const tinylm::ModelConfig& mcfg, const std::optional<rvae::RvaeConfig>& acfg,
                      numcore::Rng& init_rng);
  // Rebinds parameter views after the store was populated externally
  // (checkpoint load). The store is moved in.
  static Model bind(const tinylm::ModelConfig& mcfg, const std::optional<rvae::RvaeConfig>& acfg,
                    numcore::ParamStore&& loaded);

  bool has_adapter() const { return adapter.has_value(); }

  // Adapter hook for one forward pass. `capture`, when given, receives the
  // pass's RvaeOutput so losses can be attached.
  tinylm::AdapterHook hook(rvae::Mode mode, numcore::Rng* noise, std::optional<int> condition,
                           rvae::RvaeOutput* capture = nullptr) const;
  // Condition to pass for a sample of `task_id` (nullopt when unconditional).
  std::optional<int> condition_for(int task_id) const;

  static bool is_adapter_param(const numcore::Param& p);
  static bool is_backbone_param(const numcore::Param& p);
};

void validate_model_configs(const tinylm::ModelConfig& mcfg, const std::optional<rvae::RvaeConfig>& acfg);

}  // namespace lll::llltrain
