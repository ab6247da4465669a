#include "lll/llltrain/model.hpp"

#include <stdexcept>

namespace lll::llltrain {

using numcore::Param;
using numcore::ParamStore;
using numcore::Rng;

void validate_model_configs(const tinylm::ModelConfig& mcfg, const std::optional<rvae::RvaeConfig>& acfg) {
  mcfg.validate();
  if (mcfg.has_adapter() != acfg.has_value())
    throw std::invalid_argument("model: adapter position and adapter config must be present together");
  if (acfg) {
    acfg->validate();
    if (acfg->d_model != mcfg.d_model)
      throw std::invalid_argument("model: adapter d_model " + std::to_string(acfg->d_model) +
                                  " does not match backbone d_model " + std::to_string(mcfg.d_model));
  }
}

Model Model::create(const tinylm::ModelConfig& mcfg, const std::optional<rvae::RvaeConfig>& acfg,
                    Rng& init_rng) {
  validate_model_configs(mcfg, acfg);
  Model m;
  m.mcfg = mcfg;
  m.acfg = acfg;
  m.lm = tinylm::LmParams::init(m.store, mcfg, init_rng, kBackbonePrefix);
  if (acfg) m.adapter = rvae::RvaeParams::init(m.store, *acfg, init_rng, kAdapterPrefix);
  return m;
}

Model Model::bind(const tinylm::ModelConfig& mcfg, const std::optional<rvae::RvaeConfig>& acfg,
                  ParamStore&& loaded) {
  validate_model_configs(mcfg, acfg);
  Model m;
  m.mcfg = mcfg;
  m.acfg = acfg;
  m.store = std::move(loaded);
  m.lm = tinylm::LmParams::bind(m.store, mcfg, kBackbonePrefix);
  if (acfg) m.adapter = rvae::RvaeParams::bind(m.store, *acfg, kAdapterPrefix);
  return m;
}

tinylm::AdapterHook Model::hook(rvae::Mode mode, Rng* noise, std::optional<int> condition,
                                rvae::RvaeOutput* capture) const {
  if (!has_adapter()) return {};
  const rvae::RvaeParams* params = &*adapter;
  const rvae::RvaeConfig* cfg = &*acfg;
  return [params, cfg, mode, noise, condition, capture](numcore::Graph& g, numcore::ValueRef h) {
    rvae::RvaeOutput out = rvae::rvae_forward(g, *params, *cfg, h, mode, noise, condition);
    if (capture) *capture = out;
    return out.h_out;
  };
}

std::optional<int> Model::condition_for(int task_id) const {
  if (!has_adapter() || !acfg->conditional) return std::nullopt;
  return task_id;
}

bool Model::is_adapter_param(const Param& p) { return p.name.rfind(kAdapterPrefix, 0) == 0; }
bool Model::is_backbone_param(const Param& p) { return p.name.rfind(kBackbonePrefix, 0) == 0; }

}  // namespace lll::llltrain
