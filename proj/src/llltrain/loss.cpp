#include "lll/llltrain/loss.hpp"

#include <stdexcept>

namespace lll::llltrain {

using numcore::Graph;
using numcore::Real;
using numcore::Rng;
using numcore::ValueRef;

EncodedItem encode_item(const taskfmt::Sample& s, const taskfmt::Vocab& v, int max_seq_len,
                        bool use_id_task) {
  EncodedItem item;
  item.task_id = s.task_id;
  item.qa = taskfmt::encode_qa(s, v, max_seq_len);
  item.lm = taskfmt::encode_lm(s, v, max_seq_len, /*use_task_token=*/true);
  if (use_id_task) item.id = taskfmt::encode_id(s, v, max_seq_len);
  return item;
}

namespace {

ValueRef mean_of(Graph& g, const std::vector<ValueRef>& refs) {
  return g.scale(g.add_many(refs), Real(1) / static_cast<Real>(refs.size()));
}

}  // namespace

ValueRef composite_loss(Graph& g, const Model& model, std::span<const EncodedItem> batch,
                        const LllConfig& cfg, Phase phase, Rng* noise, LossBreakdown* breakdown) {
  if (batch.empty()) throw std::invalid_argument("composite_loss: empty batch");

  const bool vae_active = model.has_adapter() && phase != Phase::BackboneOnly;
  std::vector<ValueRef> nll[3];
  std::vector<ValueRef> kl[3];
  std::vector<ValueRef> recon[3];

  auto run_pass = [&](int slot, const taskfmt::EncodedExample& e, int task_id) {
    rvae::RvaeOutput aux;
    tinylm::AdapterHook hook = model.hook(rvae::Mode::Train, noise, model.condition_for(task_id),
                                          vae_active ? &aux : nullptr);
    ValueRef logits = tinylm::lm_forward(g, model.lm, model.mcfg, e.input_ids, hook);
    nll[slot].push_back(tinylm::lm_nll(g, logits, e.target_ids, e.loss_mask));
    if (vae_active) {
      kl[slot].push_back(rvae::free_bits_kl(g, aux.kl_per_dim, model.acfg->rho));
      if (cfg.recon_mode == rvae::ReconMode::Mse)
        recon[slot].push_back(g.mean_all(g.square(g.sub(aux.decoded, aux.h_in))));
    }
  };

  for (const EncodedItem& item : batch) {
    run_pass(0, item.qa, item.task_id);
    run_pass(1, item.lm, item.task_id);
    if (cfg.use_id_task) {
      if (!item.id) throw std::invalid_argument("composite_loss: ID task enabled but batch lacks ID encodings");
      run_pass(2, *item.id, item.task_id);
    }
  }

  const Real weights[3] = {Real(1), cfg.lambda_lm, cfg.beta_id};
  std::vector<ValueRef> terms;
  ValueRef nll_mean[3];
  ValueRef kl_comb{}, recon_comb{};
  for (int s = 0; s < 3; ++s) {
    if (nll[s].empty()) continue;
    nll_mean[s] = mean_of(g, nll[s]);
    terms.push_back(g.scale(nll_mean[s], weights[s]));
    if (!kl[s].empty()) {
      ValueRef k = g.scale(mean_of(g, kl[s]), weights[s]);
      kl_comb = kl_comb.valid() ? g.add(kl_comb, k) : k;
    }
    if (!recon[s].empty()) {
      ValueRef r = g.scale(mean_of(g, recon[s]), weights[s]);
      recon_comb = recon_comb.valid() ? g.add(recon_comb, r) : r;
    }
  }
  if (kl_comb.valid()) terms.push_back(kl_comb);
  if (recon_comb.valid()) terms.push_back(recon_comb);
  ValueRef total = g.add_many(terms);

  if (breakdown) {
    breakdown->total = g.scalar_value(total);
    breakdown->qa = g.scalar_value(nll_mean[0]);
    breakdown->lm = g.scalar_value(nll_mean[1]);
    breakdown->id = nll[2].empty() ? 0 : g.scalar_value(nll_mean[2]);
    breakdown->kl = kl_comb.valid() ? g.scalar_value(kl_comb) : 0;
    breakdown->recon = recon_comb.valid() ? g.scalar_value(recon_comb) : 0;
  }
  return total;
}

}  // namespace lll::llltrain
