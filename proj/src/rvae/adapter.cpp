#include "lll/rvae/adapter.hpp"

#include <stdexcept>

namespace lll::rvae {

using numcore::Graph;
using numcore::ParamStore;
using numcore::Real;
using numcore::Rng;
using numcore::Tensor;
using numcore::ValueRef;

namespace {
constexpr Real kInitStd = Real(0.02);
}

ReconMode recon_mode_from_string(const std::string& s) {
  if (s == "mse") return ReconMode::Mse;
  if (s == "task-nll") return ReconMode::TaskNll;
  throw std::invalid_argument("recon mode: expected 'mse' or 'task-nll', got '" + s + "'");
}

const char* recon_mode_name(ReconMode m) { return m == ReconMode::Mse ? "mse" : "task-nll"; }

void RvaeConfig::validate() const {
  if (d_model <= 0) throw std::invalid_argument("rvae config: d_model must be positive");
  if (latent_dim < 1) throw std::invalid_argument("rvae config: latent_dim must be at least 1");
  if (alpha < 0 || alpha > 1) throw std::invalid_argument("rvae config: alpha must lie in [0,1]");
  if (rho < 0) throw std::invalid_argument("rvae config: rho must be non-negative");
  if (sigma_floor <= 0) throw std::invalid_argument("rvae config: sigma_floor must be positive");
  if (conditional && n_conditions <= 0)
    throw std::invalid_argument("rvae config: conditional mode needs n_conditions");
  if (conditional && cond_dim <= 0) throw std::invalid_argument("rvae config: cond_dim must be positive");
}

RvaeParams RvaeParams::init(ParamStore& store, const RvaeConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  const int d = cfg.d_model, z = cfg.latent_dim;
  RvaeParams p;
  p.ln_in_g = &store.add(prefix + "ln_in.g", Tensor::full({d}, 1));
  p.ln_in_b = &store.add(prefix + "ln_in.b", Tensor::zeros({d}));
  p.enc_mu_w = &store.add(prefix + "enc_mu.w", Tensor::randn({d, z}, rng, kInitStd));
  p.enc_mu_b = &store.add(prefix + "enc_mu.b", Tensor::zeros({z}));
  p.enc_sigma_w = &store.add(prefix + "enc_sigma.w", Tensor::randn({d, z}, rng, kInitStd));
  p.enc_sigma_b = &store.add(prefix + "enc_sigma.b", Tensor::zeros({z}));
  p.ln_mu_g = &store.add(prefix + "ln_mu.g", Tensor::full({z}, 1));
  p.ln_mu_b = &store.add(prefix + "ln_mu.b", Tensor::zeros({z}));
  const int dec_in = z + (cfg.conditional ? cfg.cond_dim : 0);
  p.dec_w = &store.add(prefix + "dec.w", Tensor::randn({dec_in, d}, rng, kInitStd));
  p.dec_b = &store.add(prefix + "dec.b", Tensor::zeros({d}));
  if (cfg.conditional) {
    p.cond_dec = &store.add(prefix + "cond_dec", Tensor::randn({cfg.n_conditions, cfg.cond_dim}, rng, kInitStd));
    p.cond_enc = &store.add(prefix + "cond_enc", Tensor::randn({cfg.n_conditions, d}, rng, kInitStd));
  }
  return p;
}

RvaeParams RvaeParams::bind(ParamStore& store, const RvaeConfig& cfg, const std::string& prefix) {
  cfg.validate();
  RvaeParams p;
  p.ln_in_g = &store.at(prefix + "ln_in.g");
  p.ln_in_b = &store.at(prefix + "ln_in.b");
  p.enc_mu_w = &store.at(prefix + "enc_mu.w");
  p.enc_mu_b = &store.at(prefix + "enc_mu.b");
  p.enc_sigma_w = &store.at(prefix + "enc_sigma.w");
  p.enc_sigma_b = &store.at(prefix + "enc_sigma.b");
  p.ln_mu_g = &store.at(prefix + "ln_mu.g");
  p.ln_mu_b = &store.at(prefix + "ln_mu.b");
  p.dec_w = &store.at(prefix + "dec.w");
  p.dec_b = &store.at(prefix + "dec.b");
  if (cfg.conditional) {
    p.cond_dec = &store.at(prefix + "cond_dec");
    p.cond_enc = &store.at(prefix + "cond_enc");
  }
  return p;
}

RvaeOutput rvae_forward(Graph& g, const RvaeParams& p, const RvaeConfig& cfg, ValueRef h_in, Mode mode,
                        Rng* noise, std::optional<int> condition) {
  cfg.validate();
  const Tensor& th = g.value(h_in);
  if (th.shape.size() != 2 || th.shape[1] != cfg.d_model)
    throw std::invalid_argument("rvae_forward: hidden state " + numcore::shape_str(th.shape) +
                                " does not match d_model " + std::to_string(cfg.d_model));
  if (cfg.conditional && !condition)
    throw std::invalid_argument("rvae_forward: conditional adapter requires a condition index");
  if (!cfg.conditional && condition)
    throw std::invalid_argument("rvae_forward: condition supplied to an unconditional adapter");
  if (condition && (*condition < 0 || *condition >= cfg.n_conditions))
    throw std::out_of_range("rvae_forward: condition index " + std::to_string(*condition) +
                            " outside " + std::to_string(cfg.n_conditions) + " conditions");
  if (mode == Mode::Train && !noise)
    throw std::invalid_argument("rvae_forward: train mode requires a noise source");

  const int t = th.shape[0];

  ValueRef x = g.layernorm(h_in, g.leaf(p.ln_in_g->tensor), g.leaf(p.ln_in_b->tensor));
  if (cfg.conditional)
    x = g.add(x, g.repeat_row(g.slice_rows(g.leaf(p.cond_enc->tensor), *condition, 1), t));

  ValueRef mu_pre = g.relu(g.add(g.matmul(x, g.leaf(p.enc_mu_w->tensor)), g.leaf(p.enc_mu_b->tensor)));
  ValueRef mu = g.layernorm(mu_pre, g.leaf(p.ln_mu_g->tensor), g.leaf(p.ln_mu_b->tensor));
  ValueRef sigma = g.add_scalar(
      g.relu(g.add(g.matmul(x, g.leaf(p.enc_sigma_w->tensor)), g.leaf(p.enc_sigma_b->tensor))),
      cfg.sigma_floor);

  ValueRef z;
  if (mode == Mode::Train) {
    Tensor eps = Tensor::randn({t, cfg.latent_dim}, *noise, 1);
    z = g.add(mu, g.mul(sigma, g.constant(std::move(eps))));
  } else {
    z = mu;
  }

  ValueRef dec_in = z;
  if (cfg.conditional)
    dec_in = g.concat_cols({z, g.repeat_row(g.slice_rows(g.leaf(p.cond_dec->tensor), *condition, 1), t)});
  ValueRef decoded = g.add(g.matmul(dec_in, g.leaf(p.dec_w->tensor)), g.leaf(p.dec_b->tensor));

  ValueRef h_out;
  if (cfg.alpha == Real(1)) {
    h_out = h_in;  // exact passthrough
  } else if (cfg.alpha == Real(0)) {
    h_out = decoded;
  } else {
    h_out = g.add(g.scale(h_in, cfg.alpha), g.scale(decoded, Real(1) - cfg.alpha));
  }

  RvaeOutput out;
  out.h_in = h_in;
  out.h_out = h_out;
  out.mu = mu;
  out.sigma = sigma;
  out.z = z;
  out.decoded = decoded;
  out.kl_per_dim = kl_per_dimension(g, mu, sigma);
  return out;
}

ValueRef kl_per_dimension(Graph& g, ValueRef mu, ValueRef sigma) {
  const Tensor& tm = g.value(mu);
  const Tensor& ts = g.value(sigma);
  if (tm.shape != ts.shape || tm.shape.size() != 2)
    throw std::invalid_argument("kl_per_dimension: mu " + numcore::shape_str(tm.shape) + " and sigma " +
                                numcore::shape_str(ts.shape) + " must be equal rank-2 shapes");
  for (Real s : ts.data)
    if (!(s > Real(0)))
      throw std::domain_error("kl_per_dimension: non-positive sigma " + std::to_string(s));
  // (mu^2 + sigma^2 - log sigma^2 - 1) / 2, then mean over positions
  ValueRef per_pos = g.scale(
      g.add_scalar(g.sub(g.add(g.square(mu), g.square(sigma)), g.scale(g.log(sigma), 2)), -1),
      Real(0.5));
  return g.mean_rows(per_pos);
}

ValueRef free_bits_kl(Graph& g, ValueRef kl_per_dim, Real rho) {
  const Tensor& tk = g.value(kl_per_dim);
  if (tk.shape.size() != 1)
    throw std::invalid_argument("free_bits_kl: expected a [latent] vector, got " + numcore::shape_str(tk.shape));
  return g.sum_all(g.max_const(kl_per_dim, rho));
}

ValueRef rvae_aux_loss(Graph& g, const RvaeOutput& out, ReconMode mode, Real rho) {
  ValueRef fb = free_bits_kl(g, out.kl_per_dim, rho);
  switch (mode) {
    case ReconMode::TaskNll:
      return fb;
    case ReconMode::Mse:
      return g.add(g.mean_all(g.square(g.sub(out.decoded, out.h_in))), fb);
  }
  throw std::invalid_argument("rvae_aux_loss: unknown reconstruction mode");
}

}  // namespace lll::rvae
