#pragma once

#include <optional>
#include <string>

#include "lll/numcore/adamw.hpp"
#include "lll/numcore/graph.hpp"
#include "lll/numcore/rng.hpp"

namespace lll::rvae {

enum class ReconMode { Mse, TaskNll };

ReconMode recon_mode_from_string(const std::string& s);
const char* recon_mode_name(ReconMode m);

struct RvaeConfig {
  int d_model = 0;
  int latent_dim = 100;
  numcore::Real alpha = numcore::Real(0.5);  // mixing factor: alpha*h + (1-alpha)*decoded
  numcore::Real rho = numcore::Real(0.2);    // free-bits target rate
  bool conditional = false;
  int n_conditions = 0;  // number of task tokens, conditional only
  int cond_dim = 16;
  // Added after the encoder's relu so sigma stays strictly positive.
  numcore::Real sigma_floor = numcore::Real(1e-4);

  void validate() const;
};

// Encoder and decoder are each a single linear map; layer normalization
// stabilizes the encoder input and the posterior mean.
struct RvaeParams {
  numcore::Param *enc_mu_w = nullptr, *enc_mu_b = nullptr;        // [d, z], [z]
  numcore::Param *enc_sigma_w = nullptr, *enc_sigma_b = nullptr;  // [d, z], [z]
  numcore::Param *dec_w = nullptr, *dec_b = nullptr;              // [z(+c), d], [d]
  numcore::Param *ln_in_g = nullptr, *ln_in_b = nullptr;          // [d]
  numcore::Param *ln_mu_g = nullptr, *ln_mu_b = nullptr;          // [z]
  numcore::Param *cond_dec = nullptr;  // [n_conditions, cond_dim], concatenated to z
  numcore::Param *cond_enc = nullptr;  // [n_conditions, d], added after the input LN

  static RvaeParams init(numcore::ParamStore& store, const RvaeConfig& cfg, numcore::Rng& rng,
                         const std::string& prefix = "rvae.");
  static RvaeParams bind(numcore::ParamStore& store, const RvaeConfig& cfg,
                         const std::string& prefix = "rvae.");
};

enum class Mode { Train, Eval };

struct RvaeOutput {
  numcore::ValueRef h_in, h_out;
  numcore::ValueRef mu, sigma, z;  // [seq, latent]
  numcore::ValueRef kl_per_dim;    // [latent], averaged over positions
  numcore::ValueRef decoded;       // [seq, d_model]
};

// One adapter pass over a hidden-state block. Train mode draws z through the
// reparameterization trick from `noise`; eval mode uses the posterior mean.
RvaeOutput rvae_forward(numcore::Graph& g, const RvaeParams& p, const RvaeConfig& cfg,
                        numcore::ValueRef h_in, Mode mode, numcore::Rng* noise,
                        std::optional<int> condition = std::nullopt);

// Per-dimension KL against N(0, I): mean over positions of
// (mu^2 + sigma^2 - log sigma^2 - 1) / 2.
numcore::ValueRef kl_per_dimension(numcore::Graph& g, numcore::ValueRef mu, numcore::ValueRef sigma);

// Free-bits hinge: sum_i max(rho, kl_i).
numcore::ValueRef free_bits_kl(numcore::Graph& g, numcore::ValueRef kl_per_dim, numcore::Real rho);

// Reconstruction term plus free-bits KL. In TaskNll mode the reconstruction
// term is zero: the downstream task loss through the mixed hidden state plays
// that role.
numcore::ValueRef rvae_aux_loss(numcore::Graph& g, const RvaeOutput& out, ReconMode mode,
                                numcore::Real rho);

}  // namespace lll::rvae
