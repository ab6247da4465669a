#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lll/llltrain/schedule.hpp"
#include "lll/numcore/adamw.hpp"
#include "lll/rvae/adapter.hpp"
#include "lll/tinylm/model.hpp"

namespace lll::cli {

// Bad configuration or usage: exits with status 1 at the command line.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat, fully defaulted configuration of a run (plus grid/sweep settings).
// Every key is settable from a config file line "key = value" or a command
// line override; the canonical text form is what gets digested and written
// into the run directory.
struct RunConfig {
  // model
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int max_seq_len = 128;
  std::string adapter = "none";  // none | rvae | rcvae
  int adapter_position = 2;      // behind layer k; used when adapter != none
  // adapter internals
  int latent_dim = 100;
  double alpha = 0.5;
  double rho = 0.2;
  int cond_dim = 16;
  std::string recon_mode = "mse";  // mse | task-nll
  // training
  double lambda_lm = 0.25;
  double beta_id = 0.5;
  double gamma = 0.2;
  int epochs_per_task = 24;
  int alt_turns = 3;
  std::string mode = "naive";  // naive | alt_m1 | alt_m1_rev | alt_m1_star | alt
  bool alt_joint_second_half = false;
  bool use_id_task = true;
  int batch_size = 16;
  double lr = 5e-3;
  double weight_decay = 0.0;
  std::string replay_decode = "sample";  // sample | greedy
  int eval_max_new = 8;
  int lr_warmup_steps = 0;
  int diag_pseudo_count = 50;  // per-task generation diagnostic after training
  // data
  int train_size = 500;
  int test_size = 200;
  std::uint64_t cls_seed = 101;
  std::uint64_t span_seed = 202;
  std::uint64_t slot_seed = 303;
  std::string order = "cls,span,slot";
  std::string data_dir;     // when set, datasets load from files instead
  bool export_data = false; // write vocab + dataset files into the run dir
  // run
  std::uint64_t seed = 1;
  // grid / sweep
  std::string grid_orders = "all";  // "all" or ';'-separated comma orders
  std::string grid_gammas = "0.05,0.2";
  std::string grid_seeds = "1,2,3";
  std::string grid_variants = "baseline,rvae";
  std::string sweep_axis = "adapter_position";
  std::string sweep_values = "";
  int sweep_repeats = 3;
  int jobs = 1;  // worker processes for grid/sweep; 0 = hardware concurrency

  static const std::vector<std::string>& keys();
  std::string get(const std::string& key) const;
  void set(const std::string& key, const std::string& value);  // ConfigError names the field

  static RunConfig from_file(const std::string& path);
  void apply_override(const std::string& key_equals_value);

  std::string canonical() const;  // "key = value" lines, declaration order
  std::string digest() const;    // 16-hex FNV-1a of the canonical text
  void validate() const;

  bool has_adapter() const { return adapter != "none"; }
  tinylm::ModelConfig model_config(int vocab_size) const;
  std::optional<rvae::RvaeConfig> adapter_config(int n_tasks) const;
  llltrain::LllConfig lll_config() const;
  numcore::AdamWConfig optim_config() const;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace lll::cli
