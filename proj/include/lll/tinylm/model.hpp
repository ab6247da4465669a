#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lll/numcore/adamw.hpp"
#include "lll/numcore/graph.hpp"
#include "lll/numcore/rng.hpp"

namespace lll::tinylm {

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int max_seq_len = 128;
  // Hook position in [0, n_layers]: k means "behind layer k", 0 means before
  // layer 1. Negative means no adapter slot.
  int adapter_position = -1;

  void validate() const;
  bool has_adapter() const { return adapter_position >= 0; }
};

// Non-owning views into a ParamStore. Output projection is tied to the token
// embedding; positions are learned absolute embeddings.
struct LmParams {
  numcore::Param* tok_embed = nullptr;  // [vocab, d]
  numcore::Param* pos_embed = nullptr;  // [max_seq_len, d]
  struct Layer {
    numcore::Param *ln1_g, *ln1_b;
    numcore::Param *qkv_w, *qkv_b;    // [d, 3d], [3d]
    numcore::Param *proj_w, *proj_b;  // [d, d], [d]
    numcore::Param *ln2_g, *ln2_b;
    numcore::Param *fc_w, *fc_b;      // [d, 4d], [4d]
    numcore::Param *out_w, *out_b;    // [4d, d], [d]
  };
  std::vector<Layer> layers;
  numcore::Param *lnf_g = nullptr, *lnf_b = nullptr;

  // Creates freshly initialized parameters (normal, std 0.02) under `prefix`.
  static LmParams init(numcore::ParamStore& store, const ModelConfig& cfg, numcore::Rng& rng,
                       const std::string& prefix = "lm.");
  // Re-binds to already existing parameters (e.g. after a checkpoint load).
  static LmParams bind(numcore::ParamStore& store, const ModelConfig& cfg,
                       const std::string& prefix = "lm.");
};

// Receives the hidden state leaving the hook layer and returns its
// replacement. Identity (or an empty function) leaves the model unchanged.
using AdapterHook = std::function<numcore::ValueRef(numcore::Graph&, numcore::ValueRef)>;

// Causal forward pass over one token sequence; returns logits [T, vocab].
numcore::ValueRef lm_forward(numcore::Graph& g, const LmParams& p, const ModelConfig& cfg,
                             const std::vector<int>& tokens, const AdapterHook& adapter = {});

// Mean negative log-likelihood over masked target positions.
numcore::ValueRef lm_nll(numcore::Graph& g, numcore::ValueRef logits, const std::vector<int>& targets,
                         const std::vector<std::uint8_t>& loss_mask);

// Appends argmax tokens (ties broken toward the lowest id) until `stop_token`
// or `max_new` tokens; returns prefix + generated tokens.
std::vector<int> greedy_decode(const LmParams& p, const ModelConfig& cfg, std::vector<int> prefix,
                               int stop_token, int max_new, const AdapterHook& adapter = {});

// Same loop, but draws each token from the softmax distribution.
std::vector<int> sample_decode(const LmParams& p, const ModelConfig& cfg, std::vector<int> prefix,
                               int stop_token, int max_new, numcore::Rng& rng,
                               const AdapterHook& adapter = {});

}  // namespace lll::tinylm
