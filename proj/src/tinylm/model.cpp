#include "lll/tinylm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace lll::tinylm {

using numcore::Graph;
using numcore::ParamStore;
using numcore::Real;
using numcore::Rng;
using numcore::Tensor;
using numcore::ValueRef;

namespace {

constexpr Real kInitStd = Real(0.02);
// Positions carry the only signal the marker-relative heads can latch onto;
// a slightly louder start shortens their formation time markedly at this scale.
constexpr Real kPosInitStd = Real(0.1);
constexpr Real kMaskedScore = Real(-1e30);

std::string layer_prefix(const std::string& prefix, int i) {
  return prefix + "layer" + std::to_string(i) + ".";
}

void add_layer_names(std::vector<std::pair<std::string, numcore::Param**>>& out, LmParams::Layer& l,
                     const std::string& lp) {
  out.push_back({lp + "ln1.g", &l.ln1_g});
  out.push_back({lp + "ln1.b", &l.ln1_b});
  out.push_back({lp + "attn.qkv_w", &l.qkv_w});
  out.push_back({lp + "attn.qkv_b", &l.qkv_b});
  out.push_back({lp + "attn.proj_w", &l.proj_w});
  out.push_back({lp + "attn.proj_b", &l.proj_b});
  out.push_back({lp + "ln2.g", &l.ln2_g});
  out.push_back({lp + "ln2.b", &l.ln2_b});
  out.push_back({lp + "mlp.fc_w", &l.fc_w});
  out.push_back({lp + "mlp.fc_b", &l.fc_b});
  out.push_back({lp + "mlp.out_w", &l.out_w});
  out.push_back({lp + "mlp.out_b", &l.out_b});
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("model config: vocab_size must be positive");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || max_seq_len <= 0)
    throw std::invalid_argument("model config: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("model config: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  if (adapter_position > n_layers)
    throw std::invalid_argument("model config: adapter position " + std::to_string(adapter_position) +
                                " exceeds n_layers " + std::to_string(n_layers));
}

LmParams LmParams::init(ParamStore& store, const ModelConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  const int d = cfg.d_model;
  LmParams p;
  p.tok_embed = &store.add(prefix + "tok_embed", Tensor::randn({cfg.vocab_size, d}, rng, kInitStd));
  p.pos_embed = &store.add(prefix + "pos_embed", Tensor::randn({cfg.max_seq_len, d}, rng, kPosInitStd));
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string lp = layer_prefix(prefix, i);
    LmParams::Layer l{};
    l.ln1_g = &store.add(lp + "ln1.g", Tensor::full({d}, 1));
    l.ln1_b = &store.add(lp + "ln1.b", Tensor::zeros({d}));
    l.qkv_w = &store.add(lp + "attn.qkv_w", Tensor::randn({d, 3 * d}, rng, kInitStd));
    l.qkv_b = &store.add(lp + "attn.qkv_b", Tensor::zeros({3 * d}));
    l.proj_w = &store.add(lp + "attn.proj_w", Tensor::randn({d, d}, rng, kInitStd));
    l.proj_b = &store.add(lp + "attn.proj_b", Tensor::zeros({d}));
    l.ln2_g = &store.add(lp + "ln2.g", Tensor::full({d}, 1));
    l.ln2_b = &store.add(lp + "ln2.b", Tensor::zeros({d}));
    l.fc_w = &store.add(lp + "mlp.fc_w", Tensor::randn({d, 4 * d}, rng, kInitStd));
    l.fc_b = &store.add(lp + "mlp.fc_b", Tensor::zeros({4 * d}));
    l.out_w = &store.add(lp + "mlp.out_w", Tensor::randn({4 * d, d}, rng, kInitStd));
    l.out_b = &store.add(lp + "mlp.out_b", Tensor::zeros({d}));
    p.layers.push_back(l);
  }
  p.lnf_g = &store.add(prefix + "lnf.g", Tensor::full({d}, 1));
  p.lnf_b = &store.add(prefix + "lnf.b", Tensor::zeros({d}));
  return p;
}

LmParams LmParams::bind(ParamStore& store, const ModelConfig& cfg, const std::string& prefix) {
  cfg.validate();
  LmParams p;
  p.tok_embed = &store.at(prefix + "tok_embed");
  p.pos_embed = &store.at(prefix + "pos_embed");
  for (int i = 0; i < cfg.n_layers; ++i) {
    LmParams::Layer l{};
    std::vector<std::pair<std::string, numcore::Param**>> names;
    add_layer_names(names, l, layer_prefix(prefix, i));
    for (auto& [name, slot] : names) *slot = &store.at(name);
    p.layers.push_back(l);
  }
  p.lnf_g = &store.at(prefix + "lnf.g");
  p.lnf_b = &store.at(prefix + "lnf.b");
  return p;
}

ValueRef lm_forward(Graph& g, const LmParams& p, const ModelConfig& cfg, const std::vector<int>& tokens,
                    const AdapterHook& adapter) {
  const int t = static_cast<int>(tokens.size());
  if (t == 0) throw std::invalid_argument("lm_forward: empty token sequence");
  if (t > cfg.max_seq_len)
    throw std::length_error("lm_forward: sequence length " + std::to_string(t) + " exceeds max_seq_len " +
                            std::to_string(cfg.max_seq_len));
  for (int id : tokens)
    if (id < 0 || id >= cfg.vocab_size)
      throw std::out_of_range("lm_forward: unknown token id " + std::to_string(id));
  if (cfg.has_adapter() && !adapter)
    throw std::invalid_argument("lm_forward: config has an adapter slot but no adapter was supplied");

  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const Real att_scale = Real(1) / std::sqrt(static_cast<Real>(dh));

  // Additive causal mask; -1e30 drives masked scores to exactly zero weight.
  Tensor mask = Tensor::zeros({t, t});
  for (int i = 0; i < t; ++i)
    for (int j = i + 1; j < t; ++j) mask.at(i, j) = kMaskedScore;
  ValueRef mask_ref = g.constant(std::move(mask));

  ValueRef tok_table = g.leaf(p.tok_embed->tensor);
  ValueRef h = g.add(g.embedding(tok_table, tokens),
                     g.slice_rows(g.leaf(p.pos_embed->tensor), 0, t));

  auto maybe_adapt = [&](ValueRef x, int position) {
    if (cfg.adapter_position == position && adapter) return adapter(g, x);
    return x;
  };

  h = maybe_adapt(h, 0);
  for (int li = 0; li < cfg.n_layers; ++li) {
    const LmParams::Layer& l = p.layers[li];
    ValueRef x1 = g.layernorm(h, g.leaf(l.ln1_g->tensor), g.leaf(l.ln1_b->tensor));
    ValueRef qkv = g.add(g.matmul(x1, g.leaf(l.qkv_w->tensor)), g.leaf(l.qkv_b->tensor));
    std::vector<ValueRef> heads;
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      ValueRef q = g.slice_cols(qkv, hd * dh, dh);
      ValueRef k = g.slice_cols(qkv, d + hd * dh, dh);
      ValueRef vv = g.slice_cols(qkv, 2 * d + hd * dh, dh);
      ValueRef scores = g.add(g.scale(g.matmul_nt(q, k), att_scale), mask_ref);
      heads.push_back(g.matmul(g.softmax_rows(scores), vv));
    }
    ValueRef attn = g.add(g.matmul(g.concat_cols(heads), g.leaf(l.proj_w->tensor)), g.leaf(l.proj_b->tensor));
    h = g.add(h, attn);
    ValueRef x2 = g.layernorm(h, g.leaf(l.ln2_g->tensor), g.leaf(l.ln2_b->tensor));
    ValueRef mid = g.gelu(g.add(g.matmul(x2, g.leaf(l.fc_w->tensor)), g.leaf(l.fc_b->tensor)));
    ValueRef mlp = g.add(g.matmul(mid, g.leaf(l.out_w->tensor)), g.leaf(l.out_b->tensor));
    h = g.add(h, mlp);
    h = maybe_adapt(h, li + 1);
  }
  ValueRef hf = g.layernorm(h, g.leaf(p.lnf_g->tensor), g.leaf(p.lnf_b->tensor));
  return g.matmul_nt(hf, tok_table);  // tied output projection
}

ValueRef lm_nll(Graph& g, ValueRef logits, const std::vector<int>& targets,
                const std::vector<std::uint8_t>& loss_mask) {
  return g.cross_entropy(logits, targets, loss_mask);
}

namespace {

std::vector<int> decode_loop(const LmParams& p, const ModelConfig& cfg, std::vector<int> tokens,
                             int stop_token, int max_new, const AdapterHook& adapter,
                             Rng* rng) {
  if (tokens.empty()) throw std::invalid_argument("decode: empty prefix");
  if (static_cast<int>(tokens.size()) > cfg.max_seq_len)
    throw std::length_error("decode: prefix length " + std::to_string(tokens.size()) +
                            " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  for (int step = 0; step < max_new; ++step) {
    if (static_cast<int>(tokens.size()) >= cfg.max_seq_len) break;
    Graph g;
    ValueRef logits = lm_forward(g, p, cfg, tokens, adapter);
    const Tensor& lv = g.value(logits);
    const int t = lv.shape[0], v = lv.shape[1];
    int next = 0;
    if (!rng) {
      Real best = lv.at(t - 1, 0);
      for (int j = 1; j < v; ++j)
        if (lv.at(t - 1, j) > best) {  // strict: ties keep the lowest id
          best = lv.at(t - 1, j);
          next = j;
        }
    } else {
      // Softmax sample from the last row.
      std::vector<Real> probs(v);
      Real mx = lv.at(t - 1, 0);
      for (int j = 1; j < v; ++j) mx = std::max(mx, lv.at(t - 1, j));
      Real sum = 0;
      for (int j = 0; j < v; ++j) {
        probs[j] = std::exp(lv.at(t - 1, j) - mx);
        sum += probs[j];
      }
      const Real u = static_cast<Real>(rng->uniform()) * sum;
      Real acc = 0;
      next = v - 1;
      for (int j = 0; j < v; ++j) {
        acc += probs[j];
        if (u < acc) {
          next = j;
          break;
        }
      }
    }
    tokens.push_back(next);
    if (next == stop_token) break;
  }
  return tokens;
}

}  // namespace

std::vector<int> greedy_decode(const LmParams& p, const ModelConfig& cfg, std::vector<int> prefix,
                               int stop_token, int max_new, const AdapterHook& adapter) {
  return decode_loop(p, cfg, std::move(prefix), stop_token, max_new, adapter, nullptr);
}

std::vector<int> sample_decode(const LmParams& p, const ModelConfig& cfg, std::vector<int> prefix,
                               int stop_token, int max_new, Rng& rng, const AdapterHook& adapter) {
  return decode_loop(p, cfg, std::move(prefix), stop_token, max_new, adapter, &rng);
}

}  // namespace lll::tinylm
