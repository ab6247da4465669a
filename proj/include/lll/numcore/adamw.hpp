#pragma once

#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "lll/numcore/tensor.hpp"

namespace lll::numcore {

struct Param {
  std::string name;
  Tensor tensor;
  std::vector<Real> m, v;  // AdamW moment estimates, same length as tensor.data
};

// Owns all trainable parameters of a run. Insertion order is the canonical
// iteration order everywhere (optimizer, checkpoints), so runs are
// reproducible byte for byte.
class ParamStore {
 public:
  Param& add(std::string name, Tensor t);
  Param* find(std::string_view name);
  const Param* find(std::string_view name) const;
  Param& at(std::string_view name);

  std::deque<Param>& params() { return params_; }
  const std::deque<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  void zero_grads();

 private:
  std::deque<Param> params_;  // deque: stable addresses across add()
  std::unordered_map<std::string, Param*> index_;
};

struct AdamWConfig {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  Real weight_decay = Real(0);
};

// AdamW with decoupled weight decay: the decay term uses the parameter value,
// never the gradient, and both terms scale with lr. Parameters filtered out
// by `active` are left bitwise untouched, moments included.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamStore& store, const std::function<bool(const Param&)>& active = {});

  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }
  AdamWConfig& config() { return cfg_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long step_ = 0;
};

}  // namespace lll::numcore
