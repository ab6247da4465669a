#include "lll/numcore/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace lll::numcore {

Param& ParamStore::add(std::string name, Tensor t) {
  if (index_.count(name)) throw std::invalid_argument("param store: duplicate parameter name " + name);
  t.requires_grad = true;
  Param p;
  p.name = name;
  p.tensor = std::move(t);
  p.m.assign(p.tensor.numel(), Real(0));
  p.v.assign(p.tensor.numel(), Real(0));
  params_.push_back(std::move(p));
  index_[params_.back().name] = &params_.back();
  return params_.back();
}

Param* ParamStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

const Param* ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : it->second;
}

Param& ParamStore::at(std::string_view name) {
  Param* p = find(name);
  if (!p) throw std::out_of_range("param store: unknown parameter " + std::string(name));
  return *p;
}

void ParamStore::zero_grads() {
  for (Param& p : params_) p.tensor.clear_grad();
}

void AdamW::step(ParamStore& store, const std::function<bool(const Param&)>& active) {
  ++step_;
  const Real bc1 = Real(1) - std::pow(cfg_.beta1, static_cast<Real>(step_));
  const Real bc2 = Real(1) - std::pow(cfg_.beta2, static_cast<Real>(step_));
  for (Param& p : store.params()) {
    if (active && !active(p)) continue;
    if (!p.tensor.grad) continue;  // never touched this step
    const std::vector<Real>& g = *p.tensor.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("adamw: non-finite gradient in parameter " + p.name);
      p.m[i] = cfg_.beta1 * p.m[i] + (Real(1) - cfg_.beta1) * g[i];
      p.v[i] = cfg_.beta2 * p.v[i] + (Real(1) - cfg_.beta2) * g[i] * g[i];
      const Real mhat = p.m[i] / bc1;
      const Real vhat = p.v[i] / bc2;
      const Real old = p.tensor.data[i];
      p.tensor.data[i] = old - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) - cfg_.lr * cfg_.weight_decay * old;
    }
  }
}

}  // namespace lll::numcore
