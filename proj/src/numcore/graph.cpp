#include "lll/numcore/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace lll::numcore {

namespace {

using EMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap cmap(const Tensor& t) { return CMap(t.data.data(), t.rows(), t.cols()); }
CMap cmap(const std::vector<Real>& d, int r, int c) { return CMap(d.data(), r, c); }
MMap mmap(std::vector<Real>& d, int r, int c) { return MMap(d.data(), r, c); }

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << shape_str(a) << " and " << shape_str(b);
  throw std::invalid_argument(os.str());
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const char* what) {
  std::ostringstream os;
  os << op << ": " << what << ", got shape " << shape_str(a);
  throw std::invalid_argument(os.str());
}

constexpr Real kGeluCoeff = Real(0.7978845608028654);  // sqrt(2/pi)
constexpr Real kGeluCubic = Real(0.044715);

}  // namespace

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size())
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                std::to_string(data.size()));
  for (int d0 : shape)
    if (d0 <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_str(shape));
}

int Tensor::rows() const { return shape.size() == 2 ? shape[0] : 1; }
int Tensor::cols() const {
  if (shape.empty()) return 1;
  return shape.back();
}

Real& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
Real Tensor::at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

void Tensor::ensure_grad() {
  if (!grad) grad.emplace(data.size(), Real(0));
}

void Tensor::clear_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), Real(0));
}

void Tensor::accumulate_grad(const std::vector<Real>& g) {
  ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) (*grad)[i] += g[i];
}

Tensor Tensor::zeros(Shape s) {
  std::vector<Real> d(shape_numel(s), Real(0));
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::full(Shape s, Real v) {
  std::vector<Real> d(shape_numel(s), v);
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }

Tensor Tensor::of(Shape s, std::initializer_list<Real> vals) {
  return Tensor(std::move(s), std::vector<Real>(vals));
}

Tensor Tensor::randn(Shape s, Rng& rng, Real stddev) {
  std::vector<Real> d(shape_numel(s));
  for (auto& x : d) x = static_cast<Real>(rng.normal()) * stddev;
  return Tensor(std::move(s), std::move(d));
}

Real kahan_sum(const std::vector<Real>& xs) {
  Real sum = 0, c = 0;
  for (Real x : xs) {
    const Real y = x - c;
    const Real t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

Graph::Node& Graph::check(ValueRef r, const char* op) {
  if (!r.valid() || r.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument(std::string(op) + ": invalid value reference");
  return nodes_[r.idx];
}

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<Real>& Graph::grad_buf(int i) {
  Node& n = nodes_[i];
  if (!n.has_grad) {
    n.grad.assign(n.val().numel(), Real(0));
    n.has_grad = true;
  }
  return n.grad;
}

ValueRef Graph::leaf(Tensor& t) {
  Node n;
  n.external = &t;
  n.op = "leaf";
  return {push(std::move(n))};
}

ValueRef Graph::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  n.op = "constant";
  return {push(std::move(n))};
}

const Tensor& Graph::value(ValueRef r) const {
  if (!r.valid() || r.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("value: invalid value reference");
  return nodes_[r.idx].val();
}

Real Graph::scalar_value(ValueRef r) const {
  const Tensor& t = value(r);
  if (t.numel() != 1) throw std::invalid_argument("scalar_value: tensor " + shape_str(t.shape) + " is not scalar");
  return t.data[0];
}

const std::vector<Real>& Graph::grad_of(ValueRef r) const {
  const Node& n = cnode(r.idx);
  if (!n.has_grad) throw std::logic_error("grad_of: node has no gradient (backward not run or unreachable)");
  return n.grad;
}

ValueRef Graph::matmul(ValueRef a, ValueRef b) {
  const Tensor& ta = check(a, "matmul").val();
  const Tensor& tb = check(b, "matmul").val();
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
    shape_error("matmul", ta.shape, tb.shape);
  const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Node out;
  out.owned = Tensor::zeros({m, n});
  mmap(out.owned.data, m, n).noalias() = cmap(ta) * cmap(tb);
  out.parents = {a.idx, b.idx};
  out.op = "matmul";
  out.back = [a, b, m, k, n](Graph& g, Node& self) {
    const auto dC = cmap(self.grad, m, n);
    Node& na = g.node(a.idx);
    Node& nb = g.node(b.idx);
    mmap(g.grad_buf(a.idx), m, k).noalias() += dC * cmap(nb.val()).transpose();
    mmap(g.grad_buf(b.idx), k, n).noalias() += cmap(na.val()).transpose() * dC;
  };
  return {push(std::move(out))};
}

ValueRef Graph::matmul_nt(ValueRef a, ValueRef b) {
  const Tensor& ta = check(a, "matmul_nt").val();
  const Tensor& tb = check(b, "matmul_nt").val();
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[1])
    shape_error("matmul_nt", ta.shape, tb.shape);
  const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[0];
  Node out;
  out.owned = Tensor::zeros({m, n});
  mmap(out.owned.data, m, n).noalias() = cmap(ta) * cmap(tb).transpose();
  out.parents = {a.idx, b.idx};
  out.op = "matmul_nt";
  out.back = [a, b, m, k, n](Graph& g, Node& self) {
    const auto dC = cmap(self.grad, m, n);
    Node& na = g.node(a.idx);
    Node& nb = g.node(b.idx);
    mmap(g.grad_buf(a.idx), m, k).noalias() += dC * cmap(nb.val());
    mmap(g.grad_buf(b.idx), n, k).noalias() += dC.transpose() * cmap(na.val());
  };
  return {push(std::move(out))};
}

ValueRef Graph::add(ValueRef a, ValueRef b) {
  const Tensor& ta = check(a, "add").val();
  const Tensor& tb = check(b, "add").val();
  const bool same = ta.shape == tb.shape;
  const bool rowbc = ta.shape.size() == 2 && tb.shape.size() == 1 && ta.shape[1] == tb.shape[0];
  if (!same && !rowbc) shape_error("add", ta.shape, tb.shape);
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  if (same) {
    for (std::size_t i = 0; i < tb.data.size(); ++i) out.owned.data[i] += tb.data[i];
  } else {
    const int m = ta.shape[0], n = ta.shape[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.owned.data[static_cast<std::size_t>(i) * n + j] += tb.data[j];
  }
  out.parents = {a.idx, b.idx};
  out.op = "add";
  out.back = [a, b, same](Graph& g, Node& self) {
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += self.grad[i];
    auto& db = g.grad_buf(b.idx);
    if (same) {
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += self.grad[i];
    } else {
      const std::size_t n = db.size();
      const std::size_t m = self.grad.size() / n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) db[j] += self.grad[i * n + j];
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::sub(ValueRef a, ValueRef b) {
  const Tensor& ta = check(a, "sub").val();
  const Tensor& tb = check(b, "sub").val();
  if (ta.shape != tb.shape) shape_error("sub", ta.shape, tb.shape);
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (std::size_t i = 0; i < tb.data.size(); ++i) out.owned.data[i] -= tb.data[i];
  out.parents = {a.idx, b.idx};
  out.op = "sub";
  out.back = [a, b](Graph& g, Node& self) {
    auto& da = g.grad_buf(a.idx);
    auto& db = g.grad_buf(b.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      da[i] += self.grad[i];
      db[i] -= self.grad[i];
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::mul(ValueRef a, ValueRef b) {
  const Tensor& ta = check(a, "mul").val();
  const Tensor& tb = check(b, "mul").val();
  if (ta.shape != tb.shape) shape_error("mul", ta.shape, tb.shape);
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (std::size_t i = 0; i < tb.data.size(); ++i) out.owned.data[i] *= tb.data[i];
  out.parents = {a.idx, b.idx};
  out.op = "mul";
  out.back = [a, b](Graph& g, Node& self) {
    const auto& va = g.node(a.idx).val().data;
    const auto& vb = g.node(b.idx).val().data;
    auto& da = g.grad_buf(a.idx);
    auto& db = g.grad_buf(b.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      da[i] += self.grad[i] * vb[i];
      db[i] += self.grad[i] * va[i];
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::add_many(const std::vector<ValueRef>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_many: empty operand list");
  const Tensor& t0 = check(xs[0], "add_many").val();
  for (const ValueRef& x : xs)
    if (check(x, "add_many").val().shape != t0.shape) shape_error("add_many", t0.shape, check(x, "add_many").val().shape);
  Node out;
  out.owned = Tensor::zeros(t0.shape);
  for (const ValueRef& x : xs) {
    const auto& d = cnode(x.idx).val().data;
    for (std::size_t i = 0; i < d.size(); ++i) out.owned.data[i] += d[i];
  }
  std::vector<int> parents;
  for (const ValueRef& x : xs) parents.push_back(x.idx);
  out.parents = parents;
  out.op = "add_many";
  out.back = [parents](Graph& g, Node& self) {
    for (int p : parents) {
      auto& dp = g.grad_buf(p);
      for (std::size_t i = 0; i < self.grad.size(); ++i) dp[i] += self.grad[i];
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::scale(ValueRef a, Real c) {
  const Tensor& ta = check(a, "scale").val();
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) x *= c;
  out.parents = {a.idx};
  out.op = "scale";
  out.back = [a, c](Graph& g, Node& self) {
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += c * self.grad[i];
  };
  return {push(std::move(out))};
}

ValueRef Graph::add_scalar(ValueRef a, Real c) {
  const Tensor& ta = check(a, "add_scalar").val();
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) x += c;
  out.parents = {a.idx};
  out.op = "add_scalar";
  out.back = [a](Graph& g, Node& self) {
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i];
  };
  return {push(std::move(out))};
}

ValueRef Graph::relu(ValueRef a) {
  const Tensor& ta = check(a, "relu").val();
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) x = x > Real(0) ? x : Real(0);
  out.parents = {a.idx};
  out.op = "relu";
  out.back = [a](Graph& g, Node& self) {
    const auto& va = g.node(a.idx).val().data;
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (va[i] > Real(0)) da[i] += self.grad[i];
  };
  return {push(std::move(out))};
}

ValueRef Graph::gelu(ValueRef a) {
  const Tensor& ta = check(a, "gelu").val();
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) {
    const Real u = kGeluCoeff * (x + kGeluCubic * x * x * x);
    x = Real(0.5) * x * (Real(1) + std::tanh(u));
  }
  out.parents = {a.idx};
  out.op = "gelu";
  out.back = [a](Graph& g, Node& self) {
    const auto& va = g.node(a.idx).val().data;
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const Real x = va[i];
      const Real u = kGeluCoeff * (x + kGeluCubic * x * x * x);
      const Real t = std::tanh(u);
      const Real du = kGeluCoeff * (Real(1) + Real(3) * kGeluCubic * x * x);
      da[i] += self.grad[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du);
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::square(ValueRef a) {
  const Tensor& ta = check(a, "square").val();
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) x *= x;
  out.parents = {a.idx};
  out.op = "square";
  out.back = [a](Graph& g, Node& self) {
    const auto& va = g.node(a.idx).val().data;
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += Real(2) * va[i] * self.grad[i];
  };
  return {push(std::move(out))};
}

ValueRef Graph::log(ValueRef a) {
  const Tensor& ta = check(a, "log").val();
  for (Real x : ta.data)
    if (!(x > Real(0))) throw std::domain_error("log: non-positive input " + std::to_string(x));
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) x = std::log(x);
  out.parents = {a.idx};
  out.op = "log";
  out.back = [a](Graph& g, Node& self) {
    const auto& va = g.node(a.idx).val().data;
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] / va[i];
  };
  return {push(std::move(out))};
}

ValueRef Graph::max_const(ValueRef a, Real floor) {
  const Tensor& ta = check(a, "max_const").val();
  Node out;
  out.owned = Tensor(ta.shape, ta.data);
  for (auto& x : out.owned.data) x = x > floor ? x : floor;
  out.parents = {a.idx};
  out.op = "max_const";
  out.back = [a, floor](Graph& g, Node& self) {
    const auto& va = g.node(a.idx).val().data;
    auto& da = g.grad_buf(a.idx);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (va[i] > floor) da[i] += self.grad[i];
  };
  return {push(std::move(out))};
}

ValueRef Graph::layernorm(ValueRef x, ValueRef gain, ValueRef bias, Real eps) {
  const Tensor& tx = check(x, "layernorm").val();
  const Tensor& tg = check(gain, "layernorm").val();
  const Tensor& tb = check(bias, "layernorm").val();
  if (tx.shape.empty()) shape_error("layernorm", tx.shape, "expected rank 1 or 2");
  const int n = tx.shape.back();
  const int m = static_cast<int>(tx.numel()) / n;
  if (tg.numel() != static_cast<std::size_t>(n) || tb.numel() != static_cast<std::size_t>(n))
    shape_error("layernorm", tx.shape, tg.shape);

  Node out;
  out.owned = Tensor::zeros(tx.shape);
  auto xhat = std::make_shared<std::vector<Real>>(tx.numel());
  auto inv_std = std::make_shared<std::vector<Real>>(m);
  for (int i = 0; i < m; ++i) {
    const Real* row = tx.data.data() + static_cast<std::size_t>(i) * n;
    Real mean = 0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    Real var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < n; ++j) {
      const Real xh = (row[j] - mean) * is;
      (*xhat)[static_cast<std::size_t>(i) * n + j] = xh;
      out.owned.data[static_cast<std::size_t>(i) * n + j] = xh * tg.data[j] + tb.data[j];
    }
  }
  out.parents = {x.idx, gain.idx, bias.idx};
  out.op = "layernorm";
  out.back = [x, gain, bias, xhat, inv_std, m, n](Graph& g, Node& self) {
    const auto& gv = g.node(gain.idx).val().data;
    auto& dx = g.grad_buf(x.idx);
    auto& dg = g.grad_buf(gain.idx);
    auto& db = g.grad_buf(bias.idx);
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      Real mean_dxhat = 0, mean_dxhat_xhat = 0;
      for (int j = 0; j < n; ++j) {
        const Real dy = self.grad[off + j];
        const Real xh = (*xhat)[off + j];
        dg[j] += dy * xh;
        db[j] += dy;
        const Real dxh = dy * gv[j];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xh;
      }
      mean_dxhat /= n;
      mean_dxhat_xhat /= n;
      const Real is = (*inv_std)[i];
      for (int j = 0; j < n; ++j) {
        const Real dxh = self.grad[off + j] * gv[j];
        dx[off + j] += is * (dxh - mean_dxhat - (*xhat)[off + j] * mean_dxhat_xhat);
      }
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::softmax_rows(ValueRef x) {
  const Tensor& tx = check(x, "softmax_rows").val();
  if (tx.shape.size() != 2) shape_error("softmax_rows", tx.shape, "expected rank 2");
  const int m = tx.shape[0], n = tx.shape[1];
  Node out;
  out.owned = Tensor::zeros(tx.shape);
  for (int i = 0; i < m; ++i) {
    const Real* row = tx.data.data() + static_cast<std::size_t>(i) * n;
    Real* orow = out.owned.data.data() + static_cast<std::size_t>(i) * n;
    Real mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    Real sum = 0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= sum;
  }
  out.parents = {x.idx};
  out.op = "softmax_rows";
  out.back = [x, m, n](Graph& g, Node& self) {
    auto& dx = g.grad_buf(x.idx);
    const auto& yv = self.owned.data;
    for (int i = 0; i < m; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      Real dot = 0;
      for (int j = 0; j < n; ++j) dot += self.grad[off + j] * yv[off + j];
      for (int j = 0; j < n; ++j) dx[off + j] += yv[off + j] * (self.grad[off + j] - dot);
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::cross_entropy(ValueRef logits, const std::vector<int>& targets,
                              const std::vector<std::uint8_t>& mask) {
  const Tensor& tl = check(logits, "cross_entropy").val();
  if (tl.shape.size() != 2) shape_error("cross_entropy", tl.shape, "expected rank 2 logits");
  const int m = tl.shape[0], n = tl.shape[1];
  if (targets.size() != static_cast<std::size_t>(m) || mask.size() != static_cast<std::size_t>(m))
    throw std::invalid_argument("cross_entropy: targets/mask length " + std::to_string(targets.size()) + "/" +
                                std::to_string(mask.size()) + " does not match " + std::to_string(m) + " positions");
  int active = 0;
  for (std::uint8_t f : mask) active += f ? 1 : 0;
  if (active == 0) throw std::invalid_argument("cross_entropy: empty loss mask");
  for (int i = 0; i < m; ++i)
    if (mask[i] && (targets[i] < 0 || targets[i] >= n))
      throw std::out_of_range("cross_entropy: target id " + std::to_string(targets[i]) + " outside vocab of " +
                              std::to_string(n));

  auto probs = std::make_shared<std::vector<Real>>(tl.data);
  Real total = 0;
  for (int i = 0; i < m; ++i) {
    Real* row = probs->data() + static_cast<std::size_t>(i) * n;
    Real mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    Real sum = 0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < n; ++j) row[j] /= sum;
    if (mask[i]) total -= std::log(row[targets[i]]);
  }
  Node out;
  out.owned = Tensor::scalar(total / active);
  out.parents = {logits.idx};
  out.op = "cross_entropy";
  out.back = [logits, targets, mask, probs, m, n, active](Graph& g, Node& self) {
    const Real gscale = self.grad[0] / active;
    auto& dl = g.grad_buf(logits.idx);
    for (int i = 0; i < m; ++i) {
      if (!mask[i]) continue;
      const std::size_t off = static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) dl[off + j] += gscale * (*probs)[off + j];
      dl[off + targets[i]] -= gscale;
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::embedding(ValueRef table, const std::vector<int>& ids) {
  const Tensor& tt = check(table, "embedding").val();
  if (tt.shape.size() != 2) shape_error("embedding", tt.shape, "expected rank 2 table");
  const int v = tt.shape[0], d = tt.shape[1];
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::out_of_range("embedding: token id " + std::to_string(id) + " outside table of " + std::to_string(v));
  const int t = static_cast<int>(ids.size());
  if (t == 0) throw std::invalid_argument("embedding: empty id list");
  Node out;
  out.owned = Tensor::zeros({t, d});
  for (int i = 0; i < t; ++i)
    std::memcpy(out.owned.data.data() + static_cast<std::size_t>(i) * d,
                tt.data.data() + static_cast<std::size_t>(ids[i]) * d, sizeof(Real) * d);
  out.parents = {table.idx};
  out.op = "embedding";
  out.back = [table, ids, d](Graph& g, Node& self) {
    auto& dt = g.grad_buf(table.idx);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t src = i * d;
      const std::size_t dst = static_cast<std::size_t>(ids[i]) * d;
      for (int j = 0; j < d; ++j) dt[dst + j] += self.grad[src + j];
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::slice_rows(ValueRef x, int start, int len) {
  const Tensor& tx = check(x, "slice_rows").val();
  if (tx.shape.size() != 2) shape_error("slice_rows", tx.shape, "expected rank 2");
  const int m = tx.shape[0], n = tx.shape[1];
  if (start < 0 || len <= 0 || start + len > m)
    throw std::out_of_range("slice_rows: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                            ") outside " + shape_str(tx.shape));
  Node out;
  out.owned = Tensor::zeros({len, n});
  std::memcpy(out.owned.data.data(), tx.data.data() + static_cast<std::size_t>(start) * n,
              sizeof(Real) * static_cast<std::size_t>(len) * n);
  out.parents = {x.idx};
  out.op = "slice_rows";
  out.back = [x, start, len, n](Graph& g, Node& self) {
    auto& dx = g.grad_buf(x.idx);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < n; ++j)
        dx[static_cast<std::size_t>(start + i) * n + j] += self.grad[static_cast<std::size_t>(i) * n + j];
  };
  return {push(std::move(out))};
}

ValueRef Graph::slice_cols(ValueRef x, int start, int len) {
  const Tensor& tx = check(x, "slice_cols").val();
  if (tx.shape.size() != 2) shape_error("slice_cols", tx.shape, "expected rank 2");
  const int m = tx.shape[0], n = tx.shape[1];
  if (start < 0 || len <= 0 || start + len > n)
    throw std::out_of_range("slice_cols: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                            ") outside " + shape_str(tx.shape));
  Node out;
  out.owned = Tensor::zeros({m, len});
  for (int i = 0; i < m; ++i)
    std::memcpy(out.owned.data.data() + static_cast<std::size_t>(i) * len,
                tx.data.data() + static_cast<std::size_t>(i) * n + start, sizeof(Real) * len);
  out.parents = {x.idx};
  out.op = "slice_cols";
  out.back = [x, start, len, m, n](Graph& g, Node& self) {
    auto& dx = g.grad_buf(x.idx);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < len; ++j)
        dx[static_cast<std::size_t>(i) * n + start + j] += self.grad[static_cast<std::size_t>(i) * len + j];
  };
  return {push(std::move(out))};
}

ValueRef Graph::concat_cols(const std::vector<ValueRef>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty operand list");
  int m = -1, total = 0;
  for (const ValueRef& x : xs) {
    const Tensor& t = check(x, "concat_cols").val();
    if (t.shape.size() != 2) shape_error("concat_cols", t.shape, "expected rank 2");
    if (m < 0) m = t.shape[0];
    if (t.shape[0] != m) shape_error("concat_cols", Shape{m, -1}, t.shape);
    total += t.shape[1];
  }
  Node out;
  out.owned = Tensor::zeros({m, total});
  std::vector<int> offsets;
  int off = 0;
  for (const ValueRef& x : xs) {
    const Tensor& t = cnode(x.idx).val();
    const int n = t.shape[1];
    offsets.push_back(off);
    for (int i = 0; i < m; ++i)
      std::memcpy(out.owned.data.data() + static_cast<std::size_t>(i) * total + off,
                  t.data.data() + static_cast<std::size_t>(i) * n, sizeof(Real) * n);
    off += n;
  }
  std::vector<int> parents;
  for (const ValueRef& x : xs) parents.push_back(x.idx);
  out.parents = parents;
  out.op = "concat_cols";
  out.back = [parents, offsets, m, total](Graph& g, Node& self) {
    for (std::size_t p = 0; p < parents.size(); ++p) {
      auto& dx = g.grad_buf(parents[p]);
      const int n = static_cast<int>(g.node(parents[p]).val().shape[1]);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          dx[static_cast<std::size_t>(i) * n + j] +=
              self.grad[static_cast<std::size_t>(i) * total + offsets[p] + j];
    }
  };
  return {push(std::move(out))};
}

ValueRef Graph::repeat_row(ValueRef v, int times) {
  const Tensor& tv = check(v, "repeat_row").val();
  const bool vec = tv.shape.size() == 1;
  const bool onerow = tv.shape.size() == 2 && tv.shape[0] == 1;
  if (!vec && !onerow) shape_error("repeat_row", tv.shape, "expected [n] or [1,n]");
  if (times <= 0) throw std::invalid_argument("repeat_row: non-positive repeat count");
  const int n = static_cast<int>(tv.numel());
  Node out;
  out.owned = Tensor::zeros({times, n});
  for (int i = 0; i < times; ++i)
    std::memcpy(out.owned.data.data() + static_cast<std::size_t>(i) * n, tv.data.data(), sizeof(Real) * n);
  out.parents = {v.idx};
  out.op = "repeat_row";
  out.back = [v, times, n](Graph& g, Node& self) {
    auto& dv = g.grad_buf(v.idx);
    for (int i = 0; i < times; ++i)
      for (int j = 0; j < n; ++j) dv[j] += self.grad[static_cast<std::size_t>(i) * n + j];
  };
  return {push(std::move(out))};
}

ValueRef Graph::sum_all(ValueRef x) {
  const Tensor& tx = check(x, "sum_all").val();
  Node out;
  out.owned = Tensor::scalar(kahan_sum(tx.data));
  out.parents = {x.idx};
  out.op = "sum_all";
  out.back = [x](Graph& g, Node& self) {
    auto& dx = g.grad_buf(x.idx);
    for (auto& d : dx) d += self.grad[0];
  };
  return {push(std::move(out))};
}

ValueRef Graph::mean_all(ValueRef x) {
  const Tensor& tx = check(x, "mean_all").val();
  const Real n = static_cast<Real>(tx.numel());
  Node out;
  out.owned = Tensor::scalar(kahan_sum(tx.data) / n);
  out.parents = {x.idx};
  out.op = "mean_all";
  out.back = [x, n](Graph& g, Node& self) {
    auto& dx = g.grad_buf(x.idx);
    const Real gs = self.grad[0] / n;
    for (auto& d : dx) d += gs;
  };
  return {push(std::move(out))};
}

ValueRef Graph::mean_rows(ValueRef x) {
  const Tensor& tx = check(x, "mean_rows").val();
  if (tx.shape.size() != 2) shape_error("mean_rows", tx.shape, "expected rank 2");
  const int m = tx.shape[0], n = tx.shape[1];
  Node out;
  out.owned = Tensor::zeros({n});
  for (int j = 0; j < n; ++j) {
    Real sum = 0, c = 0;
    for (int i = 0; i < m; ++i) {
      const Real y = tx.data[static_cast<std::size_t>(i) * n + j] - c;
      const Real t = sum + y;
      c = (t - sum) - y;
      sum = t;
    }
    out.owned.data[j] = sum / m;
  }
  out.parents = {x.idx};
  out.op = "mean_rows";
  out.back = [x, m, n](Graph& g, Node& self) {
    auto& dx = g.grad_buf(x.idx);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dx[static_cast<std::size_t>(i) * n + j] += self.grad[j] / m;
  };
  return {push(std::move(out))};
}

void Graph::backward(ValueRef loss) {
  Node& ln = check(loss, "backward");
  if (ln.val().numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(ln.val().shape));
  if (backward_done_) throw std::logic_error("backward: already run; reset() the graph first");
  backward_done_ = true;
  grad_buf(loss.idx)[0] = Real(1);
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.back) continue;
    n.back(*this, n);
  }
  for (Node& n : nodes_) {
    if (n.external && n.external->requires_grad && n.has_grad) n.external->accumulate_grad(n.grad);
  }
}

void Graph::reset() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace lll::numcore
