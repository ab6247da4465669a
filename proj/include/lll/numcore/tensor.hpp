#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "lll/numcore/rng.hpp"

namespace lll::numcore {

#ifdef LLL_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major value. Rank 0 (scalar), 1 or 2; the ops in graph.hpp state
// which ranks they accept. `grad`, when present, always mirrors `data`.
struct Tensor {
  Shape shape;
  std::vector<Real> data;
  bool requires_grad = false;
  std::optional<std::vector<Real>> grad;

  Tensor() = default;
  Tensor(Shape s, std::vector<Real> d);

  std::size_t numel() const { return data.size(); }
  int rows() const;
  int cols() const;

  Real& at(int r, int c);
  Real at(int r, int c) const;

  void ensure_grad();
  void clear_grad();
  void accumulate_grad(const std::vector<Real>& g);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, Real v);
  static Tensor scalar(Real v);
  static Tensor of(Shape s, std::initializer_list<Real> vals);
  static Tensor randn(Shape s, Rng& rng, Real stddev);
};

}  // namespace lll::numcore
