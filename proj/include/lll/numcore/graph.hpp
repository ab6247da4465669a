#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lll/numcore/tensor.hpp"

namespace lll::numcore {

struct ValueRef {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Define-by-run tape. Ops compute their value eagerly at record time; a graph
// is built for a single forward pass, backward() is called at most once, and
// reset() makes the graph reusable for the next step.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Caller-owned tensor; grads accumulate into t.grad when t.requires_grad.
  // The tensor must outlive the graph.
  ValueRef leaf(Tensor& t);
  // Graph-owned constant, never differentiated.
  ValueRef constant(Tensor t);

  ValueRef matmul(ValueRef a, ValueRef b);     // [m,k] x [k,n]
  ValueRef matmul_nt(ValueRef a, ValueRef b);  // [m,k] x [n,k]^T -> [m,n]
  ValueRef add(ValueRef a, ValueRef b);        // same shape, or b:[n] broadcast over rows of a:[m,n]
  ValueRef sub(ValueRef a, ValueRef b);        // same shape
  ValueRef mul(ValueRef a, ValueRef b);        // elementwise, same shape
  ValueRef add_many(const std::vector<ValueRef>& xs);  // elementwise sum, same shapes
  ValueRef scale(ValueRef a, Real c);
  ValueRef add_scalar(ValueRef a, Real c);
  ValueRef relu(ValueRef a);
  ValueRef gelu(ValueRef a);
  ValueRef square(ValueRef a);
  ValueRef log(ValueRef a);                   // requires strictly positive input
  ValueRef max_const(ValueRef a, Real floor); // elementwise max(a, floor)

  // Row-wise layer normalization with affine gain/bias over the last dim.
  ValueRef layernorm(ValueRef x, ValueRef gain, ValueRef bias, Real eps = 1e-5);
  ValueRef softmax_rows(ValueRef x);
  // Mean of -log softmax(logits)[target] over positions with a nonzero mask.
  ValueRef cross_entropy(ValueRef logits, const std::vector<int>& targets,
                         const std::vector<std::uint8_t>& mask);
  ValueRef embedding(ValueRef table, const std::vector<int>& ids);

  ValueRef slice_rows(ValueRef x, int start, int len);
  ValueRef slice_cols(ValueRef x, int start, int len);
  ValueRef concat_cols(const std::vector<ValueRef>& xs);
  ValueRef repeat_row(ValueRef v, int times);  // [n] or [1,n] -> [times,n]

  ValueRef sum_all(ValueRef x);   // compensated summation -> scalar
  ValueRef mean_all(ValueRef x);
  ValueRef mean_rows(ValueRef x); // [m,n] -> [n]

  const Tensor& value(ValueRef r) const;
  Real scalar_value(ValueRef r) const;

  // Populates gradients for every reachable node and accumulates into the
  // grad of leaf tensors with requires_grad. `loss` must be scalar.
  void backward(ValueRef loss);
  const std::vector<Real>& grad_of(ValueRef r) const;

  void reset();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    Tensor* external = nullptr;
    std::vector<Real> grad;
    bool has_grad = false;
    std::vector<int> parents;
    std::function<void(Graph&, Node&)> back;
    const char* op = "";

    const Tensor& val() const { return external ? *external : owned; }
  };

  Node& node(int i) { return nodes_[i]; }
  const Node& cnode(int i) const { return nodes_[i]; }
  Node& check(ValueRef r, const char* op);
  int push(Node n);
  std::vector<Real>& grad_buf(int i);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

Real kahan_sum(const std::vector<Real>& xs);

}  // namespace lll::numcore
