#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "feedrank/tensor.hpp"

namespace feedrank {

enum class Op : std::uint8_t {
  leaf,
  matmul,
  matvec,
  add,
  sub,
  mul,
  scale,
  sigmoid,
  tanh_fn,
  relu,
  softmax_last,
  concat,
  dot,
  sum,
  embed,
  cosine,
  bce_logits,
  weighted_sum,
};

// One recorded operation. Inputs always precede the node on the tape, so the
// node list is a topological order by construction.
struct Node {
  Tensor value;
  Tensor grad;  // allocated during backward; empty until then
  Op op = Op::leaf;
  std::int32_t a = -1;
  std::int32_t b = -1;
  std::vector<std::int32_t> args;  // n-ary ops (concat, weighted_sum)
  std::int32_t aux = 0;            // embed row index
  double c = 0.0;                  // scale factor / bce label
  bool requires_grad = false;
};

// Define-by-run reverse-mode tape. Single-threaded per instance; frozen
// parameter tensors may be shared across tapes on different threads.
class Tape {
 public:
  using Id = std::int32_t;

  Id leaf(Tensor value, bool requires_grad = false);

  Id matmul(Id a, Id b);
  Id matvec(Id a, Id x);
  // same-shape elementwise, or [m x n] + [n] applied row-wise
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id relu(Id a);
  Id softmax_last(Id a);
  Id concat(std::span<const Id> parts);
  Id dot(Id a, Id b);
  Id sum(Id a);
  Id embed(Id table, int row);
  Id cosine(Id a, Id b);
  Id bce_with_logits(Id logit, double label);
  Id weighted_sum(Id weights, std::span<const Id> vectors);

  // Accumulates chain-rule gradients into every reachable node that requires
  // them; parameters not reachable from the loss end up with zero gradients.
  void backward(Id loss);

  const Tensor& val(Id id) const { return nodes_[id].value; }
  const Tensor& grad(Id id) const;
  bool requires_grad(Id id) const { return nodes_[id].requires_grad; }
  double scalar(Id id) const;

  std::size_t size() const { return nodes_.size(); }
  void reset();  // drop all nodes, keep capacity

 private:
  Id push(Node n);
  Tensor& grad_buf(Id id);  // zero-allocates on first touch
  const Node& node(Id id) const { return nodes_[id]; }

  std::vector<Node> nodes_;
};

}  // namespace feedrank
