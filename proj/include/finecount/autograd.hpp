#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "finecount/tensor.hpp"

namespace finecount::ad {

/// A learnable tensor together with its accumulated gradient.
struct Parameter {
  Tensor value;
  Tensor grad;
};

class Graph;

/// Handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }

  const Tensor& value() const;

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward()
/// walks them in reverse, so every op only needs its own local rule.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr, {}); }
  Var leaf(Tensor value, bool requires_grad = true) { return push(std::move(value), requires_grad, nullptr, {}); }
  /// Gradients reaching this node are added into `p.grad` by backward().
  Var param(Parameter& p) { return push(p.value, true, &p, {}); }

  /// Records an op output. `backward` runs only if some input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() output with respect to `v`; zeros if
  /// the node was not reached.
  Tensor grad(Var v) const;
  const Tensor& out_grad(int id) const { return nodes_[id].grad; }
  /// Lazily zero-initialized gradient buffer for accumulation by op rules.
  Tensor& accum(int id);

  /// Seeds d(output)/d(output) = 1 for a 1x1x1 output and back-propagates.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  Var push(Tensor value, bool requires_grad, Parameter* param, BackwardFn fn);

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

// ---- ops -------------------------------------------------------------------

/// Same-padded stride-1 convolution. weight is Cout x Cin x (k*k), bias Cout x 1 x 1.
Var conv2d(Var x, Var weight, Var bias, int kernel);
Var leaky_relu(Var x, double slope);
/// 2x2 stride-2 max pool; input dims must be even.
Var max_pool2(Var x);
/// 2x2 stride-2 average pool, ceil mode with zero padding (every window divides by 4).
Var avg_pool2(Var x);
/// Nearest-neighbour 2x upsampling cropped to height x width.
Var upsample_nearest(Var x, int height, int width);
Var concat(const std::vector<Var>& parts);
Var slice_channels(Var x, int first, int count);
Var add(Var a, Var b);
/// a * x + b elementwise.
Var affine(Var x, double a, double b);
/// x (C channels) times m (1 channel), broadcast over channels.
Var mul_broadcast(Var x, Var m);
/// x times a constant single-channel mask, broadcast over channels.
Var scale_by(Var x, const Tensor& mask);
Var softmax_channels(Var x);
Var sum_channels(Var x);
/// Gradient-free copy.
Var detach(Var x);

/// Sum over all entries of (pred - target)^2, as a 1x1x1 node.
Var squared_error(Var pred, const Tensor& target);
/// -sum target * log(max(pred, floor)), as a 1x1x1 node.
Var soft_cross_entropy(Var pred, const Tensor& target, double floor);
Var weighted_sum(const std::vector<std::pair<Var, double>>& terms);

/// Local graph aggregation: out_p = sum_q A_pq h_q over the (2r+1)^2 window
/// around p, where A is the row-normalized (1 + cos(h_p, h_q)) / 2.
Var local_cosine_aggregate(Var h, int radius);

}  // namespace finecount::ad
