#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace bci::nn {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);

class Graph;

// Handle to a node owned by a Graph. Cheap to copy; valid while the graph lives.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  const std::vector<double>& value() const;
  // Gradient w.r.t. this tensor; populated by Graph::backward, zeros before.
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  friend class OpBuilder;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Define-by-run tape. Nodes are appended in topological order; backward walks
// the tape in reverse. Values are immutable once an op has produced them.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf without gradient tracking.
  Tensor constant(Shape shape, std::vector<double> value);
  Tensor scalar_constant(double v);
  // Leaf with optional gradient tracking (parameters, inputs under test).
  Tensor leaf(Shape shape, std::vector<double> value, bool requires_grad);

  // Accumulates gradients for every requires_grad tensor reachable from loss.
  // loss must be scalar; calling twice without reset() is an error.
  void backward(const Tensor& loss);

  // Zeroes all gradients and re-arms backward; values are untouched.
  void reset();

  size_t size() const { return nodes_.size(); }

  friend class Tensor;
  friend class OpBuilder;

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::function<void(Graph&)> backprop;  // absent for leaves and no-grad paths
  };

  std::vector<double>& grad_buffer(int id);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- ops -------------------------------------------------------------------
// All ops validate shapes, reject non-finite outputs (naming the op), and
// register reverse-mode closures when any input requires a gradient.

// Cross-correlation of input [Cin, L] with kernel [Cout, Cin, K] plus bias [Cout].
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride = 1, int padding = 0);

// Per-group standardization of x [C, L] followed by per-channel affine.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

// W [M, N] * x [N] + b [M].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor silu(const Tensor& x);

// Inverted dropout: kept entries scaled by 1/(1-p). Identity when not training.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// -log softmax(logits)[label], max-subtracted.
Tensor softmax_cross_entropy(const Tensor& logits, int label);

// Mean squared error over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);

// x [C, L] + v [C] broadcast over the time axis.
Tensor add_channel_bias(const Tensor& x, const Tensor& v);

// Stack along the channel axis: [Ca, L] ++ [Cb, L] -> [Ca+Cb, L].
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Nearest-neighbour 2x upsampling along time: [C, L] -> [C, 2L].
Tensor upsample_nearest2(const Tensor& x);

// Mean over time: [C, L] -> [C].
Tensor global_avg_pool(const Tensor& x);

// Row r of m [R, C] as a vector [C].
Tensor matrix_row(const Tensor& m, int r);

// sum_i weights[i] * scalars[i]; every input must be scalar.
Tensor weighted_sum(std::span<const Tensor> scalars, std::span<const double> weights);

// Numerically stable softmax of a plain vector (no graph involvement).
std::vector<double> softmax(std::span<const double> logits);

}  // namespace bci::nn
