#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hinite/errors.hpp"
#include "hinite/rng.hpp"

namespace hinite {

// Row-major 2-d extent. Column vectors are {n, 1}, row vectors {1, n}.
struct Shape {
  int rows = 0;
  int cols = 0;

  long long size() const { return static_cast<long long>(rows) * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

class Tape;

/// Handle to one node of a Tape: a dense float64 array plus its slot in the
/// differentiation graph. Cheap to copy; invalidated by Tape::reset().
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::span<const double> values() const;
  // Gradient of the last backward() loss w.r.t. this node. Only nodes created
  // with requires_grad (or downstream of one) carry gradients.
  std::span<const double> grad() const;
  double at(int r, int c) const;
  double scalar() const;
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Contiguous grouping of entries: segment s covers [offsets[s], offsets[s+1]).
struct Segments {
  std::vector<int> offsets;

  int count() const { return offsets.empty() ? 0 : static_cast<int>(offsets.size()) - 1; }
  int entries() const { return offsets.empty() ? 0 : offsets.back(); }
};

/// Reverse-mode differentiation tape. Records every primitive applied to its
/// tensors and replays adjoints in reverse creation order; gradients
/// accumulate additively when a node feeds several consumers. reset() keeps
/// the node storage, so a tape rebuilt with the same computation every
/// iteration does not reallocate.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- leaves ---
  Tensor leaf(const Shape& shape, std::span<const double> values, bool requires_grad = false);
  Tensor constant(const Shape& shape, std::span<const double> values) {
    return leaf(shape, values, false);
  }
  Tensor scalar_leaf(double v, bool requires_grad = false);

  // --- primitives ---
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
  Tensor scale(const Tensor& a, double c);
  Tensor scale_by(const Tensor& a, const Tensor& s);          // s is 1x1
  Tensor add_row_bias(const Tensor& a, const Tensor& bias);   // bias is 1xcols
  Tensor relu(const Tensor& a);
  Tensor leaky_relu(const Tensor& a, double slope);
  Tensor exp(const Tensor& a);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor gather_rows(const Tensor& a, std::span<const int> idx);
  Tensor column(const Tensor& a, int j);
  Tensor scale_rows(const Tensor& a, const Tensor& w);        // w is rows x 1
  Tensor segment_sum_rows(const Tensor& a, const Segments& seg);
  // Within each segment: exp(x - max) / sum. Segments must be nonempty.
  Tensor segment_softmax(const Tensor& logits, const Segments& seg);
  Tensor softmax_rows(const Tensor& a);
  Tensor pairwise_sqdist(const Tensor& a);                    // n x n, exact 0 diagonal
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  // Inverted dropout: identity when !training or rate == 0.
  Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. loss must be
  // scalar (1x1); gradients of all requires_grad nodes become readable.
  void backward(const Tensor& loss);

  // Drops all nodes but keeps their buffers for reuse.
  void reset();
  int node_count() const { return live_; }

 private:
  friend class Tensor;

  struct Node {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;
    std::vector<int> aux_i;     // op-specific indices (gather maps, segment offsets)
    std::vector<double> aux_d;  // op-specific data (dropout masks)
    bool needs = false;
    std::function<void()> back;  // empty for leaves
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor alloc(const Shape& shape, bool needs);
  std::span<double> val_mut(int id);
  std::span<double> grad_of(int id);
  bool req(int id) const { return node(id).needs; }

  // deque keeps node references stable while ops append new nodes
  std::deque<Node> nodes_;
  int live_ = 0;
};

}  // namespace hinite
