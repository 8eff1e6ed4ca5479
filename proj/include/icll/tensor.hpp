#pragma once

#include "icll/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace icll {

class Graph;

/// Dense row-major f64 tensor. Copies are shallow handles onto a shared
/// buffer; ops allocate fresh outputs. A tensor participates in reverse-mode
/// differentiation when it is attached to a Graph (leaves via Graph::watch,
/// intermediates via op recording).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Arr values);

  static Tensor scalar(double v);
  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor full(const Shape& s, double v);
  static Tensor from_vec(const Vec& v);
  static Tensor from_mat(const Mat& m);

  bool empty() const { return data_ == nullptr; }
  const Shape& shape() const { return shape_; }
  Index ndim() const { return Index(shape_.size()); }
  Index numel() const { return data_ ? Index(data_->size()) : 0; }
  Index last_dim() const { return shape_.empty() ? 1 : shape_.back(); }
  Index lead_dim() const { return numel() / last_dim(); }
  bool is_scalar() const { return numel() == 1; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  Eigen::Map<Arr> arr() { return {data_->data(), numel()}; }
  Eigen::Map<const Arr> arr() const { return {data_->data(), numel()}; }
  /// View as [lead_dim x last_dim] row-major matrix.
  Eigen::Map<MatRM> mat() { return {data_->data(), lead_dim(), last_dim()}; }
  Eigen::Map<const MatRM> mat() const {
    return {data_->data(), lead_dim(), last_dim()};
  }

  double item() const;
  Vec to_vec() const;
  Mat to_mat() const;

  bool has_grad() const { return grad_ != nullptr; }
  Eigen::Map<Arr> grad() const;
  void ensure_grad();
  void zero_grad();
  void drop_grad() { grad_.reset(); }

  Graph* graph() const { return graph_; }
  bool tracked() const { return graph_ != nullptr; }
  /// Same buffers, detached from any graph.
  Tensor detached() const;

 private:
  Shape shape_;
  std::shared_ptr<Arr> data_;
  std::shared_ptr<Arr> grad_;
  Graph* graph_ = nullptr;
  friend class Graph;
};

/// Append-only differentiation tape. Nodes are recorded in execution order;
/// backward() runs pull closures in reverse. A graph is confined to one
/// worker and may run backward exactly once.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Marks a leaf (parameter): attaches it to this graph and allocates its
  /// gradient buffer (preserving accumulated values).
  void watch(Tensor& t);

  /// Records an op node. `pull` accumulates output gradient into inputs.
  Tensor record(const char* op, Shape out_shape, Arr out_values,
                std::vector<Tensor> inputs,
                std::function<void(const Tensor& out, std::vector<Tensor>& inputs)> pull);

  /// Fills gradients of all watched/recorded tensors reachable from `loss`.
  void backward(const Tensor& loss);

  size_t num_nodes() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    const char* op;
    Tensor out;
    std::vector<Tensor> inputs;
    std::function<void(const Tensor&, std::vector<Tensor>&)> pull;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// Accumulate `g` into the gradient of `t` if `t` is attached to a graph.
void accum_grad(Tensor& t, const Arr& g);

}  // namespace icll
