#include "icll/tensor.hpp"

namespace icll {

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<Arr>(Arr::Zero(icll::numel(shape_)))) {
  for (Index d : shape_) check(d > 0, "tensor: non-positive extent " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, Arr values) : shape_(std::move(shape)) {
  check(Index(values.size()) == icll::numel(shape_),
        "tensor: value count " + std::to_string(values.size()) +
            " does not match shape " + shape_str(shape_));
  data_ = std::make_shared<Arr>(std::move(values));
}

Tensor Tensor::scalar(double v) {
  Arr a(1);
  a[0] = v;
  return Tensor({1}, std::move(a));
}

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(s, Arr::Constant(icll::numel(s), v));
}

Tensor Tensor::from_vec(const Vec& v) {
  return Tensor({v.size()}, v.array());
}

Tensor Tensor::from_mat(const Mat& m) {
  MatRM rm = m;
  return Tensor({m.rows(), m.cols()},
                Eigen::Map<const Arr>(rm.data(), rm.size()));
}

double Tensor::item() const {
  check(is_scalar(), "item: tensor " + shape_str(shape_) + " is not scalar");
  return (*data_)[0];
}

Vec Tensor::to_vec() const {
  return Eigen::Map<const Vec>(data_->data(), numel());
}

Mat Tensor::to_mat() const { return mat(); }

Eigen::Map<Arr> Tensor::grad() const {
  check(grad_ != nullptr, "grad: no gradient buffer allocated");
  return {grad_->data(), Index(grad_->size())};
}

void Tensor::ensure_grad() {
  if (!grad_) grad_ = std::make_shared<Arr>(Arr::Zero(numel()));
}

void Tensor::zero_grad() {
  if (grad_) grad_->setZero();
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.graph_ = nullptr;
  return t;
}

void Graph::watch(Tensor& t) {
  check(!t.empty(), "watch: empty tensor");
  check(t.graph_ == nullptr || t.graph_ == this,
        "watch: tensor already attached to another graph");
  t.graph_ = this;
  t.ensure_grad();
}

Tensor Graph::record(const char* op, Shape out_shape, Arr out_values,
                     std::vector<Tensor> inputs,
                     std::function<void(const Tensor&, std::vector<Tensor>&)> pull) {
  Tensor out(std::move(out_shape), std::move(out_values));
  out.graph_ = this;
  out.ensure_grad();
  nodes_.push_back(Node{op, out, std::move(inputs), std::move(pull)});
  return out;
}

void Graph::backward(const Tensor& loss) {
  check(!backward_done_, "backward: graph already ran backward; build a fresh graph");
  check(loss.is_scalar(), "backward: loss has shape " + shape_str(loss.shape()) +
                              ", expected a scalar");
  check(loss.graph_ == this, "backward: loss does not belong to this graph");
  backward_done_ = true;
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->pull(it->out, it->inputs);
  }
}

void accum_grad(Tensor& t, const Arr& g) {
  if (!t.tracked()) return;
  t.ensure_grad();
  t.grad() += g;
}

}  // namespace icll
