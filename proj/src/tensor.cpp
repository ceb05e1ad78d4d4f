#include "ktsnn/tensor.hpp"

#include <cmath>

#include "ktsnn/error.hpp"

namespace ktsnn::num {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw Error(Errc::ShapeMismatch, "shape " + to_string(shape) + " does not hold " + std::to_string(values.size()) +
                                         " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw Error(Errc::ShapeMismatch, "item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

void accumulate_grad(const Tensor& t, std::span<const double> values) {
  if (!t.requires_grad()) return;
  std::span<double> g = t.node().grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

Tensor Graph::record(Shape shape, std::vector<double> value, std::span<const Tensor> parents, BackwardFn backward) {
  for (double v : value) {
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "op produced a non-finite value");
  }
  bool needs_grad = false;
  if (!recording_) parents = {};
  for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  Tensor out = Tensor::from(std::move(shape), std::move(value), needs_grad);
  if (needs_grad) {
    out.node_->backward = std::move(backward);
    tape_.push_back(out.node_);
  }
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) throw Error(Errc::ShapeMismatch, "backward needs a scalar loss");
  if (!loss.requires_grad()) return;
  loss.node().grad_buffer()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty() || !n.backward) continue;
    n.backward(n.grad);
  }
}

}  // namespace ktsnn::num
