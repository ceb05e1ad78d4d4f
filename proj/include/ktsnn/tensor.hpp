#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ktsnn::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Storage behind a Tensor handle. grad stays empty until something
// accumulates into it.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::function<void(std::span<const double>)> backward;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

// Shared handle to a row-major real array. Copies alias the same storage;
// use detach() for an independent copy without history.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Writing through this is only legal on tensors without recorded history.
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  Tensor detach() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend class Graph;

  std::shared_ptr<Node> node_;
};

// Tape of recorded operations. Ops append their outputs in creation order,
// which is already a topological order, so backward just walks it in reverse.
class Graph {
 public:
  // A non-recording graph runs ops forward only, e.g. for evaluation.
  explicit Graph(bool recording = true) : recording_(recording) {}

  using BackwardFn = std::function<void(std::span<const double>)>;

  // Creates an op output. If any parent requires grad the output is put on
  // the tape and `backward` will later receive the output gradient.
  Tensor record(Shape shape, std::vector<double> value, std::span<const Tensor> parents, BackwardFn backward);
  Tensor record(Shape shape, std::vector<double> value, std::initializer_list<Tensor> parents,
                BackwardFn backward) {
    return record(std::move(shape), std::move(value), std::span<const Tensor>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  // Seeds d(loss)/d(loss) = 1 and accumulates into every leaf that
  // requires grad. loss must hold a single element.
  void backward(const Tensor& loss);

  void clear() { tape_.clear(); }
  std::size_t size() const { return tape_.size(); }
  bool recording() const { return recording_; }

 private:
  bool recording_ = true;
  std::vector<std::shared_ptr<Node>> tape_;
};

// Adds `values` into t's gradient if t requires grad.
void accumulate_grad(const Tensor& t, std::span<const double> values);

}  // namespace ktsnn::num
