#pragma once

#include <functional>
#include <span>

#include "ktsnn/tensor.hpp"

// Differentiable operations over Tensor. Every op records itself on the
// caller's Graph when any operand requires grad; otherwise it is a plain
// forward computation.
namespace ktsnn::num {

// Stride-1 cross-correlation. input [B, Cin, H, W], kernel [Cout, Cin, k, k].
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, std::size_t padding);

// Non-overlapping mean pooling; H and W must be divisible by the window.
Tensor avg_pool2d(Graph& g, const Tensor& input, std::size_t window = 2);

// input [B, D] x weight [D, M] + bias [M].
Tensor fully_connected(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias);

// Equal-shape elementwise ops.
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor sigmoid(Graph& g, const Tensor& x);
Tensor scale(Graph& g, const Tensor& x, double factor);
// x + c
Tensor shift(Graph& g, const Tensor& x, double offset);

enum class Elementwise { Sigmoid, Add, Mul, Scale, Sub };
// Dispatcher over the elementwise family. `factor` is only read by Scale.
Tensor elementwise(Graph& g, Elementwise op, std::span<const Tensor> operands, double factor = 1.0);

// Same data, new shape of equal element count.
Tensor reshape(Graph& g, const Tensor& x, Shape shape);
// Sum of all elements, shape [1].
Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);
// Element i of x as a [1] tensor.
Tensor pick(Graph& g, const Tensor& x, std::size_t index);
// Sum of [1]-shaped tensors.
Tensor add_all(Graph& g, std::span<const Tensor> scalars);

// Mean over the batch of -log softmax(logits)[label]. logits [B, K].
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const int> labels);

// Mean of squared differences.
Tensor mean_squared(Graph& g, const Tensor& pred, const Tensor& target);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
// Used as the oracle for the backward rules above.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace ktsnn::num
