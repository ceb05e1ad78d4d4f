#pragma once

#include <span>

#include "ktsnn/tensor.hpp"

namespace ktsnn::losses {

using num::Graph;
using num::Tensor;

struct LossWeights {
  double lambda_cls_s = 1.0;
  double lambda_kt = 0.5;
  double tet_lambda = 0.05;
  double tet_phi = 0.5;

  void validate() const;
};

// Learnable per-step coefficients; sigmoid(eta_t) weights the alignment term
// at step t. Starts at zero (equal weighting).
struct EtaParams {
  Tensor eta;

  static EtaParams zeros(std::size_t steps) { return {Tensor::zeros({steps}, true)}; }
  std::size_t steps() const { return eta.size(); }
};

// Self-HSIC at or below this is treated as constant features.
inline constexpr double kDegenerateHsic = 1e-12;

// K = X X^T for features X [B, D], B >= 2.
Tensor gram_linear(Graph& g, const Tensor& features);

// tr(K J L J) / (n - 1)^2 with J = I - 11^T / n.
Tensor hsic(Graph& g, const Tensor& k, const Tensor& l);

// HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)).
Tensor cka(Graph& g, const Tensor& k, const Tensor& l);

// Linear CKA between two feature sets [B, D1] and [B, D2], no gradient.
double linear_cka(const Tensor& x, const Tensor& y);

// ||mean(X) - mean(Y)||^2, the linear-kernel MMD estimate.
Tensor mmd_linear(Graph& g, const Tensor& x, const Tensor& y);

// (1 - tet_lambda) CE + tet_lambda MSE(out, tet_phi) at one step.
Tensor per_step_cls_loss(Graph& g, const Tensor& head_out_t, std::span<const int> labels, const LossWeights& w);

// Time average of per_step_cls_loss.
Tensor tet_loss(Graph& g, std::span<const Tensor> head_out, std::span<const int> labels, const LossWeights& w);

// 1 - mean_t CKA(gram(s_t), gram(t_t)). In this and the transfer loss a step
// whose features are constant over the batch counts as CKA 0 with no gradient.
Tensor domain_alignment_loss(Graph& g, std::span<const Tensor> penult_s, std::span<const Tensor> penult_t);

enum class AlignmentMetric { Cka, Mmd };

// 1 - (1/T) sum_t sig(eta_t) CKA_t + (1/T) sum_t (1 - sig(eta_t)) cls_e(t).
// With the MMD metric the alignment part becomes (1/T) sum_t sig(eta_t) MMD_t.
Tensor knowledge_transfer_loss(Graph& g, std::span<const Tensor> penult_s, std::span<const Tensor> penult_t,
                               std::span<const Tensor> event_head_out, std::span<const int> labels,
                               const EtaParams& eta, const LossWeights& w,
                               AlignmentMetric metric = AlignmentMetric::Cka);

// Mean over t of MMD between paired features; the alignment-only loss for
// the MMD metric.
Tensor mmd_alignment_loss(Graph& g, std::span<const Tensor> penult_s, std::span<const Tensor> penult_t);

// lambda_cls_s * cls_s + (kt_active ? lambda_kt * kt : 0).
Tensor total_loss(Graph& g, const Tensor& cls_s, const Tensor& kt, const LossWeights& w, bool kt_active);
double total_loss(double cls_s, double kt, const LossWeights& w, bool kt_active);

}  // namespace ktsnn::losses
