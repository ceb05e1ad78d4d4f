#include "ktsnn/losses.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "ktsnn/error.hpp"
#include "ktsnn/ops.hpp"

namespace ktsnn::losses {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data().data(), t.dim(0), t.dim(1)); }

MatR center(const MatR& a) {
  const Eigen::VectorXd row_mean = a.rowwise().mean();
  const Eigen::RowVectorXd col_mean = a.colwise().mean();
  const double all = a.mean();
  MatR c = a;
  c.colwise() -= row_mean;
  c.rowwise() -= col_mean;
  c.array() += all;
  return c;
}

void require_square_pair(const Tensor& k, const Tensor& l, const char* op) {
  if (k.rank() != 2 || k.dim(0) != k.dim(1) || k.shape() != l.shape()) {
    throw Error(Errc::ShapeMismatch, std::string(op) + ": " + num::to_string(k.shape()) + " vs " + num::to_string(l.shape()));
  }
  if (k.dim(0) < 2) throw Error(Errc::DegenerateBatch, std::string(op) + " needs n >= 2");
}

std::span<const double> span_of(const MatR& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

void require_sequences(std::span<const Tensor> a, std::span<const Tensor> b, const char* op) {
  if (a.empty() || a.size() != b.size()) {
    throw Error(Errc::ShapeMismatch, std::string(op) + ": step counts " + std::to_string(a.size()) + " and " +
                                         std::to_string(b.size()));
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_cls_s >= 0.0) || !(lambda_kt >= 0.0)) throw Error(Errc::InvalidConfig, "loss weights must be >= 0");
  if (!(tet_lambda >= 0.0 && tet_lambda <= 1.0)) throw Error(Errc::InvalidConfig, "tet_lambda must lie in [0, 1]");
  if (!std::isfinite(tet_phi)) throw Error(Errc::InvalidConfig, "tet_phi must be finite");
}

Tensor gram_linear(Graph& g, const Tensor& features) {
  if (features.rank() != 2) throw Error(Errc::ShapeMismatch, "gram_linear needs [B, D] features");
  const std::size_t b = features.dim(0);
  if (b < 2) throw Error(Errc::DegenerateBatch, "gram_linear needs a batch of at least 2");
  const auto x = as_matrix(features);
  MatR k = x * x.transpose();
  std::vector<double> out(span_of(k).begin(), span_of(k).end());
  return g.record({b, b}, std::move(out), {features}, [features, b](std::span<const double> go) {
    const ConstMap gk(go.data(), b, b);
    MatR gx = (gk + gk.transpose()) * as_matrix(features);
    num::accumulate_grad(features, span_of(gx));
  });
}

Tensor hsic(Graph& g, const Tensor& k, const Tensor& l) {
  require_square_pair(k, l, "hsic");
  const double norm = std::pow(static_cast<double>(k.dim(0)) - 1.0, 2);
  const MatR kc = center(as_matrix(k));
  const MatR lc = center(as_matrix(l));
  // tr(K J L J) = sum_ij K_ij (J L J)_ji
  const double value = (as_matrix(k).array() * lc.transpose().array()).sum() / norm;
  return g.record({1}, {value}, {k, l}, [k, l, kc, lc, norm](std::span<const double> go) {
    if (k.requires_grad()) {
      MatR gk = lc.transpose() * (go[0] / norm);
      num::accumulate_grad(k, span_of(gk));
    }
    if (l.requires_grad()) {
      MatR gl = kc.transpose() * (go[0] / norm);
      num::accumulate_grad(l, span_of(gl));
    }
  });
}

Tensor cka(Graph& g, const Tensor& k, const Tensor& l) {
  require_square_pair(k, l, "cka");
  const double norm = std::pow(static_cast<double>(k.dim(0)) - 1.0, 2);
  const auto km = as_matrix(k);
  const auto lm = as_matrix(l);
  const MatR kc = center(km);
  const MatR lc = center(lm);
  // Centring is idempotent, so tr(K J L J) = <Kc, Lc^T>; using both centred
  // factors keeps the value exactly symmetric in K and L.
  const double kl = (kc.array() * lc.transpose().array()).sum() / norm;
  const double kk = (kc.array() * kc.transpose().array()).sum() / norm;
  const double ll = (lc.array() * lc.transpose().array()).sum() / norm;
  if (kk <= kDegenerateHsic || ll <= kDegenerateHsic) {
    throw Error(Errc::DegenerateFeatures, "self-HSIC " + std::to_string(std::min(kk, ll)) + " (constant features?)");
  }
  const double root = std::sqrt(kk * ll);
  // |kl| <= root by Cauchy-Schwarz; clamp away rounding past the bound.
  const double value = std::clamp(kl / root, -1.0, 1.0);
  return g.record({1}, {value}, {k, l}, [k, l, kc, lc, kl, kk, ll, root, norm](std::span<const double> go) {
    const double f = go[0] / (root * norm);
    // d/dK: (Lc^T - kl / (2 kk) * 2 Kc^T) / (root * norm)
    if (k.requires_grad()) {
      MatR gk = (lc.transpose() - (kl / kk) * kc.transpose()) * f;
      num::accumulate_grad(k, span_of(gk));
    }
    if (l.requires_grad()) {
      MatR gl = (kc.transpose() - (kl / ll) * lc.transpose()) * f;
      num::accumulate_grad(l, span_of(gl));
    }
  });
}

double linear_cka(const Tensor& x, const Tensor& y) {
  Graph g;
  const Tensor xd = x.detach();
  const Tensor yd = y.detach();
  return cka(g, gram_linear(g, xd), gram_linear(g, yd)).item();
}

Tensor mmd_linear(Graph& g, const Tensor& x, const Tensor& y) {
  num::require_same_shape(x, y, "mmd_linear");
  if (x.rank() != 2) throw Error(Errc::ShapeMismatch, "mmd_linear needs [B, D] features");
  const std::size_t b = x.dim(0);
  const std::size_t d = x.dim(1);
  const Eigen::RowVectorXd diff = as_matrix(x).colwise().mean() - as_matrix(y).colwise().mean();
  const double value = diff.squaredNorm();
  return g.record({1}, {value}, {x, y}, [x, y, diff, b, d](std::span<const double> go) {
    MatR gx(b, d);
    gx.rowwise() = diff * (2.0 * go[0] / static_cast<double>(b));
    num::accumulate_grad(x, span_of(gx));
    if (y.requires_grad()) {
      gx *= -1.0;
      num::accumulate_grad(y, span_of(gx));
    }
  });
}

Tensor per_step_cls_loss(Graph& g, const Tensor& head_out_t, std::span<const int> labels, const LossWeights& w) {
  Tensor ce = num::softmax_cross_entropy(g, head_out_t, labels);
  Tensor mse = num::mean_squared(g, head_out_t, Tensor::full(head_out_t.shape(), w.tet_phi));
  return num::add(g, num::scale(g, ce, 1.0 - w.tet_lambda), num::scale(g, mse, w.tet_lambda));
}

Tensor tet_loss(Graph& g, std::span<const Tensor> head_out, std::span<const int> labels, const LossWeights& w) {
  if (head_out.empty()) throw Error(Errc::ShapeMismatch, "tet_loss needs at least one step");
  std::vector<Tensor> terms;
  terms.reserve(head_out.size());
  for (const Tensor& out : head_out) terms.push_back(per_step_cls_loss(g, out, labels, w));
  return num::scale(g, num::add_all(g, terms), 1.0 / static_cast<double>(head_out.size()));
}

namespace {

// Per-step similarity for the training losses. A step whose features are
// constant over the batch (e.g. a silent upstream layer) has no defined CKA;
// it counts as dissimilar and passes no gradient instead of aborting the run.
Tensor step_similarity(Graph& g, const Tensor& s, const Tensor& t) {
  try {
    return cka(g, gram_linear(g, s), gram_linear(g, t));
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateFeatures) throw;
    return Tensor::scalar(0.0);
  }
}

}  // namespace

Tensor domain_alignment_loss(Graph& g, std::span<const Tensor> penult_s, std::span<const Tensor> penult_t) {
  require_sequences(penult_s, penult_t, "domain_alignment_loss");
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < penult_s.size(); ++t) {
    terms.push_back(step_similarity(g, penult_s[t], penult_t[t]));
  }
  const double inv_t = 1.0 / static_cast<double>(penult_s.size());
  return num::shift(g, num::scale(g, num::add_all(g, terms), -inv_t), 1.0);
}

Tensor mmd_alignment_loss(Graph& g, std::span<const Tensor> penult_s, std::span<const Tensor> penult_t) {
  require_sequences(penult_s, penult_t, "mmd_alignment_loss");
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < penult_s.size(); ++t) terms.push_back(mmd_linear(g, penult_s[t], penult_t[t]));
  return num::scale(g, num::add_all(g, terms), 1.0 / static_cast<double>(penult_s.size()));
}

Tensor knowledge_transfer_loss(Graph& g, std::span<const Tensor> penult_s, std::span<const Tensor> penult_t,
                               std::span<const Tensor> event_head_out, std::span<const int> labels,
                               const EtaParams& eta, const LossWeights& w, AlignmentMetric metric) {
  require_sequences(penult_s, penult_t, "knowledge_transfer_loss");
  const std::size_t steps = penult_s.size();
  if (event_head_out.size() != steps || eta.steps() != steps) {
    throw Error(Errc::ShapeMismatch, "knowledge_transfer_loss: head outputs / eta do not match " +
                                         std::to_string(steps) + " steps");
  }
  const double inv_t = 1.0 / static_cast<double>(steps);
  const Tensor weights = num::sigmoid(g, eta.eta);

  std::vector<Tensor> terms;
  terms.reserve(2 * steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor sig = num::pick(g, weights, t);
    if (metric == AlignmentMetric::Cka) {
      const Tensor sim = step_similarity(g, penult_s[t], penult_t[t]);
      terms.push_back(num::scale(g, num::mul(g, sig, sim), -inv_t));
    } else {
      const Tensor dist = mmd_linear(g, penult_s[t], penult_t[t]);
      terms.push_back(num::scale(g, num::mul(g, sig, dist), inv_t));
    }
    const Tensor cls = per_step_cls_loss(g, event_head_out[t], labels, w);
    const Tensor rest = num::shift(g, num::scale(g, sig, -1.0), 1.0);
    terms.push_back(num::scale(g, num::mul(g, rest, cls), inv_t));
  }
  Tensor total = num::add_all(g, terms);
  return metric == AlignmentMetric::Cka ? num::shift(g, total, 1.0) : total;
}

Tensor total_loss(Graph& g, const Tensor& cls_s, const Tensor& kt, const LossWeights& w, bool kt_active) {
  Tensor out = num::scale(g, cls_s, w.lambda_cls_s);
  if (kt_active) out = num::add(g, out, num::scale(g, kt, w.lambda_kt));
  return out;
}

double total_loss(double cls_s, double kt, const LossWeights& w, bool kt_active) {
  return w.lambda_cls_s * cls_s + (kt_active ? w.lambda_kt * kt : 0.0);
}

}  // namespace ktsnn::losses
