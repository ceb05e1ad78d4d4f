#include "ktsnn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ktsnn/error.hpp"

namespace ktsnn::num {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;
using MutMap = Eigen::Map<MatR>;

struct ConvGeom {
  std::size_t batch, in_ch, height, width, out_ch, k, pad, out_h, out_w;
  std::size_t col_rows() const { return in_ch * k * k; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// cols[(c*k + ki)*k + kj, oy*out_w + ox] = x[c, oy + ki - pad, ox + kj - pad]
void im2col(const ConvGeom& cg, const double* x, double* cols) {
  const std::size_t ncols = cg.col_cols();
  for (std::size_t c = 0; c < cg.in_ch; ++c) {
    for (std::size_t ki = 0; ki < cg.k; ++ki) {
      for (std::size_t kj = 0; kj < cg.k; ++kj) {
        double* row = cols + ((c * cg.k + ki) * cg.k + kj) * ncols;
        for (std::size_t oy = 0; oy < cg.out_h; ++oy) {
          const long iy = static_cast<long>(oy + ki) - static_cast<long>(cg.pad);
          double* dst = row + oy * cg.out_w;
          if (iy < 0 || iy >= static_cast<long>(cg.height)) {
            std::fill(dst, dst + cg.out_w, 0.0);
            continue;
          }
          const double* src = x + (c * cg.height + static_cast<std::size_t>(iy)) * cg.width;
          for (std::size_t ox = 0; ox < cg.out_w; ++ox) {
            const long ix = static_cast<long>(ox + kj) - static_cast<long>(cg.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(cg.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeom& cg, const double* cols, double* dx) {
  const std::size_t ncols = cg.col_cols();
  for (std::size_t c = 0; c < cg.in_ch; ++c) {
    for (std::size_t ki = 0; ki < cg.k; ++ki) {
      for (std::size_t kj = 0; kj < cg.k; ++kj) {
        const double* row = cols + ((c * cg.k + ki) * cg.k + kj) * ncols;
        for (std::size_t oy = 0; oy < cg.out_h; ++oy) {
          const long iy = static_cast<long>(oy + ki) - static_cast<long>(cg.pad);
          if (iy < 0 || iy >= static_cast<long>(cg.height)) continue;
          double* dst = dx + (c * cg.height + static_cast<std::size_t>(iy)) * cg.width;
          for (std::size_t ox = 0; ox < cg.out_w; ++ox) {
            const long ix = static_cast<long>(ox + kj) - static_cast<long>(cg.pad);
            if (ix >= 0 && ix < static_cast<long>(cg.width)) dst[ix] += row[oy * cg.out_w + ox];
          }
        }
      }
    }
  }
}

template <typename F>
Tensor unary(Graph& g, const Tensor& x, F forward_and_deriv) {
  std::vector<double> out(x.size());
  std::vector<double> deriv(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto [v, d] = forward_and_deriv(xs[i]);
    out[i] = v;
    deriv[i] = d;
  }
  return g.record(x.shape(), std::move(out), {x}, [x, deriv = std::move(deriv)](std::span<const double> go) {
    std::vector<double> gx(go.size());
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] = go[i] * deriv[i];
    accumulate_grad(x, gx);
  });
}

}  // namespace

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::ShapeMismatch, std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4 || kernel.dim(1) != input.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    throw Error(Errc::ShapeMismatch,
                "conv2d: input " + to_string(input.shape()) + " with kernel " + to_string(kernel.shape()));
  }
  const std::size_t k = kernel.dim(2);
  if (input.dim(2) + 2 * padding < k || input.dim(3) + 2 * padding < k) {
    throw Error(Errc::ShapeMismatch, "conv2d: kernel larger than padded input");
  }
  const ConvGeom cg{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), k, padding,
                    input.dim(2) + 2 * padding - k + 1, input.dim(3) + 2 * padding - k + 1};

  const std::size_t in_stride = cg.in_ch * cg.height * cg.width;
  const std::size_t out_stride = cg.out_ch * cg.col_cols();
  std::vector<double> out(cg.batch * out_stride);
  std::vector<double> cols(cg.col_rows() * cg.col_cols());
  const ConstMap w(kernel.data().data(), cg.out_ch, cg.col_rows());
  for (std::size_t b = 0; b < cg.batch; ++b) {
    im2col(cg, input.data().data() + b * in_stride, cols.data());
    MutMap(out.data() + b * out_stride, cg.out_ch, cg.col_cols()).noalias() =
        w * ConstMap(cols.data(), cg.col_rows(), cg.col_cols());
  }

  return g.record({cg.batch, cg.out_ch, cg.out_h, cg.out_w}, std::move(out), {input, kernel},
                  [input, kernel, cg, in_stride, out_stride](std::span<const double> go) {
                    std::vector<double> cols(cg.col_rows() * cg.col_cols());
                    std::vector<double> gcols(cols.size());
                    std::vector<double> gx(input.requires_grad() ? input.size() : 0, 0.0);
                    MatR gw = MatR::Zero(cg.out_ch, cg.col_rows());
                    const ConstMap w(kernel.data().data(), cg.out_ch, cg.col_rows());
                    for (std::size_t b = 0; b < cg.batch; ++b) {
                      const ConstMap gout(go.data() + b * out_stride, cg.out_ch, cg.col_cols());
                      if (kernel.requires_grad()) {
                        im2col(cg, input.data().data() + b * in_stride, cols.data());
                        gw.noalias() += gout * ConstMap(cols.data(), cg.col_rows(), cg.col_cols()).transpose();
                      }
                      if (input.requires_grad()) {
                        MutMap(gcols.data(), cg.col_rows(), cg.col_cols()).noalias() = w.transpose() * gout;
                        col2im_add(cg, gcols.data(), gx.data() + b * in_stride);
                      }
                    }
                    if (kernel.requires_grad()) accumulate_grad(kernel, std::span<const double>(gw.data(), gw.size()));
                    if (input.requires_grad()) accumulate_grad(input, gx);
                  });
}

Tensor avg_pool2d(Graph& g, const Tensor& input, std::size_t window) {
  if (input.rank() != 4 || window == 0) throw Error(Errc::ShapeMismatch, "avg_pool2d: need [B, C, H, W]");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2);
  const std::size_t w = input.dim(3);
  if (h % window != 0 || w % window != 0 || h < window || w < window) {
    throw Error(Errc::OddExtent, "avg_pool2d: " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
                                     std::to_string(window));
  }
  const std::size_t oh = h / window;
  const std::size_t ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(planes * oh * ow, 0.0);
  const auto x = input.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(p * oh + y / window) * ow + xx / window] += x[(p * h + y) * w + xx] * inv;
      }
    }
  }
  return g.record({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input},
                  [input, planes, h, w, oh, ow, window, inv](std::span<const double> go) {
                    std::vector<double> gx(input.size());
                    for (std::size_t p = 0; p < planes; ++p) {
                      for (std::size_t y = 0; y < h; ++y) {
                        for (std::size_t xx = 0; xx < w; ++xx) {
                          gx[(p * h + y) * w + xx] = go[(p * oh + y / window) * ow + xx / window] * inv;
                        }
                      }
                    }
                    accumulate_grad(input, gx);
                  });
}

Tensor fully_connected(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 || input.dim(1) != weight.dim(0) ||
      bias.dim(0) != weight.dim(1)) {
    throw Error(Errc::ShapeMismatch, "fully_connected: input " + to_string(input.shape()) + ", weight " +
                                         to_string(weight.shape()) + ", bias " + to_string(bias.shape()));
  }
  const std::size_t b = input.dim(0);
  const std::size_t d = input.dim(1);
  const std::size_t m = weight.dim(1);
  std::vector<double> out(b * m);
  MutMap y(out.data(), b, m);
  y.noalias() = ConstMap(input.data().data(), b, d) * ConstMap(weight.data().data(), d, m);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), m);

  return g.record({b, m}, std::move(out), {input, weight, bias}, [input, weight, bias, b, d, m](std::span<const double> go) {
    const ConstMap gout(go.data(), b, m);
    if (input.requires_grad()) {
      MatR gx = gout * ConstMap(weight.data().data(), d, m).transpose();
      accumulate_grad(input, std::span<const double>(gx.data(), gx.size()));
    }
    if (weight.requires_grad()) {
      MatR gw = ConstMap(input.data().data(), b, d).transpose() * gout;
      accumulate_grad(weight, std::span<const double>(gw.data(), gw.size()));
    }
    if (bias.requires_grad()) {
      Eigen::RowVectorXd gb = gout.colwise().sum();
      accumulate_grad(bias, std::span<const double>(gb.data(), gb.size()));
    }
  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return g.record(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> go) {
    accumulate_grad(a, go);
    accumulate_grad(b, go);
  });
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return g.record(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> go) {
    accumulate_grad(a, go);
    if (b.requires_grad()) {
      std::vector<double> neg(go.begin(), go.end());
      for (double& v : neg) v = -v;
      accumulate_grad(b, neg);
    }
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return g.record(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> go) {
    std::vector<double> tmp(go.size());
    if (a.requires_grad()) {
      for (std::size_t i = 0; i < go.size(); ++i) tmp[i] = go[i] * b[i];
      accumulate_grad(a, tmp);
    }
    if (b.requires_grad()) {
      for (std::size_t i = 0; i < go.size(); ++i) tmp[i] = go[i] * a[i];
      accumulate_grad(b, tmp);
    }
  });
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  return unary(g, x, [](double v) {
    // Branch keeps exp() from overflowing for large |v|.
    const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{s, s * (1.0 - s)};
  });
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  return unary(g, x, [factor](double v) { return std::pair{v * factor, factor}; });
}

Tensor shift(Graph& g, const Tensor& x, double offset) {
  return unary(g, x, [offset](double v) { return std::pair{v + offset, 1.0}; });
}

Tensor elementwise(Graph& g, Elementwise op, std::span<const Tensor> operands, double factor) {
  const std::size_t arity = (op == Elementwise::Sigmoid || op == Elementwise::Scale) ? 1 : 2;
  if (operands.size() != arity) throw Error(Errc::ShapeMismatch, "elementwise: wrong operand count");
  switch (op) {
    case Elementwise::Sigmoid: return sigmoid(g, operands[0]);
    case Elementwise::Scale: return scale(g, operands[0], factor);
    case Elementwise::Add: return add(g, operands[0], operands[1]);
    case Elementwise::Sub: return sub(g, operands[0], operands[1]);
    case Elementwise::Mul: return mul(g, operands[0], operands[1]);
  }
  throw Error(Errc::ShapeMismatch, "elementwise: unknown op");
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw Error(Errc::ShapeMismatch, "reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return g.record(std::move(shape), std::move(out), {x}, [x](std::span<const double> go) { accumulate_grad(x, go); });
}

Tensor sum(Graph& g, const Tensor& x) {
  const double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return g.record({1}, {s}, {x}, [x](std::span<const double> go) {
    accumulate_grad(x, std::vector<double>(x.size(), go[0]));
  });
}

Tensor mean(Graph& g, const Tensor& x) {
  const double n = static_cast<double>(x.size());
  const double s = std::accumulate(x.data().begin(), x.data().end(), 0.0) / n;
  return g.record({1}, {s}, {x}, [x, n](std::span<const double> go) {
    accumulate_grad(x, std::vector<double>(x.size(), go[0] / n));
  });
}

Tensor pick(Graph& g, const Tensor& x, std::size_t index) {
  if (index >= x.size()) throw Error(Errc::ShapeMismatch, "pick: index out of range");
  return g.record({1}, {x[index]}, {x}, [x, index](std::span<const double> go) {
    std::vector<double> gx(x.size(), 0.0);
    gx[index] = go[0];
    accumulate_grad(x, gx);
  });
}

Tensor add_all(Graph& g, std::span<const Tensor> scalars) {
  double s = 0.0;
  for (const Tensor& t : scalars) s += t.item();
  std::vector<Tensor> parents(scalars.begin(), scalars.end());
  return g.record({1}, {s}, parents, [parents](std::span<const double> go) {
    for (const Tensor& p : parents) accumulate_grad(p, go);
  });
}

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw Error(Errc::ShapeMismatch, "softmax_cross_entropy: logits " + to_string(logits.shape()) + " with " +
                                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.dim(0);
  const std::size_t k = logits.dim(1);
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(labels[i]) + " with " + std::to_string(k) + " classes");
    }
    const double* z = logits.data().data() + i * k;
    const double zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(z[j] - zmax) / denom;
    loss += std::log(denom) + zmax - z[labels[i]];
  }
  loss /= static_cast<double>(b);
  std::vector<int> lab(labels.begin(), labels.end());
  return g.record({1}, {loss}, {logits}, [logits, probs = std::move(probs), lab = std::move(lab), b, k](std::span<const double> go) {
    std::vector<double> gz(probs);
    for (std::size_t i = 0; i < b; ++i) gz[i * k + static_cast<std::size_t>(lab[i])] -= 1.0;
    const double f = go[0] / static_cast<double>(b);
    for (double& v : gz) v *= f;
    accumulate_grad(logits, gz);
  });
}

Tensor mean_squared(Graph& g, const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mean_squared");
  const double n = static_cast<double>(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return g.record({1}, {s / n}, {pred, target}, [pred, target, n](std::span<const double> go) {
    std::vector<double> gd(pred.size());
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] = 2.0 * (pred[i] - target[i]) / n * go[0];
    accumulate_grad(pred, gd);
    if (target.requires_grad()) {
      for (double& v : gd) v = -v;
      accumulate_grad(target, gd);
    }
  });
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor probe = x.detach();
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe.mutable_data()[i] = orig + h;
    const double up = f(probe);
    probe.mutable_data()[i] = orig - h;
    const double down = f(probe);
    probe.mutable_data()[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor::from(x.shape(), std::move(grad));
}

}  // namespace ktsnn::num
