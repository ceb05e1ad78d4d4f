#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ktsnn/losses.hpp"
#include "ktsnn/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ktsnn;
using namespace ktsnn::losses;
using num::Graph;

namespace {

Tensor matrix(const oracle::Matrix& m, bool grad = false) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return Tensor::from({m.size(), m[0].size()}, v, grad);
}

// Random symmetric PSD Gram matrix of rank <= d.
Tensor random_gram(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  Graph g(false);
  return gram_linear(g, oracle::random_tensor(rng, {n, d}, false));
}

Tensor random_orthogonal(std::mt19937_64& rng, std::size_t d) {
  // Gram-Schmidt on a random matrix; columns are orthonormal.
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v(d);
    for (double& x : v) x = nd(rng);
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    q.push_back(v);
  }
  return matrix(q);
}

std::vector<Tensor> random_sequence(std::mt19937_64& rng, std::size_t t, std::size_t b, std::size_t d, bool grad) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < t; ++i) out.push_back(oracle::random_tensor(rng, {b, d}, grad));
  return out;
}

}  // namespace

TEST(Gram, SmallCases) {
  Graph g;
  const Tensor k = gram_linear(g, Tensor::from({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(std::vector<double>(k.data().begin(), k.data().end()), (std::vector<double>{1, 0, 0, 1}));
  const Tensor ones = gram_linear(g, Tensor::from({2, 2}, {1, 0, 1, 0}));
  for (double v : ones.data()) EXPECT_EQ(v, 1.0);
  EXPECT_ERRC(gram_linear(g, Tensor::zeros({1, 3})), Errc::DegenerateBatch);
}

TEST(Gram, MatchesDoubleLoop) {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor(rng, {6, 4}, false);
  Graph g;
  const Tensor k = gram_linear(g, x);
  const oracle::Matrix ref = oracle::gram(oracle::rows_of(x));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(k[i * 6 + j], ref[i][j], 1e-14);
}

TEST(Hsic, IdentityAndConstant) {
  Graph g;
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  EXPECT_NEAR(hsic(g, eye, eye).item(), 1.0, 1e-15);
  EXPECT_NEAR(hsic(g, eye, Tensor::full({2, 2}, 1.0)).item(), 0.0, 1e-15);
}

TEST(Hsic, MatchesCenteredSumOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor a = oracle::random_tensor(rng, {5, 5}, false);
    const Tensor b = oracle::random_tensor(rng, {5, 5}, false);
    // Symmetrize.
    std::vector<double> ks(25), ls(25);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        ks[i * 5 + j] = a[i * 5 + j] + a[j * 5 + i];
        ls[i * 5 + j] = b[i * 5 + j] + b[j * 5 + i];
      }
    const Tensor k = Tensor::from({5, 5}, ks);
    const Tensor l = Tensor::from({5, 5}, ls);
    Graph g;
    EXPECT_NEAR(hsic(g, k, l).item(), oracle::hsic(oracle::rows_of(k), oracle::rows_of(l)), 1e-10);
  }
}

TEST(Cka, SelfSymmetryRange) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    const Tensor k = random_gram(rng, n, 1 + rng() % 5);
    const Tensor l = random_gram(rng, n, 1 + rng() % 5);
    Graph g(false);
    const double kl = cka(g, k, l).item();
    EXPECT_GE(kl, 0.0);
    EXPECT_LE(kl, 1.0);
    EXPECT_NEAR(kl, cka(g, l, k).item(), 1e-12);
    EXPECT_NEAR(cka(g, k, k).item(), 1.0, 1e-12);
  }
}

TEST(Cka, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = oracle::random_tensor(rng, {7, 3}, false);
    const Tensor y = oracle::random_tensor(rng, {7, 5}, false);
    EXPECT_NEAR(linear_cka(x, y), oracle::cka(oracle::gram(oracle::rows_of(x)), oracle::gram(oracle::rows_of(y))), 1e-12);
  }
}

TEST(Cka, RotationAndScalingInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng() % 6;
    const Tensor x = oracle::random_tensor(rng, {10, d}, false);
    const Tensor q = random_orthogonal(rng, d);
    const double c = (rng() % 2 ? -1.0 : 1.0) * std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    Graph g(false);
    const Tensor y = num::scale(g, num::fully_connected(g, x, q, Tensor::zeros({d})), c);
    EXPECT_NEAR(linear_cka(x, y), 1.0, 1e-8);
  }
}

TEST(Cka, IndependentFeaturesStrictlyInside) {
  std::mt19937_64 rng(6);
  const double v = linear_cka(oracle::random_tensor(rng, {64, 8}, false), oracle::random_tensor(rng, {64, 8}, false));
  EXPECT_GT(v, 0.0);
  EXPECT_LT(v, 1.0);
}

TEST(Cka, DegenerateFeaturesRejected) {
  Graph g;
  const Tensor k = Tensor::full({3, 3}, 2.0);
  const Tensor l = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_ERRC(cka(g, k, l), Errc::DegenerateFeatures);
}

TEST(Cka, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = oracle::random_tensor(rng, {5, 3});
    const Tensor y = oracle::random_tensor(rng, {5, 4});
    auto f = [&](Graph& g) { return cka(g, gram_linear(g, x), gram_linear(g, y)); };
    Graph g;
    g.backward(f(g));
    for (const Tensor& p : {x, y}) {
      const auto num = oracle::numeric_grad(
          [&] {
            Graph h(false);
            return f(h).item();
          },
          p);
      EXPECT_LT(oracle::rel_err(p.grad(), num), 1e-4);
    }
  }
}

TEST(Mmd, ValuesOracleAndGradient) {
  Graph g;
  const Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(mmd_linear(g, x, x).item(), 0.0);
  EXPECT_NEAR(mmd_linear(g, x, Tensor::from({2, 2}, {2, 2, 4, 4})).item(), 1.0, 1e-15);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor a = oracle::random_tensor(rng, {4, 3});
    const Tensor b = oracle::random_tensor(rng, {4, 3});
    Graph h;
    const Tensor m = mmd_linear(h, a, b);
    EXPECT_NEAR(m.item(), oracle::mmd(oracle::rows_of(a), oracle::rows_of(b)), 1e-10);
    h.backward(m);
    for (const Tensor& p : {a, b}) {
      const auto num = oracle::numeric_grad(
          [&] {
            Graph q(false);
            return mmd_linear(q, a, b).item();
          },
          p);
      EXPECT_LT(oracle::rel_err(p.grad(), num), 1e-4);
    }
  }
}

TEST(TetLoss, ReductionsAndOracle) {
  const std::vector<int> labels{0, 2, 1};
  std::mt19937_64 rng(9);
  LossWeights w;
  w.tet_lambda = 0.0;
  const Tensor o = oracle::random_tensor(rng, {3, 3}, false, -2, 2);
  Graph g;
  const std::vector<double> ov(o.data().begin(), o.data().end());
  EXPECT_NEAR(tet_loss(g, std::vector<Tensor>{o}, labels, w).item(), oracle::cross_entropy(ov, 3, labels), 1e-14);

  w.tet_lambda = 1.0;
  w.tet_phi = 0.7;
  EXPECT_NEAR(tet_loss(g, std::vector<Tensor>{Tensor::full({3, 3}, 0.7)}, labels, w).item(), 0.0, 1e-15);

  w = LossWeights{};
  w.tet_phi = 0.3;
  const auto seq = random_sequence(rng, 4, 3, 3, false);
  double ref = 0.0;
  for (const Tensor& t : seq) {
    const std::vector<double> tv(t.data().begin(), t.data().end());
    double mse = 0.0;
    for (double v : tv) mse += (v - 0.3) * (v - 0.3) / tv.size();
    ref += (1 - w.tet_lambda) * oracle::cross_entropy(tv, 3, labels) + w.tet_lambda * mse;
  }
  const double tet = tet_loss(g, seq, labels, w).item();
  EXPECT_NEAR(tet, ref / 4, 1e-13);

  double mean_steps = 0.0;
  for (const Tensor& t : seq) mean_steps += per_step_cls_loss(g, t, labels, w).item();
  EXPECT_NEAR(mean_steps / 4, tet, 1e-14);
}

TEST(TetLoss, ConfidentLogitsBeatUniform) {
  const std::vector<int> labels{1};
  LossWeights w;
  Graph g;
  const double uniform = per_step_cls_loss(g, Tensor::zeros({1, 3}), labels, w).item();
  const double sure = per_step_cls_loss(g, Tensor::from({1, 3}, {0, 4, 0}), labels, w).item();
  EXPECT_LT(sure, uniform);
}

TEST(DomainAlignment, ZeroForIdenticalOrRotated) {
  std::mt19937_64 rng(10);
  const auto s = random_sequence(rng, 3, 6, 4, false);
  Graph g;
  EXPECT_NEAR(domain_alignment_loss(g, s, s).item(), 0.0, 1e-12);
  const Tensor q = random_orthogonal(rng, 4);
  std::vector<Tensor> rotated;
  for (const Tensor& t : s) rotated.push_back(num::fully_connected(g, t, q, Tensor::zeros({4})));
  EXPECT_NEAR(domain_alignment_loss(g, s, rotated).item(), 0.0, 1e-8);
  const double v = domain_alignment_loss(g, s, random_sequence(rng, 3, 6, 4, false)).item();
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
}

TEST(DomainAlignment, SilentStepCountsAsDissimilar) {
  std::mt19937_64 rng(12);
  auto s = random_sequence(rng, 2, 6, 4, true);
  const auto t = random_sequence(rng, 2, 6, 4, true);
  s[0] = Tensor::zeros({6, 4}, true);
  Graph g;
  const Tensor loss = domain_alignment_loss(g, s, t);
  EXPECT_NEAR(loss.item(), 1.0 - 0.5 * linear_cka(s[1], t[1]), 1e-12);
  g.backward(loss);
  for (double v : t[0].grad()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(t[1].has_grad());
}

TEST(DomainAlignment, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_sequence(rng, 2, 5, 3, true);
    const auto t = random_sequence(rng, 2, 5, 3, true);
    Graph g;
    g.backward(domain_alignment_loss(g, s, t));
    for (const auto* seq : {&s, &t})
      for (const Tensor& p : *seq) {
        const auto num = oracle::numeric_grad(
            [&] {
              Graph h(false);
              return domain_alignment_loss(h, s, t).item();
            },
            p);
        EXPECT_LT(oracle::rel_err(p.grad(), num), 1e-4);
      }
  }
}

TEST(KnowledgeTransfer, EqualMixingAtZeroEta) {
  std::mt19937_64 rng(12);
  const std::vector<int> labels{0, 1, 2, 1, 0};
  const auto s = random_sequence(rng, 3, 5, 4, false);
  const auto t = random_sequence(rng, 3, 5, 4, false);
  const auto out = random_sequence(rng, 3, 5, 3, false);
  const LossWeights w;
  Graph g;
  const double kt = knowledge_transfer_loss(g, s, t, out, labels, EtaParams::zeros(3), w).item();
  double cka_mean = 0.0, cls_mean = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    cka_mean += linear_cka(s[i], t[i]) / 3;
    cls_mean += per_step_cls_loss(g, out[i], labels, w).item() / 3;
  }
  EXPECT_NEAR(kt, 1.0 - 0.5 * cka_mean + 0.5 * cls_mean, 1e-14);

  EtaParams big{Tensor::full({3}, 60.0, true)};
  EXPECT_NEAR(knowledge_transfer_loss(g, s, t, out, labels, big, w).item(), domain_alignment_loss(g, s, t).item(),
              1e-12);
  EXPECT_NEAR(knowledge_transfer_loss(g, s, s, out, labels, big, w).item(), 0.0, 1e-12);
}

TEST(KnowledgeTransfer, MmdVariant) {
  std::mt19937_64 rng(13);
  const std::vector<int> labels{0, 1, 1};
  const auto s = random_sequence(rng, 2, 3, 4, false);
  const auto t = random_sequence(rng, 2, 3, 4, false);
  const auto out = random_sequence(rng, 2, 3, 2, false);
  const LossWeights w;
  Graph g;
  double ref = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    ref += 0.5 * oracle::mmd(oracle::rows_of(s[i]), oracle::rows_of(t[i])) / 2 +
           0.5 * per_step_cls_loss(g, out[i], labels, w).item() / 2;
  EXPECT_NEAR(knowledge_transfer_loss(g, s, t, out, labels, EtaParams::zeros(2), w, AlignmentMetric::Mmd).item(), ref,
              1e-12);
}

TEST(KnowledgeTransfer, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  const std::vector<int> labels{0, 1, 2, 1};
  const LossWeights w;
  for (AlignmentMetric metric : {AlignmentMetric::Cka, AlignmentMetric::Mmd}) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = random_sequence(rng, 2, 4, 3, true);
      const auto t = random_sequence(rng, 2, 4, 3, true);
      const auto out = random_sequence(rng, 2, 4, 3, true);
      EtaParams eta{oracle::random_tensor(rng, {2})};
      auto f = [&](Graph& g) { return knowledge_transfer_loss(g, s, t, out, labels, eta, w, metric); };
      Graph g;
      g.backward(f(g));
      std::vector<Tensor> all{eta.eta};
      for (const auto* seq : {&s, &t, &out}) all.insert(all.end(), seq->begin(), seq->end());
      for (const Tensor& p : all) {
        const auto num = oracle::numeric_grad(
            [&] {
              Graph h(false);
              return f(h).item();
            },
            p);
        EXPECT_LT(oracle::rel_err(p.grad(), num), 1e-4);
      }
    }
  }
}

TEST(TotalLoss, Gate) {
  const LossWeights w;
  EXPECT_EQ(total_loss(2.0, 4.0, w, true), 4.0);
  EXPECT_EQ(total_loss(2.0, 4.0, w, false), 2.0);
  LossWeights zero = w;
  zero.lambda_kt = 0.0;
  EXPECT_EQ(total_loss(2.0, 4.0, zero, true), total_loss(2.0, 4.0, w, false));
  Graph g;
  EXPECT_EQ(total_loss(g, Tensor::scalar(2.0), Tensor::scalar(4.0), w, true).item(), 4.0);
}
