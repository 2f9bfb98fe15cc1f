#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "scfnet/attention.hpp"
#include "scfnet/gradcheck.hpp"
#include "scfnet/ops.hpp"
#include "test_util.hpp"

using namespace scfnet;
using scfnet::testing::max_abs_diff;
using scfnet::testing::random_tensor;

namespace {

using TensorD = Tensor<double>;

void fill(TensorD t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

void zero_gate(GateParams<double>& g) {
  for (auto* t : {&g.fc1_w, &g.fc1_b, &g.fc2_w, &g.fc2_b, &g.spatial_w, &g.spatial_b}) fill(*t, 0.0);
}

std::vector<TensorD> gate_tensors(const GateParams<double>& g) {
  return {g.fc1_w, g.fc1_b, g.fc2_w, g.fc2_b, g.spatial_w, g.spatial_b};
}

TensorD weighted_sum(const TensorD& y, std::uint64_t seed = 21) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng)));
}

double check(const std::function<TensorD()>& f, std::vector<TensorD> inputs) {
  GradcheckOptions opt;
  opt.eps = 1e-5;
  return gradcheck(f, std::move(inputs), opt).max_rel_error;
}

void expect_scaled(const TensorD& y, const TensorD& x, double k) {
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.at(i), k * x.at(i), 1e-12);
}

}  // namespace

TEST(Gates, ZeroParametersGiveClosedFormScales) {
  ParamStore<double> store(1);
  auto g = GateParams<double>::create(store, "g", 4, 8, 7);
  zero_gate(g);
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 4, 3, 5}, rng);
  expect_scaled(soft_attention_enhance(x, g), x, 0.25);
  expect_scaled(gac_enhance(x, g), x, 1.25);
  expect_scaled(gaf_fuse(x, g), x, 1.25);
}

TEST(Gates, BottleneckRoundsUp) {
  ParamStore<double> store(1);
  EXPECT_EQ(GateParams<double>::create(store, "a", 4, 8, 7).fc1_w.dim(0), 1u);
  EXPECT_EQ(GateParams<double>::create(store, "b", 17, 8, 7).fc1_w.dim(0), 3u);
  EXPECT_EQ(GateParams<double>::create(store, "c", 64, 8, 7).fc1_w.dim(0), 8u);
  EXPECT_THROW(GateParams<double>::create(store, "d", 4, 8, 4), ConfigError);
}

TEST(Gates, PreserveShapeAndMatchOracle) {
  ParamStore<double> store(2);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> d(1, 6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = d(rng), h = d(rng), w = d(rng);
    auto g = GateParams<double>::create(store, "g" + std::to_string(trial), c, 8, 7);
    auto x = random_tensor({1, c, h, w}, rng);
    auto y = soft_attention_enhance(x, g);
    ASSERT_EQ(y.shape(), x.shape());
    EXPECT_LT(max_abs_diff(y.data(), oracle::gate(oracle::from_tensor(x), g).v), 1e-12);
    EXPECT_EQ(gaf_fuse(gac_enhance(x, g), g).shape(), x.shape());
  }
}

TEST(Gates, Gradcheck) {
  ParamStore<double> store(3);
  auto g = GateParams<double>::create(store, "g", 4, 8, 7);
  std::mt19937_64 rng(3);
  auto x = random_tensor({1, 4, 4, 4}, rng);
  auto in = gate_tensors(g);
  in.insert(in.begin(), x);
  EXPECT_LT(check([&] { return weighted_sum(soft_attention_enhance(x, g)); }, in), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(gac_enhance(x, g)); }, in), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(gaf_fuse(x, g)); }, in), 1e-4);
}

TEST(Pcm, ParameterShapes) {
  ParamStore<double> store(4);
  auto p = PcmParams<double>::create(store, "pcm", 8, 2, 8, 7);
  EXPECT_EQ(p.eta.shape(), (Shape{4, 8, 1, 1}));
  EXPECT_EQ(p.weight.shape(), (Shape{4, 4, 1, 1}));
  EXPECT_DOUBLE_EQ(p.weight.at(0), 0.5);
  EXPECT_DOUBLE_EQ(p.weight.at(1), 0.0);
  auto tiny = PcmParams<double>::create(store, "tiny", 1, 2, 8, 7);
  EXPECT_EQ(tiny.eta.dim(0), 1u);
}

TEST(Pcm, SingleLocationAttendsToItself) {
  ParamStore<double> store(5);
  auto params = PcmParams<double>::create(store, "pcm", 4, 2, 8, 7);
  std::mt19937_64 rng(5);
  auto p = random_tensor({2, 4, 1, 1}, rng), q = random_tensor({2, 4, 1, 1}, rng);
  auto [po, qo] = pcm_fuse(p, q, params);
  auto ps = soft_attention_enhance(p, params.soft), qs = soft_attention_enhance(q, params.soft);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    EXPECT_NEAR(po.at(i), p.at(i) + ps.at(i), 1e-12);
    EXPECT_NEAR(qo.at(i), q.at(i) + qs.at(i), 1e-12);
  }
}

TEST(Pcm, ZeroWeightGivesUniformAttention) {
  ParamStore<double> store(6);
  auto params = PcmParams<double>::create(store, "pcm", 4, 2, 8, 7);
  fill(params.weight, 0.0);
  std::mt19937_64 rng(6);
  auto p = random_tensor({1, 4, 3, 2}, rng), q = random_tensor({1, 4, 3, 2}, rng);
  auto [po, qo] = pcm_fuse(p, q, params);
  auto ps = soft_attention_enhance(p, params.soft), qs = soft_attention_enhance(q, params.soft);
  const std::size_t n = 6;
  for (std::size_t c = 0; c < 4; ++c) {
    double mp = 0, mq = 0;
    for (std::size_t s = 0; s < n; ++s) {
      mp += ps.at(c * n + s) / n;
      mq += qs.at(c * n + s) / n;
    }
    for (std::size_t s = 0; s < n; ++s) {
      EXPECT_NEAR(po.at(c * n + s) - p.at(c * n + s), mp, 1e-12);
      EXPECT_NEAR(qo.at(c * n + s) - q.at(c * n + s), mq, 1e-12);
    }
  }
}

TEST(Pcm, MatchesDenseOracle) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> d(1, 4);
  for (int trial = 0; trial < 60; ++trial) {
    ParamStore<double> store(100 + trial);
    const std::size_t c = trial == 0 ? 4 : 2 * d(rng), h = trial == 0 ? 2 : d(rng), w = trial == 0 ? 2 : d(rng);
    auto params = PcmParams<double>::create(store, "pcm", c, 2, 8, 7);
    // Random W instead of the scaled identity so every term of A matters.
    for (auto& v : params.weight.mutable_data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    auto p = random_tensor({1, c, h, w}, rng, -2, 2), q = random_tensor({1, c, h, w}, rng, -2, 2);
    auto [po, qo] = pcm_fuse(p, q, params);
    auto [pr, qr] = oracle::pcm(oracle::from_tensor(p), oracle::from_tensor(q), params);
    ASSERT_LT(max_abs_diff(po.data(), pr.v), 1e-5) << c << "x" << h << "x" << w;
    ASSERT_LT(max_abs_diff(qo.data(), qr.v), 1e-5);
  }
}

TEST(Pcm, PermutationConsistentOnTwoByTwo) {
  ParamStore<double> store(8);
  auto params = PcmParams<double>::create(store, "pcm", 4, 2, 8, 7);
  // A flat spatial gate makes soft attention position-blind, isolating the
  // content-based co-attention.
  fill(params.soft.spatial_w, 0.0);
  std::mt19937_64 rng(8);
  auto p = random_tensor({1, 4, 2, 2}, rng), q = random_tensor({1, 4, 2, 2}, rng);
  auto [po, qo] = pcm_fuse(p, q, params);
  std::array<std::size_t, 4> perm{0, 1, 2, 3};
  auto permute = [&](const TensorD& t) {
    std::vector<double> v(t.numel());
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t s = 0; s < 4; ++s) v[c * 4 + s] = t.at(c * 4 + perm[s]);
    return TensorD(t.shape(), v);
  };
  do {
    auto [pp, qp] = pcm_fuse(permute(p), permute(q), params);
    EXPECT_LT(max_abs_diff(pp.data(), permute(po).data()), 1e-12);
    EXPECT_LT(max_abs_diff(qp.data(), permute(qo).data()), 1e-12);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Pcm, AffinitySoftmaxSlicesSumToOne) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor({1, 9, 9}, rng, -300, 300);
    auto row = ops::softmax(a, ops::SoftmaxAxis::Rows);
    auto col = ops::softmax(a, ops::SoftmaxAxis::Cols);
    for (std::size_t i = 0; i < 9; ++i) {
      double rs = 0, cs = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        rs += row.at(i * 9 + j);
        cs += col.at(j * 9 + i);
      }
      EXPECT_NEAR(rs, 1.0, 1e-6);
      EXPECT_NEAR(cs, 1.0, 1e-6);
    }
  }
}

TEST(Pcm, RejectsMismatchedShapes) {
  ParamStore<double> store(1);
  auto params = PcmParams<double>::create(store, "pcm", 4, 2, 8, 7);
  EXPECT_THROW(pcm_fuse(TensorD::zeros({1, 4, 2, 2}), TensorD::zeros({1, 4, 2, 3}), params), ShapeError);
}

TEST(Pcm, Gradcheck) {
  ParamStore<double> store(10);
  auto params = PcmParams<double>::create(store, "pcm", 4, 2, 8, 7);
  std::mt19937_64 rng(10);
  auto p = random_tensor({2, 4, 3, 3}, rng), q = random_tensor({2, 4, 3, 3}, rng);
  auto in = gate_tensors(params.soft);
  in.insert(in.begin(), {p, q, params.eta, params.weight});
  EXPECT_LT(check(
                [&] {
                  auto [po, qo] = pcm_fuse(p, q, params);
                  return ops::add(weighted_sum(po, 1), weighted_sum(qo, 2));
                },
                in),
            1e-4);
}

TEST(Ccm, ZeroParametersOnEqualInputs) {
  ParamStore<double> store(11);
  auto params = CcmParams<double>::create(store, "ccm", 4, 8, 7);
  zero_gate(params.gac);
  zero_gate(params.gaf);
  std::mt19937_64 rng(11);
  auto x = random_tensor({1, 4, 3, 3}, rng);
  expect_scaled(ccm_fuse(x, x, params), x, 3.125);
  // Without GAC: gaf(x + x) = 1.25 * 2x.
  expect_scaled(ccm_fuse(x, x, params, false), x, 2.5);
}

TEST(Ccm, ShapeAndErrors) {
  ParamStore<double> store(12);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> d(1, 5);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t b = d(rng) % 2 + 1, c = d(rng), h = d(rng), w = d(rng);
    auto params = CcmParams<double>::create(store, "ccm" + std::to_string(trial), c, 8, 7);
    auto l = random_tensor({b, c, h, w}, rng), r = random_tensor({b, c, h, w}, rng);
    EXPECT_EQ(ccm_fuse(l, r, params).shape(), l.shape());
  }
  auto params = CcmParams<double>::create(store, "bad", 2, 8, 7);
  EXPECT_THROW(ccm_fuse(TensorD::zeros({1, 2, 2, 2}), TensorD::zeros({1, 2, 3, 2}), params), ShapeError);
}

TEST(Ccm, Gradcheck) {
  ParamStore<double> store(13);
  auto params = CcmParams<double>::create(store, "ccm", 4, 8, 7);
  std::mt19937_64 rng(13);
  auto l = random_tensor({1, 4, 4, 4}, rng), r = random_tensor({1, 4, 4, 4}, rng);
  auto in = gate_tensors(params.gac);
  auto gaf = gate_tensors(params.gaf);
  in.insert(in.end(), gaf.begin(), gaf.end());
  in.insert(in.begin(), {l, r});
  EXPECT_LT(check([&] { return weighted_sum(ccm_fuse(l, r, params)); }, in), 1e-4);
}

TEST(Fusion, FiniteForLargeInputs) {
  ParamStore<double> store(14);
  auto pcm = PcmParams<double>::create(store, "pcm", 4, 2, 8, 7);
  auto ccm = CcmParams<double>::create(store, "ccm", 4, 8, 7);
  std::mt19937_64 rng(14);
  auto all_finite = [](const TensorD& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
  };
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_tensor({1, 4, 3, 3}, rng, -1e3, 1e3), q = random_tensor({1, 4, 3, 3}, rng, -1e3, 1e3);
    auto [po, qo] = pcm_fuse(p, q, pcm);
    EXPECT_TRUE(all_finite(po) && all_finite(qo));
    EXPECT_TRUE(all_finite(ccm_fuse(p, q, ccm)));
    EXPECT_TRUE(all_finite(gac_enhance(p, ccm.gac)));
    EXPECT_TRUE(all_finite(gaf_fuse(p, ccm.gaf)));
  }
}
