#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scfnet/gradcheck.hpp"
#include "scfnet/ops.hpp"
#include "test_util.hpp"

using namespace scfnet;
using scfnet::testing::max_abs_diff;
using scfnet::testing::random_tensor;

namespace {

using TensorD = Tensor<double>;

// Naive triple loop.
std::vector<double> matmul_oracle(const TensorD& a, const TensorD& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.at(i * k + p) * b.at(p * n + j);
  return c;
}

// Six nested loops over (batch, out, in, ky, kx) per output pixel.
std::vector<double> conv_oracle(const TensorD& x, const TensorD& w, int stride, int pad) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const int OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(B * O * OH * OW), 0.0);
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double s = 0;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                s += x.at(((b * C + c) * H + iy) * W + ix) * w.at(((o * C + c) * KH + ky) * KW + kx);
              }
          out[((b * O + o) * OH + oy) * OW + ox] = s;
        }
  return out;
}

double check(const std::function<TensorD()>& f, std::vector<TensorD> inputs, std::size_t max_coords = 0) {
  GradcheckOptions opt;
  opt.eps = 1e-5;
  opt.max_coords_per_input = max_coords;
  return gradcheck(f, std::move(inputs), opt).max_rel_error;
}

// Weighted sum so every output coordinate gets a distinct upstream gradient.
TensorD weighted_sum(const TensorD& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(y.shape(), rng);
  return ops::sum(ops::mul(y, w));
}

}  // namespace

TEST(Tensor, RejectsLengthMismatchAndZeroDims) {
  EXPECT_THROW(TensorD({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(TensorD({0, 2}, {}), ShapeError);
  TensorD t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.grad(), std::vector<double>(6, 0.0));
}

TEST(Matmul, IdentityAndAnnihilator) {
  TensorD eye({2, 2}, {1, 0, 0, 1});
  TensorD m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(ops::matmul(eye, m).vec(), m.vec());
  std::mt19937_64 rng(1);
  auto z = ops::matmul(TensorD::zeros({2, 3}), random_tensor({3, 4}, rng));
  EXPECT_EQ(z.shape(), (Shape{2, 4}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    ops::matmul(TensorD::zeros({2, 3}), TensorD::zeros({4, 5}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
}

TEST(Matmul, MatchesTripleLoopOnRandomShapes) {
  std::mt19937_64 rng(7);
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    EXPECT_LT(max_abs_diff(ops::matmul(a, b).data(), matmul_oracle(a, b)), 1e-6);
  }
  std::uniform_int_distribution<int> dim(1, 9);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    ASSERT_LT(max_abs_diff(ops::matmul(a, b).data(), matmul_oracle(a, b)), 1e-6) << m << "x" << k << "x" << n;
  }
}

TEST(Matmul, BatchedTransposeVariantsMatchOracle) {
  std::mt19937_64 rng(8);
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      const std::size_t m = 3, k = 4, n = 5;
      auto a = random_tensor(ta ? Shape{2, k, m} : Shape{2, m, k}, rng);
      auto b = random_tensor(tb ? Shape{2, n, k} : Shape{2, k, n}, rng);
      auto c = ops::bmm(a, b, ta, tb);
      ASSERT_EQ(c.shape(), (Shape{2, m, n}));
      for (std::size_t bi = 0; bi < 2; ++bi)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) {
              const double av = ta ? a.at(bi * k * m + p * m + i) : a.at(bi * m * k + i * k + p);
              const double bv = tb ? b.at(bi * n * k + j * k + p) : b.at(bi * k * n + p * n + j);
              s += av * bv;
            }
            EXPECT_NEAR(c.at(bi * m * n + i * n + j), s, 1e-12);
          }
      EXPECT_LT(check([&] { return weighted_sum(ops::bmm(a, b, ta, tb)); }, {a, b}), 1e-8);
    }
}

TEST(Softmax, ClosedFormRows) {
  TensorD a({2, 2}, {0, 0, std::log(2.0), 0});
  auto y = ops::softmax(a, ops::SoftmaxAxis::Rows);
  EXPECT_NEAR(y.at(0), 0.5, 1e-12);
  EXPECT_NEAR(y.at(1), 0.5, 1e-12);
  EXPECT_NEAR(y.at(2), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(y.at(3), 1.0 / 3.0, 1e-12);
}

TEST(Softmax, SingleElementAxisIsOne) {
  std::mt19937_64 rng(2);
  auto col = random_tensor({4, 1}, rng);
  const auto ys = ops::softmax(col, ops::SoftmaxAxis::Rows);
  for (double v : ys.data()) EXPECT_DOUBLE_EQ(v, 1.0);
  auto row = random_tensor({1, 4}, rng);
  const auto yc = ops::softmax(row, ops::SoftmaxAxis::Cols);
  for (double v : yc.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Softmax, SlicesSumToOneMatchOracleAndShiftInvariant) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_tensor({4, 4}, rng, -5, 5);
    for (auto axis : {ops::SoftmaxAxis::Rows, ops::SoftmaxAxis::Cols}) {
      auto y = ops::softmax(a, axis);
      const bool rows = axis == ops::SoftmaxAxis::Rows;
      for (std::size_t s = 0; s < 4; ++s) {
        double total = 0, denom = 0;
        for (std::size_t i = 0; i < 4; ++i) denom += std::exp(rows ? a.at(s * 4 + i) : a.at(i * 4 + s));
        for (std::size_t i = 0; i < 4; ++i) {
          const std::size_t p = rows ? s * 4 + i : i * 4 + s;
          total += y.at(p);
          EXPECT_NEAR(y.at(p), std::exp(a.at(p)) / denom, 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
      }
      auto shifted = ops::softmax(ops::add_scalar(a, 17.5), axis);
      EXPECT_LT(max_abs_diff(shifted.data(), y.data()), 1e-6);
    }
  }
}

TEST(Softmax, StableOnLargeInputs) {
  TensorD a({1, 3}, {1000, 1000, -1000});
  auto y = ops::softmax(a, ops::SoftmaxAxis::Rows);
  EXPECT_NEAR(y.at(0), 0.5, 1e-12);
  EXPECT_NEAR(y.at(2), 0.0, 1e-12);
}

TEST(Conv2d, OneByOneIdentityAndOnesSum) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({1, 1, 4, 5}, rng);
  EXPECT_EQ(ops::conv2d(x, TensorD::full({1, 1, 1, 1}, 1.0), 1, 0).vec(), x.vec());
  auto nine = ops::conv2d(TensorD::full({1, 1, 3, 3}, 1.0), TensorD::full({1, 1, 3, 3}, 1.0), 1, 0);
  EXPECT_EQ(nine.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(nine.item(), 9.0);
}

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(5);
  {
    auto x = random_tensor({1, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng);
    auto y = ops::conv2d(x, w, 2, 1);
    EXPECT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
    EXPECT_LT(max_abs_diff(y.data(), conv_oracle(x, w, 2, 1)), 1e-6);
  }
  std::uniform_int_distribution<int> small(1, 3), spatial(3, 8), kern(1, 4), st(1, 2), pd(0, 2);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t b = small(rng), c = small(rng), o = small(rng), h = spatial(rng), wd = spatial(rng);
    const std::size_t kh = kern(rng), kw = kern(rng);
    const int stride = st(rng), pad = pd(rng);
    if (kh > h + 2 * pad || kw > wd + 2 * pad) continue;
    auto x = random_tensor({b, c, h, wd}, rng), w = random_tensor({o, c, kh, kw}, rng);
    ASSERT_LT(max_abs_diff(ops::conv2d(x, w, stride, pad).data(), conv_oracle(x, w, stride, pad)), 1e-6);
  }
}

TEST(Conv2d, OutputSizeUsesFloorAndRejectsOversizedKernel) {
  auto y = ops::conv2d(TensorD::zeros({1, 1, 7, 7}), TensorD::zeros({1, 1, 3, 3}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_THROW(ops::conv2d(TensorD::zeros({1, 1, 2, 2}), TensorD::zeros({1, 1, 5, 5}), 1, 1), ShapeError);
  EXPECT_THROW(ops::conv2d(TensorD::zeros({1, 2, 4, 4}), TensorD::zeros({1, 3, 3, 3}), 1, 1), ShapeError);
}

TEST(Pointwise, ReluSigmoidAndConstants) {
  TensorD x({3}, {-1, 0, 2});
  EXPECT_EQ(ops::relu(x).vec(), (std::vector<double>{0, 0, 2}));
  EXPECT_DOUBLE_EQ(ops::sigmoid(TensorD::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(ops::add_scalar(x, 1.0).vec(), (std::vector<double>{0, 1, 3}));
  EXPECT_EQ(ops::scale(x, -2.0).vec(), (std::vector<double>{2, 0, -4}));
}

TEST(Pointwise, SigmoidDerivativeMatchesCentralDifferences) {
  for (double x0 : {-2.0, 0.0, 3.0}) {
    TensorD x({1}, {x0}, true);
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      auto y = ops::sigmoid(x);
      backward(y, tape);
    }
    const double h = 1e-5;
    auto s = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    EXPECT_NEAR(x.grad()[0], (s(x0 + h) - s(x0 - h)) / (2 * h), 1e-6);
  }
}

TEST(Combine, AddZerosAndConcatLayout) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({2, 3}, rng);
  EXPECT_EQ(ops::combine<double>({x, TensorD::zeros({2, 3})}, ops::CombineMode::Add).vec(), x.vec());
  auto y = random_tensor({2, 5}, rng);
  auto c = ops::combine<double>({x, y}, ops::CombineMode::Concat, 1);
  ASSERT_EQ(c.shape(), (Shape{2, 8}));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.at(r * 8 + j), x.at(r * 3 + j));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(c.at(r * 8 + 3 + j), y.at(r * 5 + j));
  }
  EXPECT_THROW(ops::add(x, y), ShapeError);
  EXPECT_THROW(ops::concat<double>({x, random_tensor({3, 5}, rng)}, 1), ShapeError);
}

TEST(Combine, MulBackwardIsOtherOperand) {
  std::mt19937_64 rng(9);
  auto x = random_tensor({2, 2}, rng, -1, 1, true), y = random_tensor({2, 2}, rng, -1, 1, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    backward(ops::sum(ops::mul(x, y)), tape);
  }
  EXPECT_EQ(x.grad(), y.vec());
  EXPECT_LT(check([&] { return ops::sum(ops::mul(x, y)); }, {x, y}), 1e-8);
}

TEST(GlobalAvgPool, MeansAndGradientShare) {
  EXPECT_DOUBLE_EQ(ops::global_avg_pool(TensorD::full({1, 1, 3, 2}, 4.5)).item(), 4.5);
  EXPECT_DOUBLE_EQ(ops::global_avg_pool(TensorD({1, 1, 2, 2}, {1, 2, 3, 4})).item(), 2.5);
  std::mt19937_64 rng(10);
  auto x = random_tensor({1, 2, 3, 4}, rng, -1, 1, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    backward(ops::sum(ops::global_avg_pool(x)), tape);
  }
  for (double g : x.grad()) EXPECT_NEAR(g, 1.0 / 12.0, 1e-15);
  EXPECT_LT(check([&] { return weighted_sum(ops::global_avg_pool(x)); }, {x}), 1e-8);
}

TEST(Bilinear, IdentityConstantAndClosedForm) {
  std::mt19937_64 rng(11);
  auto x = random_tensor({1, 2, 3, 3}, rng);
  EXPECT_EQ(ops::bilinear_upsample(x, 3, 3).vec(), x.vec());
  const auto flat = ops::bilinear_upsample(TensorD::full({1, 1, 3, 2}, 0.7), 11, 5);
  for (double v : flat.data()) EXPECT_NEAR(v, 0.7, 1e-15);

  // The input is the affine field v(r, c) = 1 + 2r + c sampled at grid points,
  // which bilinear interpolation reproduces exactly at the (clamped) source
  // coordinates r, c in {0, 0.25, 0.75, 1}.
  auto y = ops::bilinear_upsample(TensorD({1, 1, 2, 2}, {1, 2, 3, 4}), 4, 4);
  const double coord[4] = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(y.at(i * 4 + j), 1 + 2 * coord[i] + coord[j], 1e-6);

  EXPECT_THROW(ops::bilinear_upsample(x, 0, 4), ArgumentError);
  EXPECT_THROW(ops::bilinear_upsample(x, 2, 4), ArgumentError);
}

TEST(Backward, SumAndQuadratic) {
  std::mt19937_64 rng(12);
  auto x = random_tensor({3, 2}, rng, -1, 1, true);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(ops::sum(x), tape);
  }
  EXPECT_EQ(x.grad(), std::vector<double>(6, 1.0));
  x.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    backward(ops::scale(ops::sum(ops::mul(x, x)), 0.5), tape);
  }
  EXPECT_LT(max_abs_diff(x.grad(), x.vec()), 1e-15);
}

TEST(Backward, ReusedTensorAccumulates) {
  auto x = TensorD::full({2, 3}, 0.3, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    backward(ops::sum(ops::add(x, x)), tape);
  }
  EXPECT_EQ(x.grad(), std::vector<double>(6, 2.0));
}

TEST(Backward, OffPathTensorsGetZeroGrad) {
  auto x = TensorD::full({2}, 1.0, true), unused = TensorD::full({3}, 2.0, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto other = ops::scale(unused, 3.0);
    (void)other;
    backward(ops::sum(x), tape);
  }
  EXPECT_EQ(unused.grad(), std::vector<double>(3, 0.0));
}

TEST(Backward, RejectsNonScalarAndForeignLoss) {
  auto x = TensorD::full({2}, 1.0, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto y = ops::scale(x, 2.0);
  EXPECT_THROW(backward(y, tape), ArgumentError);
  Tape<double> other;
  EXPECT_THROW(backward(ops::sum(x), other), ArgumentError);
}

TEST(Backward, NothingRecordedWithoutTape) {
  auto x = TensorD::full({2}, 1.0, true);
  Tape<double> tape;
  auto y = ops::sum(x);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, TapeIsTopologicallyOrdered) {
  std::mt19937_64 rng(13);
  auto x = random_tensor({2, 3}, rng, -1, 1, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  auto y = ops::sum(ops::relu(ops::mul(ops::add(x, x), x)));
  const auto& nodes = tape.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const auto& in : nodes[i].inputs) {
      for (std::size_t j = i; j < nodes.size(); ++j) EXPECT_NE(nodes[j].output, in);
    }
  }
  EXPECT_EQ(nodes.back().output, y.impl());
}

TEST(Gradcheck, LinearIsExact) {
  std::mt19937_64 rng(14);
  auto x = random_tensor({3, 4}, rng);
  EXPECT_LT(check([&] { return weighted_sum(x); }, {x}), 1e-8);
}

TEST(Gradcheck, SigmoidSum) {
  std::mt19937_64 rng(15);
  auto x = random_tensor({2, 5}, rng, -3, 3);
  EXPECT_LT(check([&] { return ops::sum(ops::sigmoid(x)); }, {x}), 1e-6);
}

TEST(Gradcheck, FlagsDoubledGradient) {
  // f(x) = sum(x) recorded with a backward that reports twice the truth.
  auto x = TensorD::full({3}, 0.5);
  auto f = [&] {
    double s = 0;
    for (double v : x.data()) s += v;
    auto out = TensorD::scalar(s);
    auto xi = x.impl();
    detail::record_op<double>("bad_sum", {&x}, out, [xi](std::span<const double> g) {
      detail::accumulate_grad<double>(*xi, std::vector<double>(xi->data.size(), 2.0 * g[0]));
    });
    return out;
  };
  EXPECT_NEAR(check(f, {x}), 0.5, 1e-6);
}

TEST(Gradcheck, RejectsEpsOutsideRange) {
  auto x = TensorD::full({1}, 1.0);
  GradcheckOptions opt;
  opt.eps = 1e-2;
  EXPECT_THROW(gradcheck([&] { return ops::sum(x); }, {x}, opt), ArgumentError);
}

// Every differentiable op on shapes up to 2x4x6x6.
TEST(Gradcheck, EveryOp) {
  std::mt19937_64 rng(16);
  auto x4 = random_tensor({2, 4, 6, 6}, rng);
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::matmul(a, b)); }, {a, b}), 1e-4);

  auto s3 = random_tensor({2, 4, 4}, rng, -2, 2);
  EXPECT_LT(check([&] { return weighted_sum(ops::softmax(s3, ops::SoftmaxAxis::Rows)); }, {s3}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::softmax(s3, ops::SoftmaxAxis::Cols)); }, {s3}), 1e-4);

  auto w = random_tensor({3, 4, 3, 3}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::conv2d(x4, w, 1, 1)); }, {x4, w}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::conv2d(x4, w, 2, 0)); }, {x4, w}), 1e-4);
  auto w1 = random_tensor({2, 4, 1, 1}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::conv2d(x4, w1, 1, 0)); }, {x4, w1}), 1e-4);

  auto bias = random_tensor({4}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::add_channel_bias(x4, bias)); }, {x4, bias}), 1e-4);

  // Keep inputs away from the relu kink.
  auto away = random_tensor({2, 4, 3, 3}, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < away.numel(); i += 2) away.mutable_data()[i] *= -1;
  EXPECT_LT(check([&] { return weighted_sum(ops::relu(away)); }, {away}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::sigmoid(x4)); }, {x4}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::add_scalar(x4, 0.3)); }, {x4}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::scale(x4, -1.7)); }, {x4}), 1e-4);

  auto y4 = random_tensor({2, 4, 6, 6}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::add(x4, y4)); }, {x4, y4}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::mul(x4, y4)); }, {x4, y4}), 1e-4);
  auto z4 = random_tensor({2, 2, 6, 6}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::concat<double>({x4, z4}, 1)); }, {x4, z4}), 1e-4);

  auto cg = random_tensor({2, 4, 1, 1}, rng), sg = random_tensor({2, 1, 6, 6}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::broadcast_mul(x4, cg)); }, {x4, cg}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::broadcast_mul(x4, sg)); }, {x4, sg}), 1e-4);

  EXPECT_LT(check([&] { return weighted_sum(ops::global_avg_pool(x4)); }, {x4}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::max_pool2d(x4, 3, 2, 1)); }, {x4}), 1e-4);
  auto small = random_tensor({2, 4, 3, 3}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::bilinear_upsample(small, 6, 6)); }, {small}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::bilinear_upsample(small, 5, 6)); }, {small}), 1e-4);
  EXPECT_LT(check([&] { return weighted_sum(ops::reshape(x4, {8, 36})); }, {x4}), 1e-4);
  EXPECT_LT(check([&] { return ops::mean(x4); }, {x4}), 1e-4);

  auto gamma = random_tensor({4}, rng, 0.5, 1.5), beta = random_tensor({4}, rng);
  EXPECT_LT(check([&] { return weighted_sum(ops::batch_norm_train(x4, gamma, beta, 1e-5, nullptr)); },
                  {x4, gamma, beta}),
            1e-4);
  std::vector<double> mu{0.1, -0.2, 0.0, 0.3}, var{1.0, 0.5, 2.0, 0.8};
  EXPECT_LT(check([&] { return weighted_sum(ops::batch_norm_infer<double>(x4, gamma, beta, mu, var, 1e-5)); },
                  {x4, gamma, beta}),
            1e-4);

  auto logits = random_tensor({2, 1, 6, 6}, rng, -3, 3);
  std::vector<double> bits(72);
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (i * 7) % 3 == 0 ? 1.0 : 0.0;
  TensorD target({2, 1, 6, 6}, bits);
  EXPECT_LT(check([&] { return ops::bce_with_logits(logits, target); }, {logits}), 1e-4);
}

TEST(Bce, ClosedFormValues) {
  auto zero = ops::bce_with_logits(TensorD::zeros({1, 1, 2, 2}), TensorD::full({1, 1, 2, 2}, 1.0));
  EXPECT_NEAR(zero.item(), std::log(2.0), 1e-12);
  auto sat = ops::bce_with_logits(TensorD::full({1}, 20.0), TensorD::full({1}, 1.0));
  EXPECT_LT(sat.item(), 1e-8);
  EXPECT_THROW(ops::bce_with_logits(TensorD::zeros({2}), TensorD::full({2}, 2.0)), ArgumentError);
}

TEST(Bce, GradientIsSigmoidMinusTarget) {
  TensorD z({4}, {-2.0, -0.1, 0.4, 3.0}, true);
  TensorD y({4}, {0, 1, 1, 0});
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    backward(ops::bce_with_logits(z, y), tape);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-z.at(i)));
    EXPECT_NEAR(z.grad()[i], (s - y.at(i)) / 4.0, 1e-12);
  }
}

TEST(Precision, FloatPathAgreesWithDouble) {
  std::mt19937_64 rng(17);
  auto xd = random_tensor({1, 2, 6, 6}, rng), wd = random_tensor({3, 2, 3, 3}, rng);
  Tensor<float> xf(xd.shape(), std::vector<float>(xd.data().begin(), xd.data().end()));
  Tensor<float> wf(wd.shape(), std::vector<float>(wd.data().begin(), wd.data().end()));
  auto yd = ops::conv2d(xd, wd, 1, 1);
  auto yf = ops::conv2d(xf, wf, 1, 1);
  for (std::size_t i = 0; i < yd.numel(); ++i) EXPECT_NEAR(yf.at(i), yd.at(i), 1e-5);
}
