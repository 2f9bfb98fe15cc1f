#include "scfnet/gradsuite.hpp"

#include <functional>
#include <map>
#include <random>

#include "scfnet/attention.hpp"
#include "scfnet/backbone.hpp"
#include "scfnet/gradcheck.hpp"
#include "scfnet/model.hpp"
#include "scfnet/ops.hpp"

namespace scfnet {

namespace {

using TD = Tensor<double>;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  TD rand(Shape shape, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng_);
    return TD(std::move(shape), std::move(v), true);
  }

  // Scalar probe: sum(y * r) with a fixed random r, so every output
  // coordinate contributes with its own weight.
  TD probe(const TD& y) {
    auto it = weights_.find(y.shape());
    if (it == weights_.end()) {
      auto w = rand(y.shape());
      w.set_requires_grad(false);
      it = weights_.emplace(y.shape(), w).first;
    }
    return ops::sum(ops::mul(y, it->second));
  }

  void check(const std::string& name, std::vector<TD> inputs, const std::function<TD()>& f,
             std::size_t coords_per_input = 0) {
    GradcheckOptions opt;
    opt.eps = kGradSuiteEps;
    opt.max_coords_per_input = coords_per_input;
    const auto r = gradcheck(f, std::move(inputs), opt);
    entries.push_back({name, r.max_rel_error, r.coords_checked});
  }

  std::mt19937_64 rng_;
  std::map<Shape, TD> weights_;
  std::vector<GradSuiteEntry> entries;
};

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  Suite s(seed);

  {
    auto a = s.rand({4, 6}), b = s.rand({6, 5});
    s.check("matmul", {a, b}, [&] { return s.probe(ops::matmul(a, b)); });
  }
  for (int mode = 0; mode < 4; ++mode) {
    const bool ta = mode & 1, tb = mode & 2;
    auto a = ta ? s.rand({2, 5, 4}) : s.rand({2, 4, 5});
    auto b = tb ? s.rand({2, 3, 5}) : s.rand({2, 5, 3});
    s.check(std::string("bmm") + (ta ? " A^T" : "") + (tb ? " B^T" : ""), {a, b},
            [&] { return s.probe(ops::bmm(a, b, ta, tb)); });
  }
  {
    auto a = s.rand({2, 4, 6}, -3, 3);
    s.check("softmax rows", {a}, [&] { return s.probe(ops::softmax(a, ops::SoftmaxAxis::Rows)); });
    s.check("softmax cols", {a}, [&] { return s.probe(ops::softmax(a, ops::SoftmaxAxis::Cols)); });
  }
  {
    auto x = s.rand({2, 3, 6, 6}), w = s.rand({4, 3, 3, 3});
    s.check("conv2d 3x3 pad 1", {x, w}, [&] { return s.probe(ops::conv2d(x, w, 1, 1)); });
    s.check("conv2d 3x3 stride 2", {x, w}, [&] { return s.probe(ops::conv2d(x, w, 2, 1)); });
    auto w1 = s.rand({4, 3, 1, 1});
    s.check("conv2d 1x1", {x, w1}, [&] { return s.probe(ops::conv2d(x, w1, 1, 0)); });
  }
  {
    auto x = s.rand({2, 4, 6, 6}), b = s.rand({4});
    s.check("add_channel_bias", {x, b}, [&] { return s.probe(ops::add_channel_bias(x, b)); });
    s.check("relu", {x}, [&] { return s.probe(ops::relu(x)); });
    s.check("sigmoid", {x}, [&] { return s.probe(ops::sigmoid(x)); });
    s.check("add_scalar", {x}, [&] { return s.probe(ops::add_scalar(x, 0.7)); });
    s.check("scale", {x}, [&] { return s.probe(ops::scale(x, -1.3)); });
    auto y = s.rand({2, 4, 6, 6});
    s.check("add", {x, y}, [&] { return s.probe(ops::add(x, y)); });
    s.check("mul", {x, y}, [&] { return s.probe(ops::mul(x, y)); });
    auto z = s.rand({2, 2, 6, 6});
    s.check("concat", {x, z}, [&] { return s.probe(ops::concat<double>({x, z}, 1)); });
    auto cg = s.rand({2, 4, 1, 1}), sg = s.rand({2, 1, 6, 6});
    s.check("broadcast_mul channel", {x, cg}, [&] { return s.probe(ops::broadcast_mul(x, cg)); });
    s.check("broadcast_mul spatial", {x, sg}, [&] { return s.probe(ops::broadcast_mul(x, sg)); });
    s.check("global_avg_pool", {x}, [&] { return s.probe(ops::global_avg_pool(x)); });
    s.check("max_pool2d", {x}, [&] { return s.probe(ops::max_pool2d(x, 3, 2, 1)); });
    s.check("reshape", {x}, [&] { return s.probe(ops::reshape(x, {2, 4, 36})); });
    s.check("sum", {x}, [&] { return ops::sum(x); });
    s.check("mean", {x}, [&] { return ops::mean(x); });
    auto gamma = s.rand({4}), beta = s.rand({4});
    s.check("batch_norm_train", {x, gamma, beta},
            [&] { return s.probe(ops::batch_norm_train(x, gamma, beta, 1e-5, nullptr)); });
    const std::vector<double> rm{0.1, -0.2, 0.3, 0.0}, rv{0.5, 1.5, 2.0, 0.8};
    s.check("batch_norm_infer", {x, gamma, beta},
            [&] { return s.probe(ops::batch_norm_infer<double>(x, gamma, beta, rm, rv, 1e-5)); });
  }
  {
    auto x = s.rand({2, 4, 3, 3});
    s.check("bilinear_upsample", {x}, [&] { return s.probe(ops::bilinear_upsample(x, 6, 5)); });
  }
  {
    auto z = s.rand({2, 1, 6, 6}, -4, 4);
    auto y = TD::zeros({2, 1, 6, 6});
    for (std::size_t i = 0; i < y.numel(); i += 3) y.mutable_data()[i] = 1;
    s.check("bce_with_logits", {z}, [&] { return ops::bce_with_logits(z, y); });
  }

  ParamStore<double> store(seed + 1);
  auto gate_inputs = [](const GateParams<double>& g, const TD& x) {
    return std::vector<TD>{x, g.fc1_w, g.fc1_b, g.fc2_w, g.fc2_b, g.spatial_w, g.spatial_b};
  };
  {
    auto g = GateParams<double>::create(store, "gate", 4, 2, 7);
    auto x = s.rand({2, 4, 6, 6});
    s.check("soft attention", gate_inputs(g, x), [&] { return s.probe(soft_attention_enhance(x, g)); });
    s.check("GAC", gate_inputs(g, x), [&] { return s.probe(gac_enhance(x, g)); });
    s.check("GAF", gate_inputs(g, x), [&] { return s.probe(gaf_fuse(x, g)); });
  }
  {
    auto p = PcmParams<double>::create(store, "pcm", 4, 2, 2, 7);
    auto a = s.rand({2, 4, 6, 6}), b = s.rand({2, 4, 6, 6});
    std::vector<TD> in{a, b, p.eta, p.weight, p.soft.fc1_w, p.soft.fc2_w, p.soft.spatial_w, p.soft.spatial_b};
    s.check("PCM", in, [&] {
      auto [pp, qq] = pcm_fuse(a, b, p);
      return ops::add(s.probe(pp), s.probe(qq));
    });
  }
  {
    auto c = CcmParams<double>::create(store, "ccm", 4, 2, 7);
    auto a = s.rand({2, 4, 6, 6}), b = s.rand({2, 4, 6, 6});
    std::vector<TD> in{a, b, c.gac.fc1_w, c.gac.spatial_w, c.gaf.fc2_w, c.gaf.spatial_w, c.gaf.fc1_b};
    s.check("CCM", in, [&] { return s.probe(ccm_fuse(a, b, c)); });
  }
  {
    auto d = DecoderParams<double>::create(store, "dec", {2, 3, 4, 4}, 3);
    FeaturePyramid<double> pyr;
    pyr.levels = {s.rand({2, 2, 8, 8}), s.rand({2, 3, 4, 4}), s.rand({2, 4, 2, 2}), s.rand({2, 4, 1, 1})};
    std::vector<TD> in{pyr.levels[0], pyr.levels[1], pyr.levels[2], pyr.levels[3], d.proj_w[0], d.proj_b[1],
                       d.proj_w[3], d.fuse_w, d.fuse_b, d.pred_w, d.pred_b};
    s.check("decoder", in, [&] { return s.probe(decoder_forward(pyr, d, 32, 32)); });
  }
  {
    auto blk = ResidualBlockParams<double>::create(store, "res", 3, 4, 2);
    auto x = s.rand({2, 3, 6, 6});
    std::vector<TD> in{x, blk.conv1, blk.conv2, blk.proj, blk.norm1.scale, blk.norm2.shift};
    s.check("residual block", in, [&] { return s.probe(residual_block(x, blk, Mode::Train)); });
  }
  {
    ModelConfig cfg;
    cfg.backbone = BackboneConfig{2, {2, 2, 4, 4}, {1, 1, 1, 1}};
    cfg.decoder_dim = 2;
    cfg.height = 32;
    cfg.width = 32;
    ScfNet<double> model(cfg, seed + 2);
    // Batch 2 keeps the 1x1 stride-32 level away from a degenerate single
    // sample normalization.
    auto a = s.rand({2, 3, 32, 32}, 0, 1), b = s.rand({2, 3, 32, 32}, 0, 1), c = s.rand({2, 3, 32, 32}, 0, 1);
    auto y = TD::zeros({2, 1, 32, 32});
    for (std::size_t i = 0; i < y.numel(); ++i) y.mutable_data()[i] = ((i / 32) % 32 > 10 && i % 32 < 20) ? 1 : 0;
    for (auto* t : {&a, &b, &c}) t->set_requires_grad(false);
    std::vector<TD> in;
    for (const auto& nt : model.store().parameters()) in.push_back(nt.tensor);
    s.check(
        "full model step", in,
        [&] {
          auto out = model.forward(a, b, c, Mode::Train);
          return ops::scale(ops::add(ops::bce_with_logits(out.prev, y), ops::bce_with_logits(out.next, y)), 0.5);
        },
        2);
  }
  return s.entries;
}

}  // namespace scfnet
