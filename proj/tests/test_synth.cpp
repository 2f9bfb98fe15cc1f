#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "scfnet/png_io.hpp"
#include "scfnet/synth.hpp"

using namespace scfnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("scfnet_test_" + name);
  fs::remove_all(p);
  return p;
}

SceneSpec static_ellipse(double rx, double ry) {
  SceneSpec s;
  s.seed = 3;
  s.frames = 4;
  s.height = 96;
  s.width = 96;
  s.radius_x = rx;
  s.radius_y = ry;
  s.trajectory.x0 = 48;
  s.trajectory.y0 = 48;
  return s;
}

Frame constant_frame(std::size_t h, std::size_t w, float v) {
  Frame f(h, w);
  std::fill(f.rgb.begin(), f.rgb.end(), v);
  return f;
}

}  // namespace

TEST(SynthVideo, StaticHardPasteKeepsMaskFixed) {
  auto v = synth_video(static_ellipse(14, 10));
  ASSERT_EQ(v.frames.size(), 4u);
  for (const auto& m : v.masks) EXPECT_EQ(m, v.masks[0]);
  EXPECT_GT(v.masks[0].area(), 0u);
}

TEST(SynthVideo, SameSeedIsBitIdentical) {
  const auto spec = random_scene(11, 5, 64, 64);
  auto a = synth_video(spec), b = synth_video(spec);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(a.frames[t], b.frames[t]);
    EXPECT_EQ(a.masks[t], b.masks[t]);
  }
  auto c = synth_video(random_scene(12, 5, 64, 64));
  EXPECT_NE(a.frames[0], c.frames[0]);
}

TEST(SynthVideo, EllipseAreaMatchesAnalytic) {
  for (auto [rx, ry] : {std::pair{8.0, 8.0}, std::pair{12.5, 9.0}, std::pair{20.0, 31.0}, std::pair{30.0, 8.5}}) {
    auto v = synth_video(static_ellipse(rx, ry));
    const double analytic = std::numbers::pi * rx * ry;
    for (const auto& m : v.masks) EXPECT_NEAR(m.area(), analytic, 0.05 * analytic) << rx << "x" << ry;
  }
}

TEST(SynthVideo, BackgroundUntouchedOutsideHardMask) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto spec = random_scene(seed, 4, 64, 64);
    spec.feather = 0;
    auto v = synth_video(spec);
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      const std::size_t hw = 64 * 64;
      for (std::size_t i = 0; i < hw; ++i) {
        if (v.masks[t].bits[i]) continue;
        for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(v.frames[t].rgb[c * hw + i], v.background[t].rgb[c * hw + i]);
      }
    }
  }
}

TEST(SynthVideo, ObjectStaysInsideWhenTrajectoryRunsAway) {
  auto spec = static_ellipse(10, 10);
  spec.frames = 30;
  spec.trajectory.vx = 9;
  spec.trajectory.vy = -7;
  auto v = synth_video(spec);
  for (const auto& m : v.masks) {
    EXPECT_GT(m.area(), 0u);
    for (std::size_t i = 0; i < m.width; ++i) {
      EXPECT_EQ(m.at(0, i), 0);
      EXPECT_EQ(m.at(m.height - 1, i), 0);
      EXPECT_EQ(m.at(i, 0), 0);
      EXPECT_EQ(m.at(i, m.width - 1), 0);
    }
  }
}

TEST(SynthVideo, InvalidSpecsRejected) {
  auto spec = static_ellipse(10, 10);
  spec.frames = 2;
  EXPECT_THROW(synth_video(spec), SpecError);
  spec = static_ellipse(50, 10);
  EXPECT_THROW(synth_video(spec), SpecError);
  spec = static_ellipse(10, 10);
  spec.object = ObjectKind::Polygon;
  spec.polygon_vertices = 2;
  EXPECT_THROW(synth_video(spec), SpecError);
}

TEST(SynthVideo, RandomScenesAreValid) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto spec = random_scene(seed, 6, 64, 64);
    EXPECT_NO_THROW(spec.validate());
    auto v = synth_video(spec);
    for (const auto& m : v.masks) {
      EXPECT_GT(m.area(), 64u * 64u / 40);
      for (auto b : m.bits) ASSERT_TRUE(b == 0 || b == 1);
    }
  }
}

TEST(Composite, ZeroAndOneMasks) {
  std::vector<Frame> bg{constant_frame(4, 5, 0.2f), constant_frame(4, 5, 0.3f)};
  std::vector<Frame> fg{constant_frame(4, 5, 0.9f), constant_frame(4, 5, 0.8f)};
  std::vector<Mask> none(2, Mask(4, 5)), all(2, Mask(4, 5));
  for (auto& m : all) std::fill(m.bits.begin(), m.bits.end(), 1);
  auto r0 = composite_splice(bg, fg, none, {});
  auto r1 = composite_splice(bg, fg, all, {});
  for (int t = 0; t < 2; ++t) {
    EXPECT_EQ(r0.frames[t], bg[t]);
    EXPECT_EQ(r1.frames[t], fg[t]);
    EXPECT_EQ(r0.masks[t].area(), 0u);
    EXPECT_EQ(r1.masks[t], all[t]);
  }
}

TEST(Composite, CheckerboardSelectsPerPixel) {
  const std::size_t h = 6, w = 7;
  Frame bg(h, w), fg(h, w);
  Mask m(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      m.at(y, x) = (x + y) % 2;
      for (std::size_t c = 0; c < 3; ++c) {
        bg.at(c, y, x) = 0.01f * (c + 1);
        fg.at(c, y, x) = 0.5f + 0.1f * c;
      }
    }
  auto r = composite_splice({bg}, {fg}, {m}, {});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float expect = (x + y) % 2 ? fg.at(c, y, x) : bg.at(c, y, x);
        EXPECT_EQ(r.frames[0].at(c, y, x), expect);
        EXPECT_EQ(r.masks[0].at(y, x), m.at(y, x));
      }
}

TEST(Composite, PlacementAndErrors) {
  Frame bg = constant_frame(8, 8, 0.0f), fg = constant_frame(3, 3, 1.0f);
  Mask m(3, 3);
  m.at(1, 1) = 1;
  auto r = composite_splice({bg}, {fg}, {m}, {4, 2, 0});
  EXPECT_EQ(r.masks[0].area(), 1u);
  EXPECT_EQ(r.masks[0].at(3, 5), 1);
  EXPECT_EQ(r.frames[0].at(0, 3, 5), 1.0f);
  EXPECT_THROW(composite_splice({bg}, {fg}, {m}, {7, 0, 0}), ArgumentError);
  EXPECT_THROW(composite_splice({bg, bg}, {fg}, {m}, {}), ArgumentError);
}

TEST(Composite, FeatheredAlphaBlends) {
  Frame bg = constant_frame(9, 9, 0.0f), fg = constant_frame(9, 9, 1.0f);
  Mask m(9, 9);
  for (std::size_t y = 2; y < 7; ++y)
    for (std::size_t x = 2; x < 7; ++x) m.at(y, x) = 1;
  auto r = composite_splice({bg}, {fg}, {m}, {0, 0, 1.0});
  EXPECT_EQ(r.frames[0].at(0, 4, 4), 1.0f);
  EXPECT_NEAR(r.frames[0].at(0, 4, 2), 6.0 / 9.0, 1e-6);
  EXPECT_EQ(r.masks[0].at(4, 2), 1);
  EXPECT_EQ(r.masks[0].at(4, 1), 0);
}

TEST(Dataset, RoundTripIsExact) {
  const auto root = scratch("roundtrip");
  auto videos = synth_dataset(5, 2, 6, 64, 64);
  auto manifest = write_dataset(videos, root);
  ASSERT_EQ(manifest.videos.size(), 2u);
  EXPECT_EQ(read_manifest(root).videos, manifest.videos);
  auto back = read_dataset(root);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t v = 0; v < 2; ++v) {
    EXPECT_EQ(back[v].id, videos[v].id);
    ASSERT_EQ(back[v].frames.size(), 6u);
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_EQ(back[v].frames[t], videos[v].frames[t]);
      EXPECT_EQ(back[v].masks[t], videos[v].masks[t]);
    }
  }
  EXPECT_TRUE(fs::exists(root / "video_0000" / "frames" / "00005.png"));
  EXPECT_TRUE(fs::exists(root / "video_0001" / "masks" / "00000.png"));
  fs::remove_all(root);
}

TEST(Dataset, MasksOnDiskAreStrictlyBinary) {
  const auto root = scratch("binary");
  write_dataset(synth_dataset(9, 1, 3, 64, 64), root);
  for (const auto& entry : fs::directory_iterator(root / "video_0000" / "masks")) {
    for (auto px : read_gray_png(entry.path()).pixels) ASSERT_TRUE(px == 0 || px == 255);
  }
  fs::remove_all(root);
}

TEST(Dataset, ManifestErrors) {
  const auto root = scratch("manifest");
  fs::create_directories(root);
  EXPECT_THROW(read_manifest(root), IoError);
  std::ofstream(root / "manifest.txt") << "scfnet-dataset 99\n";
  EXPECT_THROW(read_manifest(root), FormatError);
  std::ofstream(root / "manifest.txt") << "scfnet-dataset 1\nvideo_0000 ten procedural 4\n";
  EXPECT_THROW(read_manifest(root), FormatError);
  std::ofstream(root / "manifest.txt") << "scfnet-dataset 1\nvideo_0000 3 procedural 4\n";
  EXPECT_THROW(read_dataset(root), IoError);
  fs::remove_all(root);
}

TEST(Dataset, DuplicateIdsRejected) {
  auto videos = synth_dataset(5, 1, 3, 64, 64);
  videos.push_back(videos[0]);
  EXPECT_THROW(write_dataset(videos, scratch("dup")), ArgumentError);
  fs::remove_all(scratch("dup"));
}

TEST(Dataset, ReproducibleFromSeed) {
  auto a = synth_dataset(21, 3, 4, 64, 64), b = synth_dataset(21, 3, 4, 64, 64);
  for (std::size_t v = 0; v < 3; ++v) {
    EXPECT_EQ(a[v].seed, b[v].seed);
    EXPECT_EQ(a[v].frames, b[v].frames);
    // The manifest seed alone regenerates the video.
    auto again = synth_video(random_scene(a[v].seed, 4, 64, 64));
    EXPECT_EQ(again.frames, a[v].frames);
  }
}

TEST(PngIo, ProbabilityRoundTripWithinHalfStep) {
  const auto root = scratch("prob");
  fs::create_directories(root);
  LocalizationMap m;
  m.height = 3;
  m.width = 5;
  for (int i = 0; i < 15; ++i) m.probs.push_back(static_cast<float>(i) / 14.0f);
  write_probability_png(root / "p.png", m);
  auto back = read_probability_png(root / "p.png");
  for (int i = 0; i < 15; ++i) EXPECT_LE(std::abs(back.probs[i] - m.probs[i]), 1.0 / 510 + 1e-7);
  EXPECT_THROW(read_frame_png(root / "missing.png"), IoError);
  fs::remove_all(root);
}
