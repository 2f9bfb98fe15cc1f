#include "scfnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "scfnet/errors.hpp"
#include "scfnet/png_io.hpp"

namespace scfnet {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c = 0) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(a));
  h = splitmix(h ^ static_cast<std::uint64_t>(b));
  return splitmix(h ^ static_cast<std::uint64_t>(c));
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

double gauss(std::uint64_t seed, std::int64_t a, std::int64_t b, std::int64_t c) {
  const double u1 = std::max(unit(hash(seed, a, b, 2 * c)), 1e-300);
  const double u2 = unit(hash(seed, a, b, 2 * c + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Smooth lattice noise in [-1, 1] with the given cell size.
double value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double gx = x / cell, gy = y / cell;
  const double fx0 = std::floor(gx), fy0 = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx0), iy = static_cast<std::int64_t>(fy0);
  auto smooth = [](double t) { return t * t * (3 - 2 * t); };
  const double tx = smooth(gx - fx0), ty = smooth(gy - fy0);
  auto lattice = [&](std::int64_t i, std::int64_t j) { return 2.0 * unit(hash(seed, i, j)) - 1.0; };
  const double top = lattice(ix, iy) * (1 - tx) + lattice(ix + 1, iy) * tx;
  const double bot = lattice(ix, iy + 1) * (1 - tx) + lattice(ix + 1, iy + 1) * tx;
  return top * (1 - ty) + bot * ty;
}

struct Shape2D {
  ObjectKind kind;
  double rx, ry;
  std::vector<double> vx, vy;  // polygon vertices relative to the centre

  double extent_x() const { return kind == ObjectKind::Ellipse ? rx : std::max(rx, ry); }
  double extent_y() const { return kind == ObjectKind::Ellipse ? ry : std::max(rx, ry); }

  // Positive inside, in px (approximate for ellipses).
  double signed_distance(double dx, double dy) const {
    if (kind == ObjectKind::Ellipse) {
      const double r = std::sqrt((dx / rx) * (dx / rx) + (dy / ry) * (dy / ry));
      return (1.0 - r) * std::min(rx, ry);
    }
    bool inside = false;
    double best = 1e300;
    const std::size_t n = vx.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      if ((vy[i] > dy) != (vy[j] > dy) && dx < (vx[j] - vx[i]) * (dy - vy[i]) / (vy[j] - vy[i]) + vx[i]) {
        inside = !inside;
      }
      const double ex = vx[i] - vx[j], ey = vy[i] - vy[j];
      const double t = std::clamp(((dx - vx[j]) * ex + (dy - vy[j]) * ey) / (ex * ex + ey * ey), 0.0, 1.0);
      const double px = vx[j] + t * ex - dx, py = vy[j] + t * ey - dy;
      best = std::min(best, std::sqrt(px * px + py * py));
    }
    return inside ? best : -best;
  }
};

Shape2D make_shape(const SceneSpec& spec) {
  Shape2D s{spec.object, spec.radius_x, spec.radius_y, {}, {}};
  if (spec.object == ObjectKind::Polygon) {
    const double outer = std::max(spec.radius_x, spec.radius_y);
    const int k = spec.polygon_vertices;
    for (int i = 0; i < k; ++i) {
      const double jitter = (unit(hash(spec.texture_seed, i, 1)) - 0.5) * 0.6;
      const double angle = 2.0 * std::numbers::pi * (i + 0.5 + jitter) / k;
      const double r = outer * (0.65 + 0.35 * unit(hash(spec.texture_seed, i, 2)));
      s.vx.push_back(r * std::cos(angle));
      s.vy.push_back(r * std::sin(angle));
    }
  }
  return s;
}

constexpr double kBackgroundNoise = 0.01;
constexpr double kForegroundNoise = 0.06;

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) { return splitmix(seed ^ splitmix(index + 1)); }

void SceneSpec::validate() const {
  if (frames < 3) throw SpecError("scene needs at least 3 frames, got " + std::to_string(frames));
  if (height < 8 || width < 8) throw SpecError("scene size must be at least 8x8");
  if (!(radius_x > 0 && radius_y > 0)) throw SpecError("object radii must be positive");
  if (object == ObjectKind::Polygon && polygon_vertices < 3) throw SpecError("polygon needs at least 3 vertices");
  if (feather < 0) throw SpecError("feather must be non-negative");
  const Shape2D s{object, radius_x, radius_y, {}, {}};
  if (2 * s.extent_x() + 3 > width || 2 * s.extent_y() + 3 > height) {
    throw SpecError("object of extent " + std::to_string(2 * s.extent_x()) + "x" + std::to_string(2 * s.extent_y()) +
                    " cannot stay inside a " + std::to_string(width) + "x" + std::to_string(height) + " frame");
  }
}

SceneSpec random_scene(std::uint64_t seed, int frames, int height, int width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec s;
  s.seed = seed;
  s.frames = frames;
  s.height = height;
  s.width = width;
  s.background = u(rng) < 0.5 ? BackgroundKind::TexturedNoise : BackgroundKind::GradientDrift;
  s.drift_x = (u(rng) - 0.5) * 1.2;
  s.drift_y = (u(rng) - 0.5) * 1.2;
  s.object = u(rng) < 0.5 ? ObjectKind::Ellipse : ObjectKind::Polygon;
  const double short_side = std::min(height, width);
  s.radius_x = short_side * (0.18 + 0.14 * u(rng));
  s.radius_y = short_side * (0.18 + 0.14 * u(rng));
  s.polygon_vertices = 5 + static_cast<int>(u(rng) * 4);
  s.texture_seed = rng();
  const double ex = s.object == ObjectKind::Ellipse ? s.radius_x : std::max(s.radius_x, s.radius_y);
  const double ey = s.object == ObjectKind::Ellipse ? s.radius_y : std::max(s.radius_x, s.radius_y);
  s.trajectory.x0 = ex + 1 + u(rng) * std::max(0.0, width - 3 - 2 * ex);
  s.trajectory.y0 = ey + 1 + u(rng) * std::max(0.0, height - 3 - 2 * ey);
  s.trajectory.vx = (u(rng) - 0.5) * 2.4;
  s.trajectory.vy = (u(rng) - 0.5) * 2.4;
  if (u(rng) < 0.5) {
    s.trajectory.amp_x = 3 * u(rng);
    s.trajectory.amp_y = 3 * u(rng);
    s.trajectory.freq = 0.05 + 0.15 * u(rng);
  }
  s.feather = u(rng) < 0.5 ? 0.0 : 1.0 + 2.0 * u(rng);
  return s;
}

SynthVideo synth_video(const SceneSpec& spec) {
  spec.validate();
  const auto h = static_cast<std::size_t>(spec.height), w = static_cast<std::size_t>(spec.width);
  const Shape2D shape = make_shape(spec);
  const double ex = shape.extent_x(), ey = shape.extent_y();

  // Per-video palette. Both layers are muted greys with small tints, so colour
  // alone separates them poorly; the pasted region differs mainly in fine
  // texture and noise level.
  std::mt19937_64 rng(spec.seed ^ 0x5ca1ab1eULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double bg_base[3], bg_tint[3], fg_base[3], fg_amp[3];
  const double grey = 0.35 + 0.3 * u(rng);
  for (int c = 0; c < 3; ++c) bg_base[c] = grey + (u(rng) - 0.5) * 0.16;
  for (int c = 0; c < 3; ++c) bg_tint[c] = (u(rng) - 0.5) * 0.3;
  const double fg_grey = 0.35 + 0.3 * u(rng);
  for (int c = 0; c < 3; ++c) fg_base[c] = fg_grey + (u(rng) - 0.5) * 0.16;
  for (int c = 0; c < 3; ++c) fg_amp[c] = 0.08 + 0.08 * u(rng);
  const double grad_angle = 2 * std::numbers::pi * u(rng);
  const std::uint64_t bg_seed = splitmix(spec.seed ^ 0xb4c6ULL);
  const std::uint64_t fg_seed = splitmix(spec.texture_seed ^ 0xf06ULL);

  SynthVideo v;
  v.seed = spec.seed;
  for (int t = 0; t < spec.frames; ++t) {
    const double ox = spec.drift_x * t, oy = spec.drift_y * t;
    const auto& tr = spec.trajectory;
    const double wave = std::sin(2 * std::numbers::pi * tr.freq * t);
    const double cx = std::clamp(tr.x0 + tr.vx * t + tr.amp_x * wave, ex + 1, w - 2 - ex);
    const double cy = std::clamp(tr.y0 + tr.vy * t + tr.amp_y * wave, ey + 1, h - 2 - ey);

    Frame bg(h, w), out(h, w);
    Mask mask(h, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double sx = x + ox, sy = y + oy;
        double field;
        if (spec.background == BackgroundKind::TexturedNoise) {
          field = 0.22 * value_noise(bg_seed, sx, sy, 24.0) + 0.08 * value_noise(bg_seed + 1, sx, sy, 11.0);
        } else {
          const double along = (sx - w / 2.0) * std::cos(grad_angle) + (sy - h / 2.0) * std::sin(grad_angle);
          field = 0.25 * along / std::max(h, w) + 0.06 * value_noise(bg_seed, sx, sy, 20.0);
        }
        // Foreground texture lives in object coordinates and moves with it.
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double fg_field = value_noise(fg_seed, dx, dy, 4.0);
        const double d = shape.signed_distance(dx, dy);
        double alpha;
        if (spec.feather > 0) {
          alpha = std::clamp(0.5 + d / spec.feather, 0.0, 1.0);
        } else {
          alpha = d > 0 ? 1.0 : 0.0;
        }
        mask.at(y, x) = d > 0 ? 1 : 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const auto ci = static_cast<std::int64_t>(c);
          const double b = bg_base[c] + field * (1.0 + bg_tint[c]) +
                           kBackgroundNoise * gauss(bg_seed, t, static_cast<std::int64_t>(y * w + x), ci);
          const double f = fg_base[c] + fg_amp[c] * fg_field +
                           kForegroundNoise * gauss(fg_seed, t, static_cast<std::int64_t>(y * w + x), ci);
          const float bq = static_cast<float>(std::clamp(b, 0.0, 1.0));
          bg.at(c, y, x) = bq;
          out.at(c, y, x) = alpha == 0.0 ? bq : static_cast<float>(std::clamp(b * (1 - alpha) + f * alpha, 0.0, 1.0));
        }
      }
    v.background.push_back(quantize_8bit(bg));
    v.frames.push_back(quantize_8bit(out));
    v.masks.push_back(std::move(mask));
  }
  return v;
}

CompositeResult composite_splice(const std::vector<Frame>& background, const std::vector<Frame>& foreground,
                                 const std::vector<Mask>& fg_masks, const Placement& placement) {
  if (background.size() != foreground.size() || background.size() != fg_masks.size()) {
    throw ArgumentError("composite_splice sequence lengths differ: background " + std::to_string(background.size()) +
                        ", foreground " + std::to_string(foreground.size()) + ", masks " +
                        std::to_string(fg_masks.size()));
  }
  if (placement.feather < 0) throw ArgumentError("feather must be non-negative");
  CompositeResult res;
  for (std::size_t t = 0; t < background.size(); ++t) {
    const Frame& bg = background[t];
    const Frame& fg = foreground[t];
    const Mask& m = fg_masks[t];
    if (fg.height != m.height || fg.width != m.width) {
      throw ArgumentError("foreground frame and mask " + std::to_string(t) + " differ in size");
    }
    const long h = static_cast<long>(bg.height), w = static_cast<long>(bg.width);
    // Hard alpha in background coordinates.
    std::vector<double> alpha(bg.height * bg.width, 0.0);
    std::vector<long> src(bg.height * bg.width, -1);
    for (long y = 0; y < static_cast<long>(m.height); ++y)
      for (long x = 0; x < static_cast<long>(m.width); ++x) {
        const long by = y + placement.dy, bx = x + placement.dx;
        const bool in = by >= 0 && bx >= 0 && by < h && bx < w;
        if (m.at(y, x) && !in) {
          throw ArgumentError("placement moves foreground pixel (" + std::to_string(x) + "," + std::to_string(y) +
                              ") of frame " + std::to_string(t) + " outside the background");
        }
        if (!in) continue;
        src[by * w + bx] = y * static_cast<long>(m.width) + x;
        if (m.at(y, x)) alpha[by * w + bx] = 1.0;
      }
    if (placement.feather > 0) {
      const long r = std::lround(placement.feather);
      std::vector<double> blurred(alpha.size(), 0.0);
      for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
          double s = 0;
          long n = 0;
          for (long yy = std::max(0L, y - r); yy <= std::min(h - 1, y + r); ++yy)
            for (long xx = std::max(0L, x - r); xx <= std::min(w - 1, x + r); ++xx, ++n) s += alpha[yy * w + xx];
          blurred[y * w + x] = s / n;
        }
      alpha = std::move(blurred);
    }
    Frame out = bg;
    Mask gt(bg.height, bg.width);
    const std::size_t hw = bg.height * bg.width, fhw = fg.height * fg.width;
    for (std::size_t i = 0; i < hw; ++i) {
      gt.bits[i] = alpha[i] > 0.5 ? 1 : 0;
      if (alpha[i] == 0.0) continue;
      if (src[i] < 0) throw ArgumentError("feathered alpha reaches outside the placed foreground");
      for (std::size_t c = 0; c < 3; ++c) {
        const float f = fg.rgb[c * fhw + static_cast<std::size_t>(src[i])];
        out.rgb[c * hw + i] =
            alpha[i] == 1.0 ? f : static_cast<float>(bg.rgb[c * hw + i] * (1 - alpha[i]) + f * alpha[i]);
      }
    }
    res.frames.push_back(std::move(out));
    res.masks.push_back(std::move(gt));
  }
  return res;
}

std::vector<SynthVideo> synth_dataset(std::uint64_t seed, int videos, int frames, int height, int width) {
  std::vector<SynthVideo> out;
  for (int i = 0; i < videos; ++i) {
    auto v = synth_video(random_scene(derive_seed(seed, i), frames, height, width));
    std::ostringstream id;
    id << "video_" << std::setw(4) << std::setfill('0') << i;
    v.id = id.str();
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::string source_name(VideoSource s) { return s == VideoSource::Procedural ? "procedural" : "composited"; }

std::string frame_name(std::size_t i) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << i << ".png";
  return s.str();
}

}  // namespace

DatasetManifest write_dataset(const std::vector<SynthVideo>& videos, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  DatasetManifest manifest;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  for (const auto& v : videos) {
    if (v.id.empty() || v.id.find_first_of(" \t\n/") != std::string::npos) {
      throw ArgumentError("invalid video id '" + v.id + "'");
    }
    for (const auto& e : manifest.videos)
      if (e.id == v.id) throw ArgumentError("duplicate video id " + v.id);
    if (v.frames.size() != v.masks.size()) throw ArgumentError("video " + v.id + " has unequal frame and mask counts");
    const fs::path dir = root / v.id;
    fs::create_directories(dir / "frames", ec);
    if (!ec) fs::create_directories(dir / "masks", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      write_frame_png(dir / "frames" / frame_name(t), v.frames[t]);
      write_mask_png(dir / "masks" / frame_name(t), v.masks[t]);
    }
    manifest.videos.push_back({v.id, static_cast<int>(v.frames.size()), v.source, v.seed});
  }
  std::ofstream out(root / "manifest.txt");
  if (!out) throw IoError("cannot write " + (root / "manifest.txt").string());
  out << "scfnet-dataset " << manifest.version << "\n";
  out << "# id frames source seed\n";
  for (const auto& e : manifest.videos) out << e.id << ' ' << e.frames << ' ' << source_name(e.source) << ' ' << e.seed << "\n";
  if (!out) throw IoError("write failed for " + (root / "manifest.txt").string());
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  DatasetManifest m;
  std::string line, magic;
  if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
  std::istringstream head(line);
  if (!(head >> magic >> m.version) || magic != "scfnet-dataset") throw FormatError(path.string() + ": bad header");
  if (m.version != kManifestVersion) {
    throw FormatError(path.string() + ": manifest version " + std::to_string(m.version) + " is not supported");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    ManifestEntry e;
    std::string source;
    if (!(row >> e.id >> e.frames >> source >> e.seed) || (source != "procedural" && source != "composited")) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed entry");
    }
    e.source = source == "procedural" ? VideoSource::Procedural : VideoSource::Composited;
    m.videos.push_back(e);
  }
  return m;
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Frame> read_frames(const std::filesystem::path& dir) {
  const auto sub = std::filesystem::is_directory(dir / "frames") ? dir / "frames" : dir;
  std::vector<Frame> frames;
  for (const auto& f : list_pngs(sub)) frames.push_back(read_frame_png(f));
  return frames;
}

VideoData read_video(const std::filesystem::path& dir) {
  const auto& list = list_pngs;
  VideoData v;
  v.id = dir.filename().string();
  for (const auto& f : list(dir / "frames")) v.frames.push_back(read_frame_png(f));
  for (const auto& f : list(dir / "masks")) v.masks.push_back(read_mask_png(f));
  if (v.frames.size() != v.masks.size()) {
    throw FormatError(dir.string() + ": " + std::to_string(v.frames.size()) + " frames but " +
                      std::to_string(v.masks.size()) + " masks");
  }
  return v;
}

std::vector<VideoData> read_dataset(const std::filesystem::path& root) {
  const auto manifest = read_manifest(root);
  std::vector<VideoData> out;
  for (const auto& e : manifest.videos) {
    auto v = read_video(root / e.id);
    if (static_cast<int>(v.frames.size()) != e.frames) {
      throw FormatError("video " + e.id + " lists " + std::to_string(e.frames) + " frames, found " +
                        std::to_string(v.frames.size()));
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace scfnet
