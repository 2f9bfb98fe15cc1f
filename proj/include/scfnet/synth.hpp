#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scfnet/image.hpp"

namespace scfnet {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class BackgroundKind { TexturedNoise, GradientDrift };
enum class ObjectKind { Ellipse, Polygon };

/// Object centre over time: start + velocity * t + amplitude * sin(2 pi freq t)
/// on each axis. Positions are clamped so the object stays inside the frame.
struct Trajectory {
  double x0 = 0, y0 = 0;
  double vx = 0, vy = 0;
  double amp_x = 0, amp_y = 0;
  double freq = 0;  // cycles per frame
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int frames = 10;
  int height = 64, width = 64;
  BackgroundKind background = BackgroundKind::TexturedNoise;
  double drift_x = 0, drift_y = 0;  // camera drift, px / frame
  ObjectKind object = ObjectKind::Ellipse;
  double radius_x = 16, radius_y = 12;  // ellipse semi-axes; polygon outer radius is max of both
  int polygon_vertices = 6;
  std::uint64_t texture_seed = 0;
  Trajectory trajectory;
  double feather = 0;  // alpha ramp width in px; 0 gives a hard paste

  void validate() const;
};

/// Random desk-scale scene. Objects cover a sizeable share of the frame
/// (semi-axes between 0.18 and 0.32 of the short side).
SceneSpec random_scene(std::uint64_t seed, int frames, int height, int width);

enum class VideoSource { Procedural, Composited };

struct SynthVideo {
  std::string id;
  std::uint64_t seed = 0;
  VideoSource source = VideoSource::Procedural;
  std::vector<Frame> frames;       // spliced, 8-bit quantized
  std::vector<Mask> masks;         // alpha > 0.5
  std::vector<Frame> background;   // pristine background, 8-bit quantized
};

/// Renders a spliced video. Background and foreground come from distinct
/// processes: the background is a smooth drifting field with faint sensor
/// noise, the foreground a finer, more saturated texture with stronger noise.
/// Deterministic in the spec.
SynthVideo synth_video(const SceneSpec& spec);

struct Placement {
  int dx = 0, dy = 0;   // foreground offset in background coordinates
  double feather = 0;   // box-blur radius of the alpha in px; 0 keeps it binary
};

struct CompositeResult {
  std::vector<Frame> frames;
  std::vector<Mask> masks;
};

/// out = bg * (1 - alpha) + fg * alpha per frame, alpha taken from the
/// shifted foreground mask; gt = alpha > 0.5.
CompositeResult composite_splice(const std::vector<Frame>& background, const std::vector<Frame>& foreground,
                                 const std::vector<Mask>& fg_masks, const Placement& placement);

struct ManifestEntry {
  std::string id;
  int frames = 0;
  VideoSource source = VideoSource::Procedural;
  std::uint64_t seed = 0;
  bool operator==(const ManifestEntry&) const = default;
};

inline constexpr int kManifestVersion = 1;

/// `manifest.txt` at the dataset root:
///   line 1:  scfnet-dataset <version>
///   then one line per video: <id> <frames> <procedural|composited> <seed>
/// Lines starting with '#' are comments.
struct DatasetManifest {
  int version = kManifestVersion;
  std::vector<ManifestEntry> videos;
};

/// Writes <root>/<id>/frames/%05d.png, <root>/<id>/masks/%05d.png and the
/// manifest.
DatasetManifest write_dataset(const std::vector<SynthVideo>& videos, const std::filesystem::path& root);
DatasetManifest read_manifest(const std::filesystem::path& root);

struct VideoData {
  std::string id;
  std::vector<Frame> frames;
  std::vector<Mask> masks;
};

// Reads one video directory (frames and masks sorted by file name).
VideoData read_video(const std::filesystem::path& dir);
// Frames of `dir/frames`, or of `dir` itself when it has no frames/ subdirectory.
std::vector<Frame> read_frames(const std::filesystem::path& dir);
// PNG files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);
// Every video listed in the manifest, in manifest order.
std::vector<VideoData> read_dataset(const std::filesystem::path& root);

/// Procedural dataset of `videos` scenes; video i uses seed derive_seed(seed, i).
std::vector<SynthVideo> synth_dataset(std::uint64_t seed, int videos, int frames, int height, int width);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace scfnet
