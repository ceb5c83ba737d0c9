#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "mmtrust/core.hpp"
#include "mmtrust/features.hpp"
#include "mmtrust/imgproc.hpp"

namespace mmtrust::synthdata {

// Parameters of the synthetic bed scene. Lengths are in meters on a 2 m × 1 m
// bed; x runs from head end to foot end, y across the bed.
struct GeneratorConfig {
  std::uint64_t seed = 7;
  int n_actors = 2;
  int sessions_per_actor = 2;
  int image_width = 160;
  int image_height = 120;

  double noise_sigma = 0.06;           // RGB additive noise
  double depth_noise_sigma = 0.025;
  double pressure_noise_sigma = 0.03;
  std::array<double, 3> illumination_gains{1.0, 0.55, 0.25};  // bright, medium, dark

  double blanket_coverage = 0.9;   // fraction of body length under the blanket
  double blanket_blur_px = 4.0;    // depth smoothing under the blanket
  double pillow_attenuation = 0.35;  // pressure factor on the head/upper back

  double pose_jitter_m = 0.03;     // per-observation body translation
  double part_jitter_m = 0.02;     // per-part center jitter
  double angle_jitter_deg = 4.0;

  std::vector<View> views{View::Top, View::Side, View::Head};
  features::HogConfig hog;
  features::GmomConfig gmom;

  // Throws std::invalid_argument on inconsistent values.
  void validate() const;

  // Camera distortion applied when rendering each view from the top frame.
  imgproc::Homography view_distortion(View v) const;
  // Inverse distortions, used to bring every view back into the top frame.
  imgproc::Registration registration() const;

  std::size_t n_points() const {
    return static_cast<std::size_t>(n_actors) * sessions_per_actor * kNumLabels * kNumScenes;
  }
};

enum class BodyRegion : std::uint8_t { Head, Torso, Arm, Leg };

struct BodyPart {
  double x = 0.0, y = 0.0;     // center (m)
  double rx = 0.0, ry = 0.0;   // semi-axes (m)
  double angle_deg = 0.0;
  double height = 0.0;         // peak elevation above the mattress (m)
  double albedo = 0.7;         // RGB reflectance
  double load = 0.0;           // pressure weight; 0 when not touching the mat
  double load_slope = 0.0;     // load gradient along the part's major axis
  BodyRegion region = BodyRegion::Torso;
};

struct PoseTemplate {
  PoseLabel label = PoseLabel::Background;
  std::vector<BodyPart> parts;  // drawn in order
  bool left = false;            // mirrored across the bed's long axis
};

PoseTemplate pose_template(PoseLabel label);
// Reflects a template across the bed center line (y → 1 − y).
PoseTemplate mirror(const PoseTemplate& tpl);

// Per-actor body scale plus per-observation jitter of position and limbs.
PoseTemplate jitter(const PoseTemplate& tpl, double body_scale, const GeneratorConfig& cfg,
                    std::uint64_t rng_seed);

struct ViewImages {
  GrayImage rgb;
  GrayImage depth;
};

// Renders RGB and depth for one view, quantized to 8 and 16 bits. Noise is
// drawn from streams derived from `rng_seed` and the view.
ViewImages render_scene(const PoseTemplate& tpl, const SceneCondition& scene, View view,
                        const GeneratorConfig& cfg, std::uint64_t rng_seed);

// Pressure-mat load image (16-bit quantized). Independent of illumination.
GrayImage render_pressure(const PoseTemplate& tpl, const SceneCondition& scene,
                          const GeneratorConfig& cfg, std::uint64_t rng_seed);

// All raw images of one observation, keyed by channel, in camera frames.
std::map<ChannelKey, GrayImage> render_point(const GeneratorConfig& cfg, int actor, int session,
                                             const SceneCondition& scene, PoseLabel label);

// Full factorial dataset over actors × sessions × scenes × labels with
// RGB and depth for every configured view plus pressure.
Dataset generate(const GeneratorConfig& cfg, std::size_t threads = 1);

// Image source that also knows the generator configuration behind the
// images (synthetic rendering or a saved dataset directory).
class GeneratorSource : public ImageSource {
 public:
  virtual const GeneratorConfig& config() const = 0;
};

// Writes manifest.json plus one PGM per (point, channel). The dataset must
// carry a GeneratorSource. Throws IoError.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

struct LoadedDataset {
  Dataset dataset;
  GeneratorConfig config;
};

// Reads a dataset directory and re-extracts features. Throws MissingFile,
// ManifestMismatch.
LoadedDataset load_dataset(const std::filesystem::path& dir, std::size_t threads = 1);

// File name of one channel image: a{actor}_s{session}_c{scene}_l{label}_{R|D|P}_{t|s|h|none}.pgm
std::string image_file_name(const DataPoint& p, const ChannelKey& key);

}  // namespace mmtrust::synthdata
