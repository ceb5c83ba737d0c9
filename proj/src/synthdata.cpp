#include "mmtrust/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace mmtrust::synthdata {

namespace {

using json = nlohmann::json;

constexpr double kBedLength = 2.0;
constexpr double kBedWidth = 1.0;

// Stream ids for the per-observation random number generators.
enum Stream : std::uint64_t {
  kGeometry = 1,
  kRgbNoise = 10,
  kDepthNoise = 20,
  kPressureNoise = 30,
  kActorShape = 40,
};

// Portable standard normal draw (Box–Muller over mt19937_64 bits).
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Pixel ↔ bed-metric mapping. The bed is centered so that mirroring across
// its long axis is a row flip of the image.
struct BedFrame {
  double scale;  // pixels per meter
  double x0, y0;

  explicit BedFrame(const GeneratorConfig& cfg) {
    scale = std::min(cfg.image_width * 0.875 / kBedLength, cfg.image_height * 0.85 / kBedWidth);
    x0 = (cfg.image_width - kBedLength * scale) / 2.0;
    y0 = (cfg.image_height - kBedWidth * scale) / 2.0;
  }
  double mx(int px) const { return (px + 0.5 - x0) / scale; }
  double my(int py) const { return (py + 0.5 - y0) / scale; }
  static bool on_bed(double x, double y) {
    return x >= 0.0 && x <= kBedLength && y >= 0.0 && y <= kBedWidth;
  }
};

struct PartSample {
  double coverage = 0.0;  // soft inside-mask in [0,1]
  double profile = 0.0;   // sqrt(1 − r²), 0 outside
  double axial = 0.0;     // position along the major axis in [-1, 1]
};

PartSample sample_part(const BodyPart& p, double x, double y) {
  const double a = p.angle_deg * std::numbers::pi / 180.0;
  const double dx = x - p.x, dy = y - p.y;
  const double u = dx * std::cos(a) + dy * std::sin(a);
  const double v = -dx * std::sin(a) + dy * std::cos(a);
  const double r2 = (u / p.rx) * (u / p.rx) + (v / p.ry) * (v / p.ry);
  PartSample s;
  if (r2 >= 1.0) return s;
  const double r = std::sqrt(r2);
  s.coverage = std::clamp((1.0 - r) / 0.15, 0.0, 1.0);
  s.profile = std::sqrt(1.0 - r2);
  s.axial = std::clamp(u / p.rx, -1.0, 1.0);
  return s;
}

const BodyPart kPillow{0.20, 0.50, 0.16, 0.30, 0.0, 0.07, 0.92, 0.0, 0.0, BodyRegion::Head};

// Parts resting on the pillow: the head and the upper back.
bool on_pillow_region(const BodyPart& p, double x) {
  return p.region == BodyRegion::Head || (p.region == BodyRegion::Torso && x < 0.5) ||
         (p.region == BodyRegion::Arm && x < 0.35);
}

double blanket_start(const GeneratorConfig& cfg) {
  // The blanket runs from the shoulders to the foot of the bed.
  return 0.2 + kBedLength * (1.0 - cfg.blanket_coverage);
}

double blanket_mask(const GeneratorConfig& cfg, double x, double y) {
  const double edge = 0.03;
  const double xs = std::clamp((x - blanket_start(cfg)) / edge, 0.0, 1.0);
  const double xe = std::clamp((kBedLength - 0.03 - x) / edge, 0.0, 1.0);
  const double ys = std::clamp((y - 0.03) / edge, 0.0, 1.0);
  const double ye = std::clamp((kBedWidth - 0.03 - y) / edge, 0.0, 1.0);
  return std::min({xs, xe, ys, ye});
}

// Separable box blur with the given radius (pixels), edge-clamped.
GrayImage box_blur(const GrayImage& img, int radius) {
  if (radius <= 0) return img;
  const int w = img.width(), h = img.height();
  GrayImage tmp(w, h), out(w, h);
  const double n = 2.0 * radius + 1.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += img.at(std::clamp(x + d, 0, w - 1), y);
      tmp.at(x, y) = s / n;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += tmp.at(x, std::clamp(y + d, 0, h - 1));
      out.at(x, y) = s / n;
    }
  return out;
}

// Elevation of the body (and pillow) above the mattress, in meters.
GrayImage height_field(const PoseTemplate& tpl, const SceneCondition& scene,
                       const GeneratorConfig& cfg) {
  const BedFrame frame(cfg);
  GrayImage h(cfg.image_width, cfg.image_height);
  for (int py = 0; py < cfg.image_height; ++py) {
    for (int px = 0; px < cfg.image_width; ++px) {
      const double x = frame.mx(px), y = frame.my(py);
      double pillow = 0.0;
      if (scene.has_pillow()) pillow = kPillow.height * sample_part(kPillow, x, y).coverage;
      double top = pillow;
      for (const auto& part : tpl.parts) {
        const auto s = sample_part(part, x, y);
        if (s.coverage <= 0.0) continue;
        const double lift = on_pillow_region(part, x) ? pillow : 0.0;
        top = std::max(top, lift + part.height * s.profile * std::min(1.0, 4.0 * s.coverage));
      }
      h.at(px, py) = top;
    }
  }
  return h;
}

// Noise-free RGB reflectance in the top frame, before illumination gain.
GrayImage rgb_base(const PoseTemplate& tpl, const SceneCondition& scene,
                   const GeneratorConfig& cfg, const GrayImage& heights) {
  const BedFrame frame(cfg);
  GrayImage blurred_h;
  if (scene.has_blanket())
    blurred_h = box_blur(heights, static_cast<int>(std::lround(2.0 * cfg.blanket_blur_px)));
  GrayImage img(cfg.image_width, cfg.image_height);
  for (int py = 0; py < cfg.image_height; ++py) {
    for (int px = 0; px < cfg.image_width; ++px) {
      const double x = frame.mx(px), y = frame.my(py);
      double v = BedFrame::on_bed(x, y) ? 0.45 : 0.2;
      if (scene.has_pillow()) {
        const auto s = sample_part(kPillow, x, y);
        v += s.coverage * (kPillow.albedo * (0.85 + 0.15 * s.profile) - v);
      }
      for (const auto& part : tpl.parts) {
        const auto s = sample_part(part, x, y);
        if (s.coverage <= 0.0) continue;
        v += s.coverage * (part.albedo * (0.8 + 0.2 * s.profile) - v);
      }
      if (scene.has_blanket()) {
        const double m = blanket_mask(cfg, x, y);
        if (m > 0.0) {
          const double cloth = 0.55 + 0.6 * blurred_h.at(px, py);
          v += m * (cloth - v);
        }
      }
      img.at(px, py) = v;
    }
  }
  return img;
}

// Noise-free depth image in the top frame: mattress level plus elevation.
GrayImage depth_base(const SceneCondition& scene, const GeneratorConfig& cfg,
                     const GrayImage& heights) {
  const BedFrame frame(cfg);
  GrayImage covered;
  if (scene.has_blanket())
    covered = box_blur(heights, static_cast<int>(std::lround(cfg.blanket_blur_px)));
  GrayImage img(cfg.image_width, cfg.image_height);
  for (int py = 0; py < cfg.image_height; ++py) {
    for (int px = 0; px < cfg.image_width; ++px) {
      const double x = frame.mx(px), y = frame.my(py);
      if (!BedFrame::on_bed(x, y)) {
        img.at(px, py) = 0.15;
        continue;
      }
      double h = heights.at(px, py);
      if (scene.has_blanket()) {
        const double m = blanket_mask(cfg, x, y);
        h += m * (std::max(covered.at(px, py), 0.03) + 0.01 - h);
      }
      img.at(px, py) = 0.35 + h;
    }
  }
  return img;
}

GrayImage add_noise(const GrayImage& img, double sigma, std::uint64_t seed) {
  GrayImage out = img;
  if (sigma > 0.0) {
    Gaussian g(seed);
    for (auto& p : out.pixels()) p += sigma * g();
  }
  out.clamp();
  return out;
}

GrayImage to_view(const GrayImage& top, View view, const GeneratorConfig& cfg) {
  if (view == View::Top) return top;
  return imgproc::warp(top, cfg.view_distortion(view), top.width(), top.height());
}

std::uint64_t observation_key(int actor, int session) {
  return static_cast<std::uint64_t>(actor) * 1009u + static_cast<std::uint64_t>(session);
}

std::uint64_t condition_key(const SceneCondition& scene, PoseLabel label) {
  return scene.index() * 16u + index_of(label);
}

double actor_scale(const GeneratorConfig& cfg, int actor) {
  Gaussian g(mix_seed(cfg.seed, kActorShape, static_cast<std::uint64_t>(actor)));
  return 0.92 + 0.16 * g.uniform();
}

// ---------------------------------------------------------------------------
// Dataset sources

class SyntheticSource final : public GeneratorSource {
 public:
  explicit SyntheticSource(GeneratorConfig cfg) : cfg_(std::move(cfg)) {}
  const GeneratorConfig& config() const override { return cfg_; }
  std::map<ChannelKey, GrayImage> images(const DataPoint& p) const override {
    return render_point(cfg_, p.actor_id, p.session_id, p.scene, p.label);
  }

 private:
  GeneratorConfig cfg_;
};

class DirectorySource final : public GeneratorSource {
 public:
  DirectorySource(std::filesystem::path dir, GeneratorConfig cfg)
      : dir_(std::move(dir)), cfg_(std::move(cfg)) {}
  const GeneratorConfig& config() const override { return cfg_; }
  std::map<ChannelKey, GrayImage> images(const DataPoint& p) const override {
    std::map<ChannelKey, GrayImage> out;
    for (const auto& key : make_channels({kAllModalities.begin(), kAllModalities.end()}, cfg_.views)) {
      const auto path = dir_ / image_file_name(p, key);
      if (!std::filesystem::exists(path))
        throw MissingFile("missing image " + path.filename().string());
      out.emplace(key, read_pgm(path));
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
  GeneratorConfig cfg_;
};

DatasetConfig dataset_config(const GeneratorConfig& cfg) {
  DatasetConfig dc;
  dc.modalities.assign(kAllModalities.begin(), kAllModalities.end());
  for (View v : kAllViews)
    if (std::find(cfg.views.begin(), cfg.views.end(), v) != cfg.views.end()) dc.views.push_back(v);
  for (const auto& ch : dc.channels())
    dc.feature_dims[ch] = features::feature_length(ch.modality, cfg.hog, cfg.gmom);
  return dc;
}

// ---------------------------------------------------------------------------
// Manifest

json homography_json(const imgproc::Homography& h) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({h.matrix()(r, 0), h.matrix()(r, 1), h.matrix()(r, 2)});
  return rows;
}

json config_json(const GeneratorConfig& cfg) {
  json views = json::array();
  for (View v : cfg.views) views.push_back(std::string(view_code(v)));
  return {
      {"seed", cfg.seed},
      {"n_actors", cfg.n_actors},
      {"sessions_per_actor", cfg.sessions_per_actor},
      {"image_width", cfg.image_width},
      {"image_height", cfg.image_height},
      {"noise_sigma", cfg.noise_sigma},
      {"depth_noise_sigma", cfg.depth_noise_sigma},
      {"pressure_noise_sigma", cfg.pressure_noise_sigma},
      {"illumination_gains", cfg.illumination_gains},
      {"blanket_coverage", cfg.blanket_coverage},
      {"blanket_blur_px", cfg.blanket_blur_px},
      {"pillow_attenuation", cfg.pillow_attenuation},
      {"pose_jitter_m", cfg.pose_jitter_m},
      {"part_jitter_m", cfg.part_jitter_m},
      {"angle_jitter_deg", cfg.angle_jitter_deg},
      {"views", views},
      {"hog",
       {{"n_orientations", cfg.hog.n_orientations},
        {"cell_px", cfg.hog.cell_px},
        {"block_cells", cfg.hog.block_cells},
        {"work_width", cfg.hog.work_width},
        {"work_height", cfg.hog.work_height},
        {"block_stride_cells", cfg.hog.block_stride_cells}}},
      {"gmom",
       {{"tile_rows", cfg.gmom.tile_rows},
        {"tile_cols", cfg.gmom.tile_cols},
        {"max_order", cfg.gmom.max_order}}},
  };
}

GeneratorConfig config_from_json(const json& j) {
  GeneratorConfig cfg;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.n_actors = j.at("n_actors").get<int>();
  cfg.sessions_per_actor = j.at("sessions_per_actor").get<int>();
  cfg.image_width = j.at("image_width").get<int>();
  cfg.image_height = j.at("image_height").get<int>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  cfg.depth_noise_sigma = j.at("depth_noise_sigma").get<double>();
  cfg.pressure_noise_sigma = j.at("pressure_noise_sigma").get<double>();
  cfg.illumination_gains = j.at("illumination_gains").get<std::array<double, 3>>();
  cfg.blanket_coverage = j.at("blanket_coverage").get<double>();
  cfg.blanket_blur_px = j.at("blanket_blur_px").get<double>();
  cfg.pillow_attenuation = j.at("pillow_attenuation").get<double>();
  cfg.pose_jitter_m = j.at("pose_jitter_m").get<double>();
  cfg.part_jitter_m = j.at("part_jitter_m").get<double>();
  cfg.angle_jitter_deg = j.at("angle_jitter_deg").get<double>();
  cfg.views.clear();
  for (const auto& v : j.at("views")) cfg.views.push_back(view_from_code(v.get<std::string>()));
  const auto& hog = j.at("hog");
  cfg.hog.n_orientations = hog.at("n_orientations").get<int>();
  cfg.hog.cell_px = hog.at("cell_px").get<int>();
  cfg.hog.block_cells = hog.at("block_cells").get<int>();
  cfg.hog.work_width = hog.at("work_width").get<int>();
  cfg.hog.work_height = hog.at("work_height").get<int>();
  cfg.hog.block_stride_cells = hog.at("block_stride_cells").get<int>();
  const auto& gm = j.at("gmom");
  cfg.gmom.tile_rows = gm.at("tile_rows").get<int>();
  cfg.gmom.tile_cols = gm.at("tile_cols").get<int>();
  cfg.gmom.max_order = gm.at("max_order").get<int>();
  cfg.validate();
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------

void GeneratorConfig::validate() const {
  if (n_actors < 1 || sessions_per_actor < 1)
    throw std::invalid_argument("need at least one actor and one session");
  if (image_width < 16 || image_height < 16) throw std::invalid_argument("images too small");
  if (!(illumination_gains[0] > illumination_gains[1] &&
        illumination_gains[1] > illumination_gains[2] && illumination_gains[2] > 0.0))
    throw std::invalid_argument("illumination gains must be descending and positive");
  if (!(blanket_coverage > 0.0 && blanket_coverage <= 1.0))
    throw std::invalid_argument("blanket coverage must lie in (0, 1]");
  if (noise_sigma < 0.0 || depth_noise_sigma < 0.0 || pressure_noise_sigma < 0.0)
    throw std::invalid_argument("noise levels must be nonnegative");
  if (views.empty()) throw std::invalid_argument("at least one view is required");
  hog.validate();
}

imgproc::Homography GeneratorConfig::view_distortion(View v) const {
  // Mild perspective distortions standing in for the side and head cameras,
  // expressed around the image center so content stays in frame.
  const double cx = image_width / 2.0, cy = image_height / 2.0;
  Eigen::Matrix3d center = Eigen::Matrix3d::Identity(), uncenter = Eigen::Matrix3d::Identity();
  center(0, 2) = -cx;
  center(1, 2) = -cy;
  uncenter(0, 2) = cx;
  uncenter(1, 2) = cy;
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  const double sx = 1.0 / image_width, sy = 1.0 / image_height;
  switch (v) {
    case View::Top:
      return imgproc::Homography::identity();
    case View::Side:
      d << 0.94, 0.05, 2.0, -0.03, 0.90, 1.5, 0.12 * sx, 0.05 * sy, 1.0;
      break;
    case View::Head:
      d << 0.92, -0.04, -1.5, 0.04, 0.95, -2.0, -0.10 * sx, 0.14 * sy, 1.0;
      break;
  }
  return imgproc::Homography(uncenter * d * center);
}

imgproc::Registration GeneratorConfig::registration() const {
  imgproc::Registration reg;
  for (View v : views)
    if (v != View::Top) reg.view_to_top.emplace(v, view_distortion(v).inverse());
  return reg;
}

PoseTemplate pose_template(PoseLabel label) {
  using R = BodyRegion;
  PoseTemplate t;
  t.label = label;
  auto part = [](double x, double y, double rx, double ry, double ang, double h, double albedo,
                 double load, double slope, R region) {
    return BodyPart{x, y, rx, ry, ang, h, albedo, load, slope, region};
  };
  // Side-lying poses are modeled lying on the right side, front toward +y;
  // the left variants mirror them.
  const BodyPart side_torso = part(0.66, 0.45, 0.30, 0.12, 0, 0.34, 0.72, 1.1, 0.1, R::Torso);
  const BodyPart side_head = part(0.22, 0.47, 0.11, 0.08, 0, 0.26, 0.58, 0.5, 0, R::Head);
  const BodyPart stacked_legs = part(1.28, 0.46, 0.43, 0.085, 0, 0.24, 0.55, 0.9, -0.2, R::Leg);

  switch (label) {
    case PoseLabel::Background:
      break;
    case PoseLabel::SoldierU:
      t.parts = {
          part(1.28, 0.41, 0.42, 0.075, 0, 0.13, 0.55, 0.7, 0.3, R::Leg),
          part(1.28, 0.59, 0.42, 0.075, 0, 0.13, 0.55, 0.7, 0.3, R::Leg),
          part(0.66, 0.50, 0.30, 0.19, 0, 0.22, 0.72, 1.0, 0.35, R::Torso),
          part(0.68, 0.26, 0.28, 0.05, 5, 0.10, 0.85, 0.35, 0, R::Arm),
          part(0.68, 0.74, 0.28, 0.05, -5, 0.10, 0.85, 0.35, 0, R::Arm),
          part(0.22, 0.50, 0.11, 0.09, 0, 0.19, 0.85, 0.5, 0, R::Head),
      };
      break;
    case PoseLabel::SoldierD:
      t.parts = {
          part(1.28, 0.41, 0.42, 0.075, 0, 0.12, 0.50, 0.7, -0.3, R::Leg),
          part(1.28, 0.59, 0.42, 0.075, 0, 0.12, 0.50, 0.7, -0.3, R::Leg),
          part(0.66, 0.50, 0.30, 0.19, 0, 0.20, 0.66, 1.0, -0.4, R::Torso),
          part(0.62, 0.24, 0.28, 0.05, 15, 0.08, 0.85, 0.45, 0, R::Arm),
          part(0.62, 0.76, 0.28, 0.05, -15, 0.08, 0.85, 0.45, 0, R::Arm),
          part(0.22, 0.50, 0.11, 0.085, 0, 0.17, 0.30, 0.6, 0, R::Head),
      };
      break;
    case PoseLabel::FallerR:
    case PoseLabel::FallerL:
      t.parts = {
          part(1.28, 0.45, 0.43, 0.085, 0, 0.14, 0.55, 0.8, -0.2, R::Leg),
          part(1.12, 0.62, 0.38, 0.08, 25, 0.16, 0.55, 0.5, 0, R::Leg),
          side_torso,
          part(0.62, 0.68, 0.25, 0.05, 70, 0.08, 0.85, 0.35, 0, R::Arm),
          side_head,
      };
      break;
    case PoseLabel::LogR:
    case PoseLabel::LogL:
      t.parts = {
          stacked_legs,
          side_torso,
          part(0.66, 0.47, 0.26, 0.045, 0, 0.40, 0.85, 0.0, 0, R::Arm),
          side_head,
      };
      break;
    case PoseLabel::YearnerR:
    case PoseLabel::YearnerL:
      t.parts = {
          stacked_legs,
          side_torso,
          part(0.40, 0.68, 0.27, 0.045, -50, 0.30, 0.85, 0.0, 0, R::Arm),
          part(0.46, 0.74, 0.27, 0.045, -40, 0.22, 0.85, 0.0, 0, R::Arm),
          side_head,
      };
      break;
    case PoseLabel::FetalR:
    case PoseLabel::FetalL:
      t.parts = {
          part(0.78, 0.80, 0.22, 0.07, 10, 0.20, 0.55, 0.5, 0, R::Leg),
          part(0.92, 0.66, 0.24, 0.085, 70, 0.24, 0.55, 0.7, 0, R::Leg),
          part(0.70, 0.46, 0.26, 0.13, 15, 0.34, 0.72, 1.1, 0.1, R::Torso),
          part(0.58, 0.66, 0.18, 0.05, 60, 0.28, 0.85, 0.0, 0, R::Arm),
          part(0.38, 0.55, 0.10, 0.08, 25, 0.25, 0.58, 0.5, 0, R::Head),
      };
      break;
  }
  const bool left = label == PoseLabel::FallerL || label == PoseLabel::LogL ||
                    label == PoseLabel::YearnerL || label == PoseLabel::FetalL;
  if (left) {
    t = mirror(t);
    t.label = label;
  }
  return t;
}

PoseTemplate mirror(const PoseTemplate& tpl) {
  PoseTemplate out = tpl;
  out.left = !tpl.left;
  for (auto& p : out.parts) {
    p.y = kBedWidth - p.y;
    p.angle_deg = -p.angle_deg;
  }
  return out;
}

PoseTemplate jitter(const PoseTemplate& tpl, double body_scale, const GeneratorConfig& cfg,
                    std::uint64_t rng_seed) {
  Gaussian g(rng_seed);
  PoseTemplate out = tpl;
  const double dx = cfg.pose_jitter_m * g(), dy = cfg.pose_jitter_m * g();
  const double rot = 0.5 * cfg.angle_jitter_deg * g() * std::numbers::pi / 180.0;
  const double anchor_x = 0.1, anchor_y = kBedWidth / 2.0;
  for (auto& p : out.parts) {
    double x = anchor_x + (p.x - anchor_x) * body_scale;
    double y = anchor_y + (p.y - anchor_y) * body_scale;
    const double cx = 1.0, cy = anchor_y;
    const double rx = cx + (x - cx) * std::cos(rot) - (y - cy) * std::sin(rot);
    const double ry = cy + (x - cx) * std::sin(rot) + (y - cy) * std::cos(rot);
    p.x = rx + dx + cfg.part_jitter_m * g();
    p.y = ry + dy + cfg.part_jitter_m * g();
    p.rx *= body_scale;
    p.ry *= body_scale;
    p.angle_deg += rot * 180.0 / std::numbers::pi + cfg.angle_jitter_deg * g();
  }
  return out;
}

ViewImages render_scene(const PoseTemplate& tpl, const SceneCondition& scene, View view,
                        const GeneratorConfig& cfg, std::uint64_t rng_seed) {
  const GrayImage heights = height_field(tpl, scene, cfg);
  GrayImage rgb = rgb_base(tpl, scene, cfg, heights);
  const double gain = cfg.illumination_gains[static_cast<std::size_t>(scene.illumination)];
  for (auto& p : rgb.pixels()) p *= gain;
  GrayImage depth = depth_base(scene, cfg, heights);

  const auto v = static_cast<std::uint64_t>(view);
  ViewImages out;
  out.rgb = quantize(add_noise(to_view(rgb, view, cfg), cfg.noise_sigma,
                               mix_seed(rng_seed, kRgbNoise + v)),
                     8);
  out.depth = quantize(add_noise(to_view(depth, view, cfg), cfg.depth_noise_sigma,
                                 mix_seed(rng_seed, kDepthNoise + v)),
                       16);
  return out;
}

GrayImage render_pressure(const PoseTemplate& tpl, const SceneCondition& scene,
                          const GeneratorConfig& cfg, std::uint64_t rng_seed) {
  const BedFrame frame(cfg);
  GrayImage load(cfg.image_width, cfg.image_height);
  for (int py = 0; py < cfg.image_height; ++py) {
    for (int px = 0; px < cfg.image_width; ++px) {
      const double x = frame.mx(px), y = frame.my(py);
      if (!BedFrame::on_bed(x, y)) continue;
      double pillow = 0.0;
      if (scene.has_pillow()) pillow = sample_part(kPillow, x, y).coverage;
      double v = 0.0;
      for (const auto& part : tpl.parts) {
        if (part.load <= 0.0) continue;
        const auto s = sample_part(part, x, y);
        if (s.coverage <= 0.0) continue;
        double l = part.load * s.coverage * (1.0 + part.load_slope * s.axial);
        if (pillow > 0.0 && on_pillow_region(part, x))
          l *= 1.0 - pillow * (1.0 - cfg.pillow_attenuation);
        v = std::max(v, l);
      }
      v += 0.12 * pillow;
      load.at(px, py) = 0.5 * v;
    }
  }

  // Sensels cover 4 × 4 pixel blocks; noise is per sensel.
  constexpr int kSensel = 4;
  const int gw = std::max(1, cfg.image_width / kSensel);
  const int gh = std::max(1, cfg.image_height / kSensel);
  GrayImage grid(gw, gh);
  Gaussian g(mix_seed(rng_seed, kPressureNoise));
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      double s = 0.0;
      int n = 0;
      for (int y = gy * kSensel; y < std::min(cfg.image_height, (gy + 1) * kSensel); ++y)
        for (int x = gx * kSensel; x < std::min(cfg.image_width, (gx + 1) * kSensel); ++x) {
          s += load.at(x, y);
          ++n;
        }
      const double mean = n > 0 ? s / n : 0.0;
      const double noise = cfg.pressure_noise_sigma * g();
      const double cx = frame.mx(gx * kSensel + kSensel / 2);
      const double cy = frame.my(gy * kSensel + kSensel / 2);
      grid.at(gx, gy) = BedFrame::on_bed(cx, cy) ? std::max(0.0, mean + noise) : 0.0;
    }
  }
  GrayImage out = imgproc::resize(grid, cfg.image_width, cfg.image_height);
  out.clamp();
  return quantize(out, 16);
}

std::map<ChannelKey, GrayImage> render_point(const GeneratorConfig& cfg, int actor, int session,
                                             const SceneCondition& scene, PoseLabel label) {
  const std::uint64_t obs = observation_key(actor, session);
  const std::uint64_t cond = condition_key(scene, label);
  const PoseTemplate tpl = jitter(pose_template(label), actor_scale(cfg, actor), cfg,
                                  mix_seed(cfg.seed, kGeometry * 100000 + obs, cond));
  const std::uint64_t noise_seed = mix_seed(cfg.seed, obs, cond);
  std::map<ChannelKey, GrayImage> out;
  for (View v : cfg.views) {
    auto imgs = render_scene(tpl, scene, v, cfg, noise_seed);
    out.emplace(ChannelKey{Modality::Rgb, v}, std::move(imgs.rgb));
    out.emplace(ChannelKey{Modality::Depth, v}, std::move(imgs.depth));
  }
  out.emplace(ChannelKey{Modality::Pressure, std::nullopt},
              render_pressure(tpl, scene, cfg, noise_seed));
  return out;
}

Dataset generate(const GeneratorConfig& cfg, std::size_t threads) {
  cfg.validate();
  std::vector<DataPoint> points;
  points.reserve(cfg.n_points());
  for (int a = 0; a < cfg.n_actors; ++a)
    for (int s = 0; s < cfg.sessions_per_actor; ++s)
      for (const auto& scene : all_scenes())
        for (PoseLabel l : all_labels()) {
          DataPoint p;
          p.label = l;
          p.scene = scene;
          p.actor_id = a;
          p.session_id = s;
          p.source_index = points.size();
          points.push_back(std::move(p));
        }
  const auto registration = cfg.registration();
  parallel_for(points.size(), threads, [&](std::size_t k) {
    auto& p = points[k];
    const auto images = render_point(cfg, p.actor_id, p.session_id, p.scene, p.label);
    p.features = features::extract_registered(images, registration, cfg.hog, cfg.gmom);
  });
  return Dataset(dataset_config(cfg), std::move(points), std::make_shared<SyntheticSource>(cfg));
}

std::string image_file_name(const DataPoint& p, const ChannelKey& key) {
  std::ostringstream name;
  name << 'a' << p.actor_id << "_s" << p.session_id << "_c" << p.scene.index() << "_l"
       << index_of(p.label) << '_' << modality_code(key.modality) << '_'
       << (key.view ? std::string(view_code(*key.view)) : std::string("none")) << ".pgm";
  return name.str();
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  const auto* source = dynamic_cast<const GeneratorSource*>(ds.source().get());
  if (!source) throw IoError("dataset has no image source to save from");
  const GeneratorConfig& cfg = source->config();

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json labels = json::array();
  for (auto l : all_labels()) labels.push_back(std::string(label_name(l)));
  json per_scene = json::object();
  json pts = json::array();
  std::map<std::string, std::size_t> scene_counts;
  for (const auto& p : ds.points()) {
    ++scene_counts[p.scene.name()];
    pts.push_back({{"actor", p.actor_id},
                   {"session", p.session_id},
                   {"scene", p.scene.index()},
                   {"label", index_of(p.label)}});
  }
  for (const auto& [name, n] : scene_counts) per_scene[name] = n;
  json registration = json::object();
  for (const auto& [view, h] : cfg.registration().view_to_top)
    registration[std::string(view_code(view))] = homography_json(h);

  const json manifest = {
      {"format", "mmtrust-dataset"},
      {"version", 1},
      {"seed", cfg.seed},
      {"generator", config_json(cfg)},
      {"labels", labels},
      {"counts", {{"points", ds.size()}, {"per_scene", per_scene}}},
      {"registration", registration},
      {"points", pts},
  };
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("failed writing manifest in " + dir.string());
  }

  for (const auto& p : ds.points()) {
    for (const auto& [key, img] : source->images(p)) {
      const int bits = key.modality == Modality::Rgb ? 8 : 16;
      write_pgm(dir / image_file_name(p, key), img, bits);
    }
  }
}

LoadedDataset load_dataset(const std::filesystem::path& dir, std::size_t threads) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw MissingFile("missing " + manifest_path.string());
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestMismatch(std::string("unreadable manifest: ") + e.what());
  }

  GeneratorConfig cfg;
  std::vector<DataPoint> points;
  try {
    if (manifest.at("format") != "mmtrust-dataset" || manifest.at("version") != 1)
      throw ManifestMismatch("unsupported dataset format");
    const auto& labels = manifest.at("labels");
    if (!labels.is_array() || labels.size() != kNumLabels)
      throw ManifestMismatch("manifest label list has the wrong size");
    for (std::size_t i = 0; i < kNumLabels; ++i)
      if (labels[i].get<std::string>() != label_name(label_from_index(i)))
        throw ManifestMismatch("manifest label list does not match the pose set");
    cfg = config_from_json(manifest.at("generator"));
    if (manifest.at("seed").get<std::uint64_t>() != cfg.seed)
      throw ManifestMismatch("manifest seed disagrees with generator config");
    for (const auto& jp : manifest.at("points")) {
      DataPoint p;
      p.actor_id = jp.at("actor").get<int>();
      p.session_id = jp.at("session").get<int>();
      p.scene = SceneCondition::from_index(jp.at("scene").get<std::size_t>());
      p.label = label_from_index(jp.at("label").get<std::size_t>());
      p.source_index = points.size();
      points.push_back(std::move(p));
    }
    if (manifest.at("counts").at("points").get<std::size_t>() != points.size())
      throw ManifestMismatch("manifest point count disagrees with its point list");
  } catch (const json::exception& e) {
    throw ManifestMismatch(std::string("malformed manifest: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw ManifestMismatch(std::string("manifest value out of range: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ManifestMismatch(std::string("invalid manifest value: ") + e.what());
  }
  if (points.empty()) throw ManifestMismatch("manifest lists no points");

  auto source = std::make_shared<DirectorySource>(dir, cfg);
  const auto registration = cfg.registration();
  // Surface a missing file before the (slower) extraction pass.
  for (const auto& p : points)
    for (const auto& key : make_channels({kAllModalities.begin(), kAllModalities.end()}, cfg.views)) {
      const auto name = image_file_name(p, key);
      if (!std::filesystem::exists(dir / name)) throw MissingFile("missing image " + name);
    }
  parallel_for(points.size(), threads, [&](std::size_t k) {
    points[k].features =
        features::extract_registered(source->images(points[k]), registration, cfg.hog, cfg.gmom);
  });
  return {Dataset(dataset_config(cfg), std::move(points), source), cfg};
}

}  // namespace mmtrust::synthdata
