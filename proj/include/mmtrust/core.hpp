#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmtrust/error.hpp"
#include "mmtrust/image.hpp"

namespace mmtrust {

// ---------------------------------------------------------------------------
// Labels

inline constexpr std::size_t kNumLabels = 11;

// Index order is the listing order of the pose set; Background is 0.
enum class PoseLabel : std::uint8_t {
  Background = 0,
  SoldierU,
  SoldierD,
  FallerR,
  FallerL,
  LogR,
  LogL,
  YearnerR,
  YearnerL,
  FetalR,
  FetalL,
};

constexpr std::size_t index_of(PoseLabel l) { return static_cast<std::size_t>(l); }
PoseLabel label_from_index(std::size_t index);
std::string_view label_name(PoseLabel l);
PoseLabel label_from_name(std::string_view name);
const std::array<PoseLabel, kNumLabels>& all_labels();

// ---------------------------------------------------------------------------
// Scenes

enum class Illumination : std::uint8_t { Bright = 0, Medium, Dark };
enum class Occlusion : std::uint8_t { Clear = 0, Blanket, Pillow, BlanketPillow };

inline constexpr std::size_t kNumScenes = 12;

struct SceneCondition {
  Illumination illumination = Illumination::Bright;
  Occlusion occlusion = Occlusion::Clear;

  // Illumination-major, occlusion-minor: 0 is bright/clear, 11 is dark/blanket+pillow.
  std::size_t index() const {
    return static_cast<std::size_t>(illumination) * 4 + static_cast<std::size_t>(occlusion);
  }
  static SceneCondition from_index(std::size_t index);
  static SceneCondition from_name(std::string_view name);
  // Lowercase "illumination_occlusion", e.g. "dark_blanketpillow".
  std::string name() const;

  bool has_blanket() const {
    return occlusion == Occlusion::Blanket || occlusion == Occlusion::BlanketPillow;
  }
  bool has_pillow() const {
    return occlusion == Occlusion::Pillow || occlusion == Occlusion::BlanketPillow;
  }

  friend auto operator<=>(const SceneCondition& a, const SceneCondition& b) {
    return a.index() <=> b.index();
  }
  friend bool operator==(const SceneCondition&, const SceneCondition&) = default;
};

const std::array<SceneCondition, kNumScenes>& all_scenes();

// ---------------------------------------------------------------------------
// Modalities and views

enum class Modality : std::uint8_t { Rgb = 0, Depth, Pressure };
enum class View : std::uint8_t { Top = 0, Side, Head };

inline constexpr std::array<Modality, 3> kAllModalities{Modality::Rgb, Modality::Depth,
                                                        Modality::Pressure};
inline constexpr std::array<View, 3> kAllViews{View::Top, View::Side, View::Head};

// "R", "D", "P"
std::string_view modality_code(Modality m);
Modality modality_from_code(std::string_view code);
// "t", "s", "h"
std::string_view view_code(View v);
View view_from_code(std::string_view code);

constexpr bool is_viewless(Modality m) { return m == Modality::Pressure; }

// One sensor stream: a modality seen from a view (pressure has no view).
// Ordered modality-major, view-minor.
struct ChannelKey {
  Modality modality = Modality::Rgb;
  std::optional<View> view;

  std::string name() const;  // "R-t", "D-s", "P"
  static ChannelKey parse(std::string_view name);

  friend auto operator<=>(const ChannelKey&, const ChannelKey&) = default;
};

// Channels for the given modality/view sets, in canonical order.
std::vector<ChannelKey> make_channels(const std::vector<Modality>& modalities,
                                      const std::vector<View>& views);

// ---------------------------------------------------------------------------
// Features and datasets

struct FeatureVector {
  std::vector<double> values;
  Modality modality = Modality::Rgb;
  std::optional<View> view;

  ChannelKey key() const { return {modality, view}; }
  std::size_t size() const { return values.size(); }
};

struct DataPoint {
  std::map<ChannelKey, FeatureVector> features;
  PoseLabel label = PoseLabel::Background;
  SceneCondition scene;
  int actor_id = 0;
  int session_id = 0;
  // Position of the point in the dataset it was originally created in; lets
  // an ImageSource find raw observations after subsetting.
  std::size_t source_index = 0;
};

struct DatasetConfig {
  std::vector<Modality> modalities;  // canonical order
  std::vector<View> views;           // canonical order
  std::map<ChannelKey, std::size_t> feature_dims;

  std::vector<ChannelKey> channels() const { return make_channels(modalities, views); }
  bool operator==(const DatasetConfig&) const = default;
};

// Supplies the raw images a data point's features were extracted from.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::map<ChannelKey, GrayImage> images(const DataPoint& point) const = 0;
};

class Dataset {
 public:
  // Throws InvalidDataset if `points` is empty or a point does not match `config`.
  Dataset(DatasetConfig config, std::vector<DataPoint> points,
          std::shared_ptr<const ImageSource> source = nullptr);

  const DatasetConfig& config() const { return config_; }
  const std::vector<DataPoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  const DataPoint& operator[](std::size_t k) const { return points_[k]; }
  const std::shared_ptr<const ImageSource>& source() const { return source_; }

  Dataset subset(const std::vector<std::size_t>& indices) const;

  // Keeps only the channels of the given modalities/views. Throws
  // InvalidDataset when a requested channel is absent.
  Dataset select(const std::vector<Modality>& modalities, const std::vector<View>& views) const;

  std::vector<PoseLabel> labels() const;

 private:
  DatasetConfig config_;
  std::vector<DataPoint> points_;
  std::shared_ptr<const ImageSource> source_;
};

// Groups points by scene. Scenes without points are absent from the map.
std::map<SceneCondition, Dataset> partition_by_scene(const Dataset& ds);

// Test-fold membership for label-stratified k-fold CV: result[f] lists the
// indices of the points held out in fold f.
std::vector<std::vector<std::size_t>> stratified_fold_indices(const std::vector<PoseLabel>& labels,
                                                              std::size_t n_folds,
                                                              std::uint64_t seed);

struct Fold {
  Dataset train;
  Dataset test;
};

std::vector<Fold> stratified_folds(const Dataset& ds, std::size_t n_folds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Utilities

// Mixes a seed with stream identifiers (SplitMix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Results must be written to per-index slots by the caller.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace mmtrust
