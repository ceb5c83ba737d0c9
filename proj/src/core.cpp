#include "mmtrust/core.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <random>
#include <set>
#include <thread>

namespace mmtrust {

namespace {

constexpr std::array<std::string_view, kNumLabels> kLabelNames{
    "Background", "SoldierU", "SoldierD", "FallerR", "FallerL", "LogR",
    "LogL",       "YearnerR", "YearnerL", "FetalR",  "FetalL",
};

constexpr std::array<std::string_view, 3> kIlluminationNames{"bright", "medium", "dark"};
constexpr std::array<std::string_view, 4> kOcclusionNames{"clear", "blanket", "pillow",
                                                          "blanketpillow"};

}  // namespace

PoseLabel label_from_index(std::size_t index) {
  if (index >= kNumLabels) throw std::out_of_range("pose label index out of range");
  return static_cast<PoseLabel>(index);
}

std::string_view label_name(PoseLabel l) { return kLabelNames.at(index_of(l)); }

PoseLabel label_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumLabels; ++i)
    if (kLabelNames[i] == name) return static_cast<PoseLabel>(i);
  throw std::invalid_argument("unknown pose label: " + std::string(name));
}

const std::array<PoseLabel, kNumLabels>& all_labels() {
  static const auto labels = [] {
    std::array<PoseLabel, kNumLabels> out{};
    for (std::size_t i = 0; i < kNumLabels; ++i) out[i] = static_cast<PoseLabel>(i);
    return out;
  }();
  return labels;
}

SceneCondition SceneCondition::from_index(std::size_t index) {
  if (index >= kNumScenes) throw std::out_of_range("scene index out of range");
  return {static_cast<Illumination>(index / 4), static_cast<Occlusion>(index % 4)};
}

SceneCondition SceneCondition::from_name(std::string_view name) {
  for (const auto& s : all_scenes())
    if (s.name() == name) return s;
  throw std::invalid_argument("unknown scene: " + std::string(name));
}

std::string SceneCondition::name() const {
  std::string out(kIlluminationNames[static_cast<std::size_t>(illumination)]);
  out += '_';
  out += kOcclusionNames[static_cast<std::size_t>(occlusion)];
  return out;
}

const std::array<SceneCondition, kNumScenes>& all_scenes() {
  static const auto scenes = [] {
    std::array<SceneCondition, kNumScenes> out{};
    for (std::size_t i = 0; i < kNumScenes; ++i) out[i] = SceneCondition::from_index(i);
    return out;
  }();
  return scenes;
}

std::string_view modality_code(Modality m) {
  switch (m) {
    case Modality::Rgb: return "R";
    case Modality::Depth: return "D";
    case Modality::Pressure: return "P";
  }
  return "?";
}

Modality modality_from_code(std::string_view code) {
  if (code == "R") return Modality::Rgb;
  if (code == "D") return Modality::Depth;
  if (code == "P") return Modality::Pressure;
  throw std::invalid_argument("unknown modality: " + std::string(code));
}

std::string_view view_code(View v) {
  switch (v) {
    case View::Top: return "t";
    case View::Side: return "s";
    case View::Head: return "h";
  }
  return "?";
}

View view_from_code(std::string_view code) {
  if (code == "t") return View::Top;
  if (code == "s") return View::Side;
  if (code == "h") return View::Head;
  throw std::invalid_argument("unknown view: " + std::string(code));
}

std::string ChannelKey::name() const {
  std::string out(modality_code(modality));
  if (view) {
    out += '-';
    out += view_code(*view);
  }
  return out;
}

ChannelKey ChannelKey::parse(std::string_view name) {
  const auto dash = name.find('-');
  ChannelKey key{modality_from_code(name.substr(0, dash)), std::nullopt};
  if (dash != std::string_view::npos) key.view = view_from_code(name.substr(dash + 1));
  if (is_viewless(key.modality) == key.view.has_value())
    throw std::invalid_argument("invalid channel: " + std::string(name));
  return key;
}

std::vector<ChannelKey> make_channels(const std::vector<Modality>& modalities,
                                      const std::vector<View>& views) {
  std::vector<ChannelKey> out;
  for (Modality m : kAllModalities) {
    if (std::find(modalities.begin(), modalities.end(), m) == modalities.end()) continue;
    if (is_viewless(m)) {
      out.push_back({m, std::nullopt});
      continue;
    }
    for (View v : kAllViews)
      if (std::find(views.begin(), views.end(), v) != views.end()) out.push_back({m, v});
  }
  return out;
}

// ---------------------------------------------------------------------------

Dataset::Dataset(DatasetConfig config, std::vector<DataPoint> points,
                 std::shared_ptr<const ImageSource> source)
    : config_(std::move(config)), points_(std::move(points)), source_(std::move(source)) {
  if (points_.empty()) throw InvalidDataset("dataset must contain at least one point");
  const auto channels = config_.channels();
  if (channels.empty()) throw InvalidDataset("dataset configuration has no channels");
  for (const auto& ch : channels)
    if (!config_.feature_dims.contains(ch))
      throw InvalidDataset("no feature dimension declared for channel " + ch.name());
  for (const auto& p : points_) {
    if (p.features.size() != channels.size())
      throw InvalidDataset("data point channel set does not match configuration");
    for (const auto& ch : channels) {
      auto it = p.features.find(ch);
      if (it == p.features.end()) throw InvalidDataset("data point lacks channel " + ch.name());
      if (it->second.size() != config_.feature_dims.at(ch))
        throw InvalidDataset("feature length mismatch on channel " + ch.name());
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  std::vector<DataPoint> pts;
  pts.reserve(indices.size());
  for (auto i : indices) pts.push_back(points_.at(i));
  return Dataset(config_, std::move(pts), source_);
}

Dataset Dataset::select(const std::vector<Modality>& modalities,
                        const std::vector<View>& views) const {
  DatasetConfig cfg;
  for (Modality m : kAllModalities)
    if (std::find(modalities.begin(), modalities.end(), m) != modalities.end())
      cfg.modalities.push_back(m);
  for (View v : kAllViews)
    if (std::find(views.begin(), views.end(), v) != views.end()) cfg.views.push_back(v);
  const auto channels = cfg.channels();
  for (const auto& ch : channels) {
    auto it = config_.feature_dims.find(ch);
    if (it == config_.feature_dims.end())
      throw InvalidDataset("dataset does not provide channel " + ch.name());
    cfg.feature_dims[ch] = it->second;
  }
  std::vector<DataPoint> pts;
  pts.reserve(points_.size());
  for (const auto& p : points_) {
    DataPoint q = p;
    q.features.clear();
    for (const auto& ch : channels) q.features.emplace(ch, p.features.at(ch));
    pts.push_back(std::move(q));
  }
  return Dataset(std::move(cfg), std::move(pts), source_);
}

std::vector<PoseLabel> Dataset::labels() const {
  std::vector<PoseLabel> out;
  out.reserve(points_.size());
  for (const auto& p : points_) out.push_back(p.label);
  return out;
}

std::map<SceneCondition, Dataset> partition_by_scene(const Dataset& ds) {
  std::map<SceneCondition, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < ds.size(); ++k) groups[ds[k].scene].push_back(k);
  std::map<SceneCondition, Dataset> out;
  for (const auto& [scene, idx] : groups) out.emplace(scene, ds.subset(idx));
  return out;
}

std::vector<std::vector<std::size_t>> stratified_fold_indices(const std::vector<PoseLabel>& labels,
                                                              std::size_t n_folds,
                                                              std::uint64_t seed) {
  if (n_folds < 2) throw std::invalid_argument("n_folds must be at least 2");
  std::array<std::vector<std::size_t>, kNumLabels> by_label;
  for (std::size_t k = 0; k < labels.size(); ++k) by_label[index_of(labels[k])].push_back(k);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!by_label[l].empty() && by_label[l].size() < n_folds)
      throw InsufficientSamples("label " + std::string(label_name(label_from_index(l))) +
                                " has fewer points than folds");
  }

  std::vector<std::vector<std::size_t>> folds(n_folds);
  // A running counter across labels keeps every fold size within one of the
  // others while each label is dealt round-robin.
  std::size_t next = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    auto& idx = by_label[l];
    std::mt19937_64 rng(mix_seed(seed, l));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    for (auto k : idx) folds[next++ % n_folds].push_back(k);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<Fold> stratified_folds(const Dataset& ds, std::size_t n_folds, std::uint64_t seed) {
  const auto test_sets = stratified_fold_indices(ds.labels(), n_folds, seed);
  std::vector<Fold> out;
  out.reserve(n_folds);
  for (const auto& test : test_sets) {
    std::vector<char> held(ds.size(), 0);
    for (auto k : test) held[k] = 1;
    std::vector<std::size_t> train;
    for (std::size_t k = 0; k < ds.size(); ++k)
      if (!held[k]) train.push_back(k);
    out.push_back({ds.subset(train), ds.subset(test)});
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mmtrust
