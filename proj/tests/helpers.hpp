#pragma once

#include <algorithm>
#include <random>
#include <set>

#include "mmtrust/ccls.hpp"
#include "mmtrust/core.hpp"

namespace testutil {

using namespace mmtrust;

// Same integer pattern as pattern() in tests/oracles/gen_oracles.py.
inline GrayImage test_image(int w, int h) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = ((3 * x * x + 5 * y + x * y) % 23) / 22.0;
  return img;
}

inline GrayImage random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayImage img(w, h);
  for (auto& p : img.pixels()) p = u(rng);
  return img;
}

// Random point on the probability simplex of the given size.
inline Eigen::VectorXd random_simplex(Eigen::Index n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = e(rng);
  return v / v.sum();
}

// One L × M block whose columns are random probability vectors.
inline ccls::ScoreBlock random_block(Eigen::Index m, std::mt19937_64& rng, std::size_t k = 0) {
  ccls::ScoreBlock b;
  b.k = k;
  b.s.resize(static_cast<Eigen::Index>(kNumLabels), m);
  for (Eigen::Index c = 0; c < m; ++c) b.s.col(c) = random_simplex(b.s.rows(), rng);
  return b;
}

// Block whose column c puts `peak` on label winners[c] and spreads the rest.
inline ccls::ScoreBlock peaked_block(const std::vector<PoseLabel>& winners, double peak = 0.8) {
  ccls::ScoreBlock b;
  b.s = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(kNumLabels),
                                  static_cast<Eigen::Index>(winners.size()),
                                  (1.0 - peak) / (kNumLabels - 1));
  for (std::size_t c = 0; c < winners.size(); ++c)
    b.s(static_cast<Eigen::Index>(index_of(winners[c])), static_cast<Eigen::Index>(c)) = peak;
  return b;
}

struct GaussianSpec {
  std::vector<Modality> modalities{Modality::Rgb, Modality::Depth, Modality::Pressure};
  std::vector<View> views{View::Top};
  std::vector<SceneCondition> scenes{SceneCondition{}};
  std::size_t per_cell = 6;  // points per (scene, label)
  std::size_t dim = 4;
  std::map<Modality, std::size_t> dims;  // per-modality override of dim
  double separation = 4.0;   // distance scale between class means
  double noise = 1.0;
  // Extra noise multiplier for (modality, scene index); default 1.
  std::map<std::pair<Modality, std::size_t>, double> noise_scale;
  bool shuffle_labels = false;  // labels independent of the features
  std::uint64_t seed = 1;
};

// Dataset of Gaussian class clusters, one feature vector per channel.
inline Dataset gaussian_dataset(const GaussianSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  DatasetConfig cfg;
  cfg.modalities = spec.modalities;
  cfg.views = spec.views;
  auto dim_of = [&](Modality m) {
    const auto it = spec.dims.find(m);
    return it == spec.dims.end() ? spec.dim : it->second;
  };
  std::size_t max_dim = 0;
  for (const auto& ch : cfg.channels()) {
    cfg.feature_dims[ch] = dim_of(ch.modality);
    max_dim = std::max(max_dim, dim_of(ch.modality));
  }

  // Class means shared by all channels (truncated to each channel's size).
  std::vector<std::vector<double>> means(kNumLabels, std::vector<double>(max_dim));
  for (auto& m : means)
    for (auto& v : m) v = spec.separation * n01(rng);

  std::vector<DataPoint> points;
  for (const auto& scene : spec.scenes) {
    for (auto label : all_labels()) {
      for (std::size_t r = 0; r < spec.per_cell; ++r) {
        DataPoint p;
        p.label = label;
        p.scene = scene;
        p.session_id = static_cast<int>(r);
        p.source_index = points.size();
        for (const auto& ch : cfg.channels()) {
          double scale = spec.noise;
          const auto it = spec.noise_scale.find({ch.modality, scene.index()});
          if (it != spec.noise_scale.end()) scale *= it->second;
          FeatureVector f;
          f.modality = ch.modality;
          f.view = ch.view;
          f.values.resize(dim_of(ch.modality));
          for (std::size_t d = 0; d < f.values.size(); ++d)
            f.values[d] = means[index_of(label)][d] + scale * n01(rng);
          p.features.emplace(ch, std::move(f));
        }
        points.push_back(std::move(p));
      }
    }
  }
  if (spec.shuffle_labels) {
    std::vector<PoseLabel> labels;
    for (const auto& p : points) labels.push_back(p.label);
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng() % i]);
    for (std::size_t i = 0; i < points.size(); ++i) points[i].label = labels[i];
  }
  return Dataset(cfg, std::move(points));
}

}  // namespace testutil
