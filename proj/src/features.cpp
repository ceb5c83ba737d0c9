#include "mmtrust/features.hpp"

#include <cmath>
#include <numbers>

namespace mmtrust::features {

void HogConfig::validate() const {
  if (n_orientations < 1 || cell_px < 1 || block_cells < 1 || block_stride_cells < 1)
    throw ConfigMismatch("HOG parameters must be positive");
  if (work_width % cell_px != 0 || work_height % cell_px != 0)
    throw ConfigMismatch("HOG working size is not divisible by the cell size");
  if (cells_x() < block_cells || cells_y() < block_cells)
    throw ConfigMismatch("HOG working size holds no complete block");
}

std::size_t HogConfig::descriptor_length() const {
  validate();
  return static_cast<std::size_t>(blocks_x()) * blocks_y() * block_cells * block_cells *
         n_orientations;
}

std::size_t GmomConfig::moments_per_tile() const {
  const auto n = static_cast<std::size_t>(max_order) + 1;
  return n * (n + 1) / 2;
}

FeatureVector hog(const GrayImage& img, const HogConfig& cfg) {
  cfg.validate();
  if (img.empty()) throw std::invalid_argument("HOG of an empty image");
  const GrayImage work = imgproc::resize(img, cfg.work_width, cfg.work_height);
  const int w = cfg.work_width, h = cfg.work_height;
  const int cx = cfg.cells_x(), cy = cfg.cells_y(), nb = cfg.n_orientations;

  std::vector<double> cells(static_cast<std::size_t>(cx) * cy * nb, 0.0);
  const double bin_width = 180.0 / nb;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double gx = work.at(x + 1, y) - work.at(x - 1, y);
      const double gy = work.at(x, y + 1) - work.at(x, y - 1);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      if (angle >= 180.0) angle -= 180.0;
      const int bin = std::min(nb - 1, static_cast<int>(angle / bin_width));
      const int cell = (y / cfg.cell_px) * cx + (x / cfg.cell_px);
      cells[static_cast<std::size_t>(cell) * nb + bin] += mag;
    }
  }

  FeatureVector out;
  out.modality = Modality::Rgb;
  out.values.reserve(cfg.descriptor_length());
  std::vector<double> block;
  for (int by = 0; by < cfg.blocks_y(); ++by) {
    for (int bx = 0; bx < cfg.blocks_x(); ++bx) {
      block.clear();
      for (int j = 0; j < cfg.block_cells; ++j) {
        for (int i = 0; i < cfg.block_cells; ++i) {
          const int c = (by * cfg.block_stride_cells + j) * cx + bx * cfg.block_stride_cells + i;
          const auto first = cells.begin() + static_cast<std::ptrdiff_t>(c) * nb;
          block.insert(block.end(), first, first + nb);
        }
      }
      double sq = 0.0;
      for (double v : block) sq += v * v;
      const double norm = std::sqrt(sq + kHogEpsilon * kHogEpsilon);
      for (double v : block) out.values.push_back(v / norm);
    }
  }
  return out;
}

FeatureVector gmom(const GrayImage& img, const GmomConfig& cfg) {
  if (cfg.tile_rows < 1 || cfg.tile_cols < 1 || cfg.max_order < 0)
    throw ConfigMismatch("gMOM tile grid and order must be positive");
  if (img.width() < cfg.tile_cols || img.height() < cfg.tile_rows)
    throw ImageTooSmall("image is smaller than the gMOM tile grid");

  const int base_w = img.width() / cfg.tile_cols;
  const int base_h = img.height() / cfg.tile_rows;
  const int order = cfg.max_order;

  FeatureVector out;
  out.modality = Modality::Depth;
  out.values.reserve(cfg.descriptor_length());
  std::vector<double> xp(static_cast<std::size_t>(order) + 1), yq(xp.size());
  std::vector<double> acc;
  for (int tr = 0; tr < cfg.tile_rows; ++tr) {
    const int y0 = tr * base_h;
    const int th = tr == cfg.tile_rows - 1 ? img.height() - y0 : base_h;
    for (int tc = 0; tc < cfg.tile_cols; ++tc) {
      const int x0 = tc * base_w;
      const int tw = tc == cfg.tile_cols - 1 ? img.width() - x0 : base_w;
      acc.assign(cfg.moments_per_tile(), 0.0);
      for (int y = 0; y < th; ++y) {
        const double ny = (y + 0.5) / th;
        yq[0] = 1.0;
        for (int q = 1; q <= order; ++q) yq[q] = yq[q - 1] * ny;
        for (int x = 0; x < tw; ++x) {
          const double v = img.at(x0 + x, y0 + y);
          if (v == 0.0) continue;
          const double nx = (x + 0.5) / tw;
          xp[0] = v;
          for (int p = 1; p <= order; ++p) xp[p] = xp[p - 1] * nx;
          std::size_t i = 0;
          for (int p = 0; p <= order; ++p)
            for (int q = 0; p + q <= order; ++q) acc[i++] += xp[p] * yq[q];
        }
      }
      out.values.insert(out.values.end(), acc.begin(), acc.end());
    }
  }
  return out;
}

std::size_t feature_length(Modality m, const HogConfig& hog_cfg, const GmomConfig& gmom_cfg) {
  return m == Modality::Rgb ? hog_cfg.descriptor_length() : gmom_cfg.descriptor_length();
}

std::map<ChannelKey, FeatureVector> extract_all(const std::map<ChannelKey, GrayImage>& images,
                                                const HogConfig& hog_cfg,
                                                const GmomConfig& gmom_cfg) {
  if (images.empty()) throw std::invalid_argument("no images to extract features from");
  std::map<ChannelKey, FeatureVector> out;
  for (const auto& [key, img] : images) {
    FeatureVector f = key.modality == Modality::Rgb ? hog(img, hog_cfg) : gmom(img, gmom_cfg);
    f.modality = key.modality;
    f.view = key.view;
    out.emplace(key, std::move(f));
  }
  return out;
}

std::map<ChannelKey, FeatureVector> extract_registered(
    const std::map<ChannelKey, GrayImage>& images, const imgproc::Registration& registration,
    const HogConfig& hog_cfg, const GmomConfig& gmom_cfg) {
  std::map<ChannelKey, GrayImage> registered;
  for (const auto& [key, img] : images) registered.emplace(key, registration.to_top(img, key.view));
  return extract_all(registered, hog_cfg, gmom_cfg);
}

}  // namespace mmtrust::features
