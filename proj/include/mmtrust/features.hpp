#pragma once

#include <map>

#include "mmtrust/core.hpp"
#include "mmtrust/image.hpp"
#include "mmtrust/imgproc.hpp"

namespace mmtrust::features {

struct HogConfig {
  int n_orientations = 4;
  int cell_px = 16;
  int block_cells = 2;
  int work_width = 320;
  int work_height = 320;
  int block_stride_cells = 1;

  int cells_x() const { return work_width / cell_px; }
  int cells_y() const { return work_height / cell_px; }
  int blocks_x() const { return (cells_x() - block_cells) / block_stride_cells + 1; }
  int blocks_y() const { return (cells_y() - block_cells) / block_stride_cells + 1; }
  // Throws ConfigMismatch when the working size is not a whole number of
  // cells or cannot hold one block.
  void validate() const;
  std::size_t descriptor_length() const;

  bool operator==(const HogConfig&) const = default;
};

struct GmomConfig {
  int tile_rows = 6;
  int tile_cols = 6;
  int max_order = 3;

  std::size_t moments_per_tile() const;
  std::size_t descriptor_length() const {
    return static_cast<std::size_t>(tile_rows) * tile_cols * moments_per_tile();
  }

  bool operator==(const GmomConfig&) const = default;
};

inline constexpr double kHogEpsilon = 1e-6;

// Histogram of oriented gradients on the image resized to the working size:
// centered differences (zero on the border row/column), unsigned orientation
// in [0°, 180°) hard-binned with magnitude votes, cells grouped into
// overlapping blocks that are L2-normalized as v / sqrt(|v|² + ε²).
FeatureVector hog(const GrayImage& img, const HogConfig& cfg = {});

// Raw spatial moments Σ xᵖ yᵍ I(x, y) per tile with tile-local pixel-center
// coordinates in [0,1]. Moments are ordered (p, q) lexicographically over
// p + q <= max_order; tiles are concatenated row-major. Remainder pixels
// fall into the last row/column of tiles. Throws ImageTooSmall when a tile
// would be empty.
FeatureVector gmom(const GrayImage& img, const GmomConfig& cfg = {});

// Feature length for a channel under the given configs.
std::size_t feature_length(Modality m, const HogConfig& hog_cfg, const GmomConfig& gmom_cfg);

// RGB → HOG, depth and pressure → gMOM; keys preserved.
std::map<ChannelKey, FeatureVector> extract_all(const std::map<ChannelKey, GrayImage>& images,
                                                const HogConfig& hog_cfg = {},
                                                const GmomConfig& gmom_cfg = {});

// Registers every view image into the top frame before extraction.
std::map<ChannelKey, FeatureVector> extract_registered(
    const std::map<ChannelKey, GrayImage>& images, const imgproc::Registration& registration,
    const HogConfig& hog_cfg = {}, const GmomConfig& gmom_cfg = {});

}  // namespace mmtrust::features
