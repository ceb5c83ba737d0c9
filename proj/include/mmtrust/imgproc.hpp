#pragma once

#include <Eigen/Dense>
#include <map>

#include "mmtrust/core.hpp"
#include "mmtrust/image.hpp"

namespace mmtrust::imgproc {

// Projective map from input pixel coordinates to output pixel coordinates.
// Pixel centers sit on integer coordinates.
class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity()) {}
  // Normalizes h(2,2) to 1. Throws SingularHomography when |det| <= 1e-12
  // or h(2,2) is zero.
  explicit Homography(const Eigen::Matrix3d& h);

  static Homography identity() { return Homography(); }
  static Homography translation(double dx, double dy);

  const Eigen::Matrix3d& matrix() const { return h_; }
  Homography inverse() const;
  Homography then(const Homography& next) const;  // next ∘ this

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;

 private:
  Eigen::Matrix3d h_;
};

// Output pixel (x, y) samples the input at h⁻¹(x, y) with bilinear
// interpolation; samples outside the input contribute 0.
GrayImage warp(const GrayImage& img, const Homography& h, int out_w, int out_h);

// Bilinear resampling with half-pixel centers and edge clamping.
GrayImage resize(const GrayImage& img, int out_w, int out_h);

// Affine rescale so min → 0 and max → 1. A flat image maps to zeros.
GrayImage normalize_range(const GrayImage& img);

// Homographies taking each camera view into the top-view frame.
struct Registration {
  std::map<View, Homography> view_to_top;

  // Warps `img` from `view` into the top frame with the same dimensions.
  // Views without an entry (and the top view) pass through unchanged.
  GrayImage to_top(const GrayImage& img, std::optional<View> view) const;
};

}  // namespace mmtrust::imgproc
