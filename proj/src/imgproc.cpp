#include "mmtrust/imgproc.hpp"

#include <algorithm>
#include <cmath>

namespace mmtrust::imgproc {

Homography::Homography(const Eigen::Matrix3d& h) {
  if (!h.allFinite()) throw SingularHomography("homography has non-finite entries");
  if (std::abs(h(2, 2)) < 1e-15) throw SingularHomography("homography h[2][2] is zero");
  h_ = h / h(2, 2);
  if (std::abs(h_.determinant()) <= 1e-12) throw SingularHomography("homography is singular");
}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  h(0, 2) = dx;
  h(1, 2) = dy;
  return Homography(h);
}

Homography Homography::inverse() const { return Homography(h_.inverse()); }

Homography Homography::then(const Homography& next) const { return Homography(next.h_ * h_); }

Eigen::Vector2d Homography::apply(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d q = h_ * p.homogeneous();
  return q.hnormalized();
}

namespace {

// Bilinear sample with zero outside the image.
double sample_zero(const GrayImage& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  auto px = [&](int xi, int yi) {
    if (xi < 0 || yi < 0 || xi >= img.width() || yi >= img.height()) return 0.0;
    return img.at(xi, yi);
  };
  return (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) +
         ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
}

}  // namespace

GrayImage warp(const GrayImage& img, const Homography& h, int out_w, int out_h) {
  if (img.empty()) throw std::invalid_argument("warp of an empty image");
  const Eigen::Matrix3d inv = h.matrix().inverse();
  GrayImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Eigen::Vector3d s = inv * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(s.z()) < 1e-12) continue;
      const double sx = s.x() / s.z(), sy = s.y() / s.z();
      // Anything further than one pixel outside has no in-bounds neighbor.
      if (sx <= -1.0 || sy <= -1.0 || sx >= img.width() || sy >= img.height()) continue;
      out.at(x, y) = sample_zero(img, sx, sy);
    }
  }
  out.clamp();
  return out;
}

GrayImage resize(const GrayImage& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize target must be at least 1x1");
  if (img.empty()) throw std::invalid_argument("resize of an empty image");
  if (out_w == img.width() && out_h == img.height()) return img;
  const double sx = static_cast<double>(img.width()) / out_w;
  const double sy = static_cast<double>(img.height()) / out_h;
  const int max_x = img.width() - 1, max_y = img.height() - 1;
  GrayImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(max_y));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, max_y);
    const double ay = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(max_x));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, max_x);
      const double ax = fx - x0;
      out.at(x, y) = (1 - ay) * ((1 - ax) * img.at(x0, y0) + ax * img.at(x1, y0)) +
                     ay * ((1 - ax) * img.at(x0, y1) + ax * img.at(x1, y1));
    }
  }
  out.clamp();
  return out;
}

GrayImage normalize_range(const GrayImage& img) {
  if (img.empty()) return img;
  const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
  const double min = *lo, range = *hi - *lo;
  GrayImage out(img.width(), img.height());
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < img.size(); ++i) out.pixels()[i] = (img.pixels()[i] - min) / range;
  out.clamp();
  return out;
}

GrayImage Registration::to_top(const GrayImage& img, std::optional<View> view) const {
  if (!view || *view == View::Top) return img;
  auto it = view_to_top.find(*view);
  if (it == view_to_top.end()) return img;
  return warp(img, it->second, img.width(), img.height());
}

}  // namespace mmtrust::imgproc
