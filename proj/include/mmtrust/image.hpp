#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mmtrust {

// Row-major grayscale image with intensities in [0,1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);
  GrayImage(int width, int height, std::vector<double> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }
  std::size_t size() const { return pixels_.size(); }

  double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  const std::vector<double>& pixels() const { return pixels_; }
  std::vector<double>& pixels() { return pixels_; }

  double mean() const;

  // Clamps every pixel into [0,1] and replaces non-finite values by 0.
  void clamp();

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

// Rounds every pixel to the nearest level representable with `bits` bits
// (8 or 16), which makes a later PGM round trip exact.
GrayImage quantize(const GrayImage& img, int bits);

// Binary PGM (P5). 8-bit images use maxval 255, 16-bit images use 65535
// with big-endian samples.
void write_pgm(const std::filesystem::path& path, const GrayImage& img, int bits);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace mmtrust
