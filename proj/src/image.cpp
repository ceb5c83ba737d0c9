#include "mmtrust/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>

#include "mmtrust/error.hpp"

namespace mmtrust {

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("pixel buffer does not match image dimensions");
}

double GrayImage::mean() const {
  if (pixels_.empty()) return 0.0;
  return std::accumulate(pixels_.begin(), pixels_.end(), 0.0) / static_cast<double>(pixels_.size());
}

void GrayImage::clamp() {
  for (auto& p : pixels_) p = std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.0;
}

GrayImage quantize(const GrayImage& img, int bits) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  const double maxval = bits == 8 ? 255.0 : 65535.0;
  GrayImage out = img;
  for (auto& p : out.pixels()) {
    const double v = std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.0;
    p = std::round(v * maxval) / maxval;
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img, int bits) {
  if (bits != 8 && bits != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const int maxval = bits == 8 ? 255 : 65535;
  out << "P5\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
  std::string buf;
  buf.reserve(img.size() * (bits / 8));
  for (double p : img.pixels()) {
    const double v = std::isfinite(p) ? std::clamp(p, 0.0, 1.0) : 0.0;
    const auto q = static_cast<std::uint32_t>(std::lround(v * maxval));
    if (bits == 16) buf.push_back(static_cast<char>((q >> 8) & 0xff));
    buf.push_back(static_cast<char>(q & 0xff));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path.string());
  if (next_token(in) != "P5") throw ImageFormatError(path.string() + ": not a binary PGM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw ImageFormatError(path.string() + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw ImageFormatError(path.string() + ": invalid PGM header values");
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::string buf(static_cast<std::size_t>(w) * h * bytes_per, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw ImageFormatError(path.string() + ": truncated pixel data");
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < px.size(); ++i) {
    std::uint32_t q;
    if (bytes_per == 2) {
      q = (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[2 * i])) << 8) |
          static_cast<unsigned char>(buf[2 * i + 1]);
    } else {
      q = static_cast<unsigned char>(buf[i]);
    }
    px[i] = std::min(1.0, static_cast<double>(q) / maxval);
  }
  return GrayImage(w, h, std::move(px));
}

}  // namespace mmtrust
