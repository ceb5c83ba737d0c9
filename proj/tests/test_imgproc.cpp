#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mmtrust/imgproc.hpp"
#include "oracle_values.hpp"

using namespace mmtrust;
using imgproc::Homography;

TEST_SUITE("imgproc") {

TEST_CASE("resize matches OpenCV bilinear on a fixed pattern") {
  const auto out = imgproc::resize(testutil::test_image(5, 4), 8, 3);
  REQUIRE(out.size() == std::size(oracle::kResize5x4To8x3));
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.pixels()[i] == doctest::Approx(oracle::kResize5x4To8x3[i]).epsilon(1e-6));
}

TEST_CASE("resize keeps constants, corner values and the mean of noise") {
  const auto c = imgproc::resize(GrayImage(7, 5, 0.5), 13, 2);
  for (double v : c.pixels()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  GrayImage checker(2, 2, std::vector<double>{0.0, 1.0, 1.0, 0.0});
  const auto up = imgproc::resize(checker, 4, 4);
  CHECK(up.at(0, 0) == 0.0);
  CHECK(up.at(3, 0) == 1.0);
  CHECK(up.at(0, 3) == 1.0);
  CHECK(up.at(3, 3) == 0.0);

  const auto noise = testutil::random_image(200, 160, 5);
  const auto down = imgproc::resize(noise, 50, 40);
  CHECK(std::abs(down.mean() - noise.mean()) < 0.02);
}

TEST_CASE("warp matches scipy map_coordinates with zero fill") {
  Eigen::Matrix3d h;
  h << 0.9, 0.1, 0.5, -0.05, 1.1, -0.3, 0.01, 0.02, 1.0;
  const auto out = imgproc::warp(testutil::test_image(6, 5), Homography(h), 6, 5);
  REQUIRE(out.size() == std::size(oracle::kWarp6x5));
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.pixels()[i] == doctest::Approx(oracle::kWarp6x5[i]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("identity warp and translation") {
  const auto img = testutil::random_image(9, 7, 2);
  CHECK(imgproc::warp(img, Homography::identity(), 9, 7) == img);

  GrayImage dot(5, 3, 0.0);
  dot.at(1, 1) = 1.0;
  const auto moved = imgproc::warp(dot, Homography::translation(1, 0), 5, 3);
  CHECK(moved.at(2, 1) == doctest::Approx(1.0));
  CHECK(moved.at(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("warp round trip stays close away from the borders") {
  // Smooth image so bilinear resampling twice loses little.
  GrayImage img(64, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      img.at(x, y) = 0.5 + 0.4 * std::sin(x * 0.15) * std::cos(y * 0.2);
  Eigen::Matrix3d m;
  m << 1.05, 0.04, -2.0, -0.03, 0.97, 1.5, 0.0005, -0.0004, 1.0;
  const Homography h(m);
  const auto back = imgproc::warp(imgproc::warp(img, h, 64, 48), h.inverse(), 64, 48);
  double worst = 0.0;
  for (int y = 6; y < 42; ++y)
    for (int x = 6; x < 58; ++x) worst = std::max(worst, std::abs(back.at(x, y) - img.at(x, y)));
  CHECK(worst < 0.05);
}

TEST_CASE("homography invariants") {
  Eigen::Matrix3d m;
  m << 2.0, 0.0, 1.0, 0.0, 2.0, 3.0, 0.0, 0.0, 2.0;
  const Homography h(m);
  CHECK(h.matrix()(2, 2) == 1.0);
  const auto p = h.apply({1.0, 2.0});
  CHECK(p.x() == doctest::Approx(1.5));
  CHECK(p.y() == doctest::Approx(3.5));
  const auto q = h.inverse().apply(p);
  CHECK(q.x() == doctest::Approx(1.0));
  CHECK(h.then(h.inverse()).matrix().isIdentity(1e-12));
  CHECK_THROWS_AS(Homography(Eigen::Matrix3d::Zero()), SingularHomography);
  Eigen::Matrix3d rank2 = Eigen::Matrix3d::Identity();
  rank2(1, 1) = 0.0;
  CHECK_THROWS_AS(Homography{rank2}, SingularHomography);
}

TEST_CASE("resize and warp stay inside [0,1]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto img = testutil::random_image(17, 11, seed);
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 1) = 0.1 * static_cast<double>(seed % 5);
    m(2, 0) = 0.001 * static_cast<double>(seed);
    for (const auto& out : {imgproc::resize(img, 23, 9), imgproc::warp(img, Homography(m), 15, 15)})
      for (double v : out.pixels()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
  }
}

TEST_CASE("normalize_range") {
  const auto out = imgproc::normalize_range(GrayImage(2, 1, std::vector<double>{2.0, 4.0}));
  CHECK(out.at(0, 0) == 0.0);
  CHECK(out.at(1, 0) == 1.0);
  const auto flat = imgproc::normalize_range(GrayImage(3, 3, 0.7));
  for (double v : flat.pixels()) CHECK(v == 0.0);
  GrayImage unit(2, 2, std::vector<double>{0.0, 0.3, 0.6, 1.0});
  CHECK(imgproc::normalize_range(unit) == unit);
}

TEST_CASE("registration maps views to the top frame") {
  imgproc::Registration reg;
  reg.view_to_top.emplace(View::Side, Homography::translation(-1, 0));
  GrayImage dot(5, 3, 0.0);
  dot.at(2, 1) = 1.0;
  CHECK(reg.to_top(dot, View::Side).at(1, 1) == doctest::Approx(1.0));
  CHECK(reg.to_top(dot, View::Head) == dot);
  CHECK(reg.to_top(dot, std::nullopt) == dot);
}

TEST_CASE("PGM round trip at 8 and 16 bits") {
  const auto dir = std::filesystem::temp_directory_path() / "mmtrust_pgm_test";
  std::filesystem::create_directories(dir);
  const auto img = testutil::random_image(13, 7, 9);
  for (int bits : {8, 16}) {
    const auto q = quantize(img, bits);
    const auto path = dir / ("img" + std::to_string(bits) + ".pgm");
    write_pgm(path, q, bits);
    CHECK(read_pgm(path) == q);
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(std::abs(q.pixels()[i] - img.pixels()[i]) <= 0.5 / ((1 << bits) - 1) + 1e-15);
  }
  CHECK_THROWS_AS(read_pgm(dir / "absent.pgm"), MissingFile);
  {
    std::ofstream bad(dir / "bad.pgm", std::ios::binary);
    bad << "P2\n1 1\n255\n0\n";
  }
  CHECK_THROWS_AS(read_pgm(dir / "bad.pgm"), ImageFormatError);
  std::filesystem::remove_all(dir);
}

}
