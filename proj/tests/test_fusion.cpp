#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mmtrust/fusion.hpp"

using namespace mmtrust;
using namespace mmtrust::fusion;

namespace {

const std::vector<Modality> kRdp{Modality::Rgb, Modality::Depth, Modality::Pressure};

TrustVector trust(std::vector<double> w, std::vector<Modality> mods = kRdp) {
  TrustVector t;
  t.modalities = std::move(mods);
  t.w = std::move(w);
  return t;
}

ProbabilityVector to_prob(const Eigen::VectorXd& v) {
  ProbabilityVector p{};
  for (std::size_t l = 0; l < kNumLabels; ++l) p[l] = v(static_cast<Eigen::Index>(l));
  return p;
}

ProbabilityVector peaked(PoseLabel l, double peak) {
  ProbabilityVector p;
  p.fill((1.0 - peak) / (kNumLabels - 1));
  p[index_of(l)] = peak;
  return p;
}

std::size_t argmax(const ProbabilityVector& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

const ChannelKey kRt{Modality::Rgb, View::Top};
const ChannelKey kRs{Modality::Rgb, View::Side};
const ChannelKey kDt{Modality::Depth, View::Top};
const ChannelKey kDs{Modality::Depth, View::Side};
const ChannelKey kP{Modality::Pressure, std::nullopt};

std::map<ChannelKey, ProbabilityVector> random_scores(std::mt19937_64& rng) {
  std::map<ChannelKey, ProbabilityVector> s;
  for (const auto& k : {kRt, kRs, kDt, kDs, kP}) s[k] = to_prob(testutil::random_simplex(kNumLabels, rng));
  return s;
}

features::HogConfig small_hog() {
  features::HogConfig h;
  h.cell_px = 4;
  h.work_width = 16;
  h.work_height = 12;
  return h;
}

features::GmomConfig small_gmom() {
  features::GmomConfig g;
  g.tile_rows = 2;
  g.tile_cols = 2;
  g.max_order = 1;
  return g;
}

// Gaussian dataset whose feature sizes match small_hog()/small_gmom().
Dataset model_dataset(std::vector<SceneCondition> scenes) {
  testutil::GaussianSpec spec;
  spec.views = {View::Top, View::Side};
  spec.scenes = std::move(scenes);
  spec.per_cell = 4;
  spec.noise = 2.0;
  spec.dims = {{Modality::Rgb, features::feature_length(Modality::Rgb, small_hog(), small_gmom())},
               {Modality::Depth, features::feature_length(Modality::Depth, small_hog(), small_gmom())},
               {Modality::Pressure,
                features::feature_length(Modality::Pressure, small_hog(), small_gmom())}};
  return testutil::gaussian_dataset(spec);
}

TrustedModel small_model(classifiers::ClassifierKind kind) {
  const auto ds = model_dataset({SceneCondition{}, SceneCondition::from_index(11)});
  return train(ds, kind, 5, small_hog(), small_gmom(), {}, 1, 3);
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mmtrust_test_fusion";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("adjust_missing: worked example with P missing") {
  const auto t = adjust_missing(trust({0.5, 0.3, 0.2}), {Modality::Pressure});
  CHECK(t.w[0] == doctest::Approx(0.65 / 0.98).epsilon(1e-12));
  CHECK(t.w[0] == doctest::Approx(0.6633).epsilon(1e-4));
  CHECK(t.w[1] == doctest::Approx(0.3367).epsilon(1e-4));
  CHECK(t.w[2] == 0.0);
}

TEST_CASE("adjust_missing: uniform weights with D missing") {
  const auto t = adjust_missing(trust({1.0 / 3, 1.0 / 3, 1.0 / 3}), {Modality::Depth});
  CHECK(t.w[0] == doctest::Approx(0.5));
  CHECK(t.w[1] == 0.0);
  CHECK(t.w[2] == doctest::Approx(0.5));
}

TEST_CASE("adjust_missing: single survivor gets everything") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto w = testutil::random_simplex(3, rng);
    const auto t = adjust_missing(trust({w(0), w(1), w(2)}), {Modality::Depth, Modality::Pressure});
    CHECK(t.w == std::vector<double>{1.0, 0.0, 0.0});
  }
  CHECK(adjust_missing(trust({0.0, 1.0, 0.0}), {Modality::Depth, Modality::Pressure}).w ==
        std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("adjust_missing: everything missing throws") {
  CHECK_THROWS_AS(
      adjust_missing(trust({0.2, 0.3, 0.5}), {Modality::Rgb, Modality::Depth, Modality::Pressure}),
      AllModalitiesMissing);
}

TEST_CASE("adjust_missing keeps the simplex and never resurrects a removed modality") {
  std::mt19937_64 rng(2);
  const std::vector<std::set<Modality>> sets{{Modality::Rgb},
                                             {Modality::Depth},
                                             {Modality::Pressure},
                                             {Modality::Rgb, Modality::Depth},
                                             {Modality::Rgb, Modality::Pressure}};
  for (int i = 0; i < 50; ++i) {
    const auto w = testutil::random_simplex(3, rng);
    for (const auto& missing : sets) {
      const auto t = adjust_missing(trust({w(0), w(1), w(2)}), missing);
      double sum = 0.0;
      for (std::size_t m = 0; m < 3; ++m) {
        CHECK(t.w[m] >= 0.0);
        if (missing.contains(kRdp[m])) CHECK(t.w[m] == 0.0);
        sum += t.w[m];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("adjust_missing ignores modalities the trust vector lacks") {
  const auto t2 = adjust_missing(trust({0.4, 0.6}, {Modality::Rgb, Modality::Depth}),
                                 {Modality::Pressure, Modality::Rgb});
  CHECK(t2.w == std::vector<double>{0.0, 1.0});
}

TEST_CASE("fuse with a vertex weight follows that modality's view average") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_scores(rng);
    const auto pred = fuse(s, trust({1.0, 0.0, 0.0}), {kRdp.begin(), kRdp.end()});
    ProbabilityVector avg{};
    for (std::size_t l = 0; l < kNumLabels; ++l) avg[l] = 0.5 * (s.at(kRt)[l] + s.at(kRs)[l]);
    CHECK(index_of(pred.label) == argmax(avg));
    for (std::size_t l = 0; l < kNumLabels; ++l)
      CHECK(pred.probabilities[l] == doctest::Approx(avg[l]).epsilon(1e-12));
  }
}

TEST_CASE("fuse of identical unimodal outputs returns them unchanged") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto p = to_prob(testutil::random_simplex(kNumLabels, rng));
    const auto w = testutil::random_simplex(3, rng);
    std::map<ChannelKey, ProbabilityVector> s{{kRt, p}, {kDt, p}, {kP, p}};
    const auto pred = fuse(s, trust({w(0), w(1), w(2)}), {kRdp.begin(), kRdp.end()});
    for (std::size_t l = 0; l < kNumLabels; ++l)
      CHECK(pred.probabilities[l] == doctest::Approx(p[l]).epsilon(1e-12));
  }
}

TEST_CASE("fuse: the more confident of two equally trusted modalities wins") {
  std::map<ChannelKey, ProbabilityVector> s{{kRt, peaked(PoseLabel::FallerR, 0.6)},
                                            {kDt, peaked(PoseLabel::LogL, 0.9)},
                                            {kP, peaked(PoseLabel::FetalR, 1.0)}};
  const auto pred = fuse(s, trust({0.5, 0.5, 0.0}), {kRdp.begin(), kRdp.end()});
  CHECK(pred.label == PoseLabel::LogL);
}

TEST_CASE("fuse stays within the unimodal bounds of every label") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_scores(rng);
    const auto w = testutil::random_simplex(3, rng);
    const auto pred = fuse(s, trust({w(0), w(1), w(2)}), {kRdp.begin(), kRdp.end()});
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      const std::array<double, 3> uni{0.5 * (s.at(kRt)[l] + s.at(kRs)[l]),
                                      0.5 * (s.at(kDt)[l] + s.at(kDs)[l]), s.at(kP)[l]};
      CHECK(pred.probabilities[l] >= *std::min_element(uni.begin(), uni.end()) - 1e-12);
      CHECK(pred.probabilities[l] <= *std::max_element(uni.begin(), uni.end()) + 1e-12);
    }
  }
}

TEST_CASE("fuse argmax is invariant to rescaling the trust vector") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_scores(rng);
    const auto w = testutil::random_simplex(3, rng);
    const double c = 0.1 + 10.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const std::set<Modality> all{kRdp.begin(), kRdp.end()};
    const auto a = fuse(s, trust({w(0), w(1), w(2)}), all);
    const auto b = fuse(s, trust({c * w(0), c * w(1), c * w(2)}), all);
    CHECK(a.label == b.label);
  }
}

TEST_CASE("fuse breaks ties toward the lowest label index") {
  ProbabilityVector p{};
  p[index_of(PoseLabel::LogR)] = 0.5;
  p[index_of(PoseLabel::SoldierD)] = 0.5;
  std::map<ChannelKey, ProbabilityVector> s{{kRt, p}, {kDt, p}, {kP, p}};
  CHECK(fuse(s, trust({0.2, 0.3, 0.5}), {kRdp.begin(), kRdp.end()}).label == PoseLabel::SoldierD);
  ProbabilityVector u;
  u.fill(1.0 / kNumLabels);
  s = {{kRt, u}, {kDt, u}, {kP, u}};
  CHECK(fuse(s, trust({0.2, 0.3, 0.5}), {kRdp.begin(), kRdp.end()}).label == PoseLabel::Background);
}

TEST_CASE("fuse with missing modalities applies adjusted trust") {
  std::mt19937_64 rng(7);
  const auto s = random_scores(rng);
  const auto t = trust({0.5, 0.3, 0.2});
  const auto pred = fuse(s, t, {Modality::Rgb, Modality::Depth});
  CHECK(pred.trust.w == adjust_missing(t, {Modality::Pressure}).w);
  CHECK_THROWS_AS(fuse(s, t, {}), NoModalitiesAvailable);
}

TEST_CASE("predict errors") {
  const auto model = small_model(classifiers::ClassifierKind::Lda);
  const auto ds = model_dataset({SceneCondition{}});
  DataPoint p = ds[0];
  CHECK_THROWS_AS(predict(model, p, {}), NoModalitiesAvailable);
  p.scene = SceneCondition::from_index(5);
  CHECK_THROWS_AS(predict(model, p, {Modality::Rgb}), UnknownScene);
  CHECK_THROWS_AS(applied_trust(model, p.scene, {Modality::Rgb}), UnknownScene);
}

TEST_CASE("predict is deterministic and matches fuse of the classifier scores") {
  const auto model = small_model(classifiers::ClassifierKind::Lda);
  const auto ds = model_dataset({SceneCondition::from_index(11)});
  const std::set<Modality> all{kRdp.begin(), kRdp.end()};
  for (std::size_t k = 0; k < ds.size(); k += 7) {
    const auto a = predict(model, ds[k], all);
    const auto b = predict(model, ds[k], all);
    CHECK(a.label == b.label);
    CHECK(a.probabilities == b.probabilities);
    const auto f = fuse(classifiers::score_point(model.classifiers, ds[k]),
                        model.trust_table.at(ds[k].scene), all);
    CHECK(a.probabilities == f.probabilities);
  }
}

TEST_CASE("trained trust tables lie on the simplex") {
  const auto model = small_model(classifiers::ClassifierKind::Lda);
  CHECK(model.trust_table.size() == 2);
  for (const auto& [scene, t] : model.trust_table) {
    CHECK(t.scene == scene);
    CHECK(t.modalities == kRdp);
    double sum = 0.0;
    for (double v : t.w) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("model save/load round trip preserves predictions") {
  for (auto kind : {classifiers::ClassifierKind::Lda, classifiers::ClassifierKind::Svc}) {
    CAPTURE(classifiers::kind_name(kind));
    const auto model = small_model(kind);
    const auto path = temp_file("model.ccls");
    save_model(model, path);
    const auto loaded = load_model(path);
    CHECK(serialize_model(loaded) == serialize_model(model));
    CHECK(loaded.config.hog.work_width == 16);
    CHECK(loaded.config.gmom.tile_rows == 2);

    // 100 random points drawn around the training data.
    auto ds = model_dataset({SceneCondition{}, SceneCondition::from_index(11)});
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 0.5);
    const std::vector<std::set<Modality>> avail{{kRdp.begin(), kRdp.end()},
                                                {Modality::Rgb, Modality::Pressure},
                                                {Modality::Depth}};
    for (int i = 0; i < 100; ++i) {
      DataPoint p = ds[rng() % ds.size()];
      for (auto& [key, f] : p.features)
        for (auto& v : f.values) v += g(rng);
      const auto& a = avail[static_cast<std::size_t>(i) % avail.size()];
      const auto x = predict(model, p, a);
      const auto y = predict(loaded, p, a);
      CHECK(x.label == y.label);
      CHECK(x.probabilities == y.probabilities);
      CHECK(x.trust.w == y.trust.w);
    }
  }
}

TEST_CASE("corrupt and mismatched model files are rejected") {
  const auto model = small_model(classifiers::ClassifierKind::Lda);
  const std::string bytes = serialize_model(model);
  REQUIRE(bytes.substr(0, 4) == "CCLS");

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2,
                          bytes.size() - 1})
    CHECK_THROWS_AS(deserialize_model(std::string_view(bytes).substr(0, cut)), CorruptModel);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad_magic), CorruptModel);

  std::string v0 = bytes;
  v0[4] = v0[5] = v0[6] = v0[7] = 0;  // little-endian version field
  CHECK_THROWS_AS(deserialize_model(v0), VersionMismatch);

  CHECK_THROWS_AS(deserialize_model(bytes + "x"), CorruptModel);

  const auto path = temp_file("truncated.ccls");
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes.substr(0, bytes.size() - 8);
  }
  CHECK_THROWS_AS(load_model(path), CorruptModel);
  CHECK_THROWS_AS(load_model(temp_file("does_not_exist.ccls")), IoError);
}

}  // TEST_SUITE
