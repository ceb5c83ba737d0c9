#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mmtrust/eval.hpp"

using namespace mmtrust;
using namespace mmtrust::eval;

namespace {

constexpr auto kLda = classifiers::ClassifierKind::Lda;

testutil::GaussianSpec three_view_spec() {
  testutil::GaussianSpec spec;
  spec.views = {View::Top, View::Side, View::Head};
  spec.scenes = {SceneCondition::from_index(0), SceneCondition::from_index(10)};
  spec.per_cell = 5;
  return spec;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Hand-built report over the given scenes: config c predicts truth for the
// first (c + s) % 5 + 1 points of every label and Background otherwise.
EvalReport synthetic_report(const std::vector<SceneCondition>& scenes, std::size_t n_configs) {
  EvalReport r;
  r.seed = 3;
  r.n_folds = 5;
  r.n_points = 0;
  const std::array<ConfigurationSpec, 4> specs{ConfigurationSpec::mm(), ConfigurationSpec::mpm(),
                                               ConfigurationSpec::pmm(), ConfigurationSpec::pmpm()};
  for (std::size_t c = 0; c < n_configs; ++c) {
    ConfigResult res;
    res.spec = specs[c];
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      std::vector<PoseLabel> truth, pred;
      for (auto l : all_labels())
        for (std::size_t i = 0; i < 6; ++i) {
          truth.push_back(l);
          pred.push_back(i < (c + s) % 5 + 1 ? l : PoseLabel::Background);
        }
      res.confusion[scenes[s]] = confusion_matrix(pred, truth);
      for (auto m : res.spec.modalities) res.unimodal[m][scenes[s]] = confusion_matrix(truth, truth);
    }
    res.fold_accuracy = {0.5, 0.6};
    r.configs.push_back(res);
  }
  return r;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mmtrust_test_eval" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("configuration specs") {
  CHECK(ConfigurationSpec::mm().modalities.size() == 3);
  CHECK(ConfigurationSpec::mm().views.size() == 3);
  CHECK(ConfigurationSpec::mpm().views == std::vector<View>{View::Top});
  CHECK(ConfigurationSpec::pmm().modalities ==
        std::vector<Modality>{Modality::Rgb, Modality::Depth});
  CHECK(ConfigurationSpec::pmpm().views.size() == 2);
  CHECK(ConfigurationSpec::from_name("PMpM").name == "PMpM");
  CHECK_THROWS_AS(ConfigurationSpec::from_name("XX"), std::invalid_argument);
}

TEST_CASE("confusion_matrix basics") {
  std::mt19937_64 rng(1);
  std::vector<PoseLabel> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(label_from_index(rng() % kNumLabels));
    pred.push_back(rng() % 3 == 0 ? label_from_index(rng() % kNumLabels) : truth.back());
  }
  const auto perfect = confusion_matrix(truth, truth);
  for (std::size_t i = 0; i < kNumLabels; ++i)
    for (std::size_t j = 0; j < kNumLabels; ++j)
      if (i != j) CHECK(perfect[i][j] == 0);
  CHECK(accuracy(perfect) == 1.0);

  const std::vector<PoseLabel> bg(truth.size(), PoseLabel::Background);
  const auto constant = confusion_matrix(bg, truth);
  for (std::size_t i = 0; i < kNumLabels; ++i)
    for (std::size_t j = 1; j < kNumLabels; ++j) CHECK(constant[i][j] == 0);

  const auto c = confusion_matrix(pred, truth);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += pred[i] == truth[i];
  CHECK(accuracy(c) == doctest::Approx(static_cast<double>(hits) / truth.size()));
  CHECK(total(c) == truth.size());
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    std::size_t row = 0;
    for (auto v : c[i]) row += v;
    CHECK(row == static_cast<std::size_t>(std::count(truth.begin(), truth.end(), label_from_index(i))));
  }
  auto sum = c;
  sum += c;
  CHECK(total(sum) == 2 * truth.size());
  CHECK(accuracy(ConfusionMatrix{}) == 0.0);

  pred.pop_back();
  CHECK_THROWS_AS(confusion_matrix(pred, truth), LengthMismatch);
}

TEST_CASE("run_cv on separable data is perfect") {
  auto spec = three_view_spec();
  spec.separation = 10.0;
  spec.noise = 0.2;
  const auto ds = testutil::gaussian_dataset(spec);
  const auto r = run_cv(ds, ConfigurationSpec::mm(), kLda, 5, 1);
  REQUIRE(r.configs.size() == 1);
  const auto& c = r.config("MM");
  CHECK(c.overall_accuracy() == 1.0);
  CHECK(c.fold_accuracy.size() == 5);
  std::size_t n = 0;
  for (const auto& [s, m] : c.confusion) n += total(m);
  CHECK(n == ds.size());
  CHECK(r.scenes() == spec.scenes);
  CHECK(r.n_points == ds.size());
}

TEST_CASE("run_cv on shuffled labels is at chance") {
  testutil::GaussianSpec spec;
  spec.per_cell = 40;
  spec.shuffle_labels = true;
  spec.seed = 2;
  const auto ds = testutil::gaussian_dataset(spec);
  const auto r = run_cv(ds, ConfigurationSpec::mpm(), kLda, 5, 2);
  const double acc = r.configs[0].overall_accuracy();
  CAPTURE(acc);
  CHECK(std::abs(acc - 1.0 / 11.0) <= 0.05);
}

TEST_CASE("run_cv is deterministic and independent of the thread count") {
  auto spec = three_view_spec();
  spec.noise = 3.0;
  const auto ds = testutil::gaussian_dataset(spec);
  const auto a = run_cv(ds, ConfigurationSpec::mm(), kLda, 5, 9, 1);
  const auto b = run_cv(ds, ConfigurationSpec::mm(), kLda, 5, 9, 4);
  CHECK(report_json(a) == report_json(b));
  const auto c = run_cv(ds, ConfigurationSpec::mm(), kLda, 5, 10, 1);
  CHECK(report_json(a) != report_json(c));
}

TEST_CASE("a single-modality configuration reproduces its unimodal classifier") {
  auto spec = three_view_spec();
  spec.noise = 3.0;
  const auto ds = testutil::gaussian_dataset(spec);
  const ConfigurationSpec depth_only{"custom", {Modality::Depth}, {View::Top, View::Side}};
  const auto r = run_cv(ds, depth_only, kLda, 5, 4);
  const auto& c = r.configs[0];
  CHECK(c.confusion == c.unimodal.at(Modality::Depth));
}

TEST_CASE("run_missing_modality") {
  auto spec = three_view_spec();
  spec.noise = 3.5;
  spec.noise_scale[{Modality::Rgb, 10}] = 3.0;
  const auto ds = testutil::gaussian_dataset(spec);
  const auto mm = ConfigurationSpec::mm();
  const auto base = run_cv(ds, mm, kLda, 5, 6);

  SUBCASE("no missing modality equals run_cv") {
    const auto r = run_missing_modality(ds, mm, kLda, {}, 5, 6);
    CHECK(report_json(r) == report_json(base));
    CHECK(r.configs[0].tag() == "MM");
  }

  SUBCASE("R and D missing equals pressure-only classification") {
    const auto r = run_missing_modality(ds, mm, kLda, {Modality::Rgb, Modality::Depth}, 5, 6);
    CHECK(r.configs[0].tag() == "MM-RD");
    CHECK(r.configs[0].confusion == base.configs[0].unimodal.at(Modality::Pressure));
  }

  SUBCASE("P missing matches a direct recomputation") {
    const auto r = run_missing_modality(ds, mm, kLda, {Modality::Pressure}, 5, 6);
    CHECK(r.configs[0].tag() == "MM-P");

    // Same folds, classifiers and trust tables; fusion written out by hand.
    std::map<SceneCondition, ConfusionMatrix> expected;
    const auto folds = stratified_fold_indices(ds.labels(), 5, 6);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<bool> test(ds.size(), false);
      for (auto i : folds[f]) test[i] = true;
      std::vector<std::size_t> train_idx;
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (!test[i]) train_idx.push_back(i);
      const auto train = ds.subset(train_idx);
      const auto clfs = classifiers::fit_channels(train, kLda, mix_seed(6, 0xF01D, f));
      const auto table = ccls::fit_trust_table(train, clfs, kLda, mm.views,
                                               fusion::kDefaultTrustFolds, mix_seed(6, 0x7F, f));
      for (auto i : folds[f]) {
        const auto& t = table.at(ds[i].scene);
        const double wr = t.weight(Modality::Rgb), wd = t.weight(Modality::Depth);
        const double wp = t.weight(Modality::Pressure);
        const double W = wr + wd + wp;
        const double rr = wr * (1 + std::abs(wp - wr) / W), rd = wd * (1 + std::abs(wp - wd) / W);
        const double ar = rr / (rr + rd), ad = rd / (rr + rd);
        const auto scores = classifiers::score_point(clfs, ds[i]);
        std::array<double, kNumLabels> fused{};
        for (const auto& [key, p] : scores) {
          if (key.modality == Modality::Pressure) continue;
          const double w = (key.modality == Modality::Rgb ? ar : ad) / 3.0;
          for (std::size_t l = 0; l < kNumLabels; ++l) fused[l] += w * p[l];
        }
        const auto best = static_cast<std::size_t>(std::max_element(fused.begin(), fused.end()) -
                                                   fused.begin());
        ++expected[ds[i].scene][index_of(ds[i].label)][best];
      }
    }
    CHECK(r.configs[0].confusion == expected);
  }

  SUBCASE("missing must be a proper subset of the configuration") {
    CHECK_THROWS_AS(run_missing_modality(ds, mm, kLda,
                                         {Modality::Rgb, Modality::Depth, Modality::Pressure}, 5, 6),
                    std::invalid_argument);
    CHECK_THROWS_AS(run_missing_modality(ds, ConfigurationSpec::pmm(), kLda, {Modality::Pressure}, 5, 6),
                    std::invalid_argument);
  }
}

TEST_CASE("merge combines compatible reports only") {
  const auto a = synthetic_report({SceneCondition{}}, 1);
  auto b = synthetic_report({SceneCondition{}}, 2);
  b.configs.erase(b.configs.begin());
  const auto m = merge(a, b);
  CHECK(m.configs.size() == 2);
  CHECK(m.config("MpM").spec.name == "MpM");
  CHECK_THROWS_AS(m.config("PMM"), std::out_of_range);
  b.seed = 4;
  CHECK_THROWS_AS(merge(a, b), std::invalid_argument);
}

TEST_CASE("report tables: one decimal percentages, one row per scene") {
  const auto scenes = std::vector<SceneCondition>{all_scenes().begin(), all_scenes().end()};
  const auto r = synthetic_report(scenes, 4);
  const auto acc = lines_of(accuracy_csv(r));
  REQUIRE(acc.size() == 13);
  CHECK(acc[0] == "scene,MM,MpM,PMM,PMpM");
  // Scene 0, config c: c + 1 of 6 points right for each pose, all of Background.
  CHECK(acc[1] == "bright_clear,24.2,39.4,54.5,69.7");
  CHECK(acc[12].rfind("dark_blanketpillow,", 0) == 0);

  const auto uni = lines_of(unimodal_csv(r));
  CHECK(uni[0] == "scene,MM:R,MM:D,MM:P,MpM:R,MpM:D,MpM:P,PMM:R,PMM:D,PMpM:R,PMpM:D");
  CHECK(uni.size() == 13);

  const auto conf = lines_of(confusion_csv(r, scenes[3]));
  REQUIRE(conf.size() == 1 + 4 * kNumLabels);
  CHECK(conf[0].rfind("configuration,truth,Background,", 0) == 0);
  CHECK(conf[1].rfind("MM,Background,6,0,", 0) == 0);

  const auto svg = heatmap_svg(r);
  CHECK(count_of(svg, "<rect class=\"cell\"") == 12 * 4);
  CHECK(svg.rfind("<?xml", 0) == 0);

  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["configurations"].size() == 4);
  CHECK(j["configurations"][0]["scenes"].size() == 12);
  CHECK(j["seed"] == 3);
}

TEST_CASE("emit_report with one scene") {
  const auto r = synthetic_report({SceneCondition::from_index(7)}, 2);
  const auto dir = fresh_dir("one_scene");
  emit_report(r, dir);
  std::size_t confusion_files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    confusion_files += e.path().filename().string().rfind("confusion_", 0) == 0;
  CHECK(confusion_files == 1);
  CHECK(std::filesystem::exists(dir / "confusion_medium_blanketpillow.csv"));
  CHECK(lines_of(read_file(dir / "accuracy_by_scene.csv")).size() == 2);
  CHECK(count_of(read_file(dir / "heatmap_accuracy.svg"), "<rect class=\"cell\"") == 2);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "unimodal_by_scene.csv"));
}

TEST_CASE("re-emitting a report gives byte-identical files") {
  const auto scenes = std::vector<SceneCondition>{all_scenes().begin(), all_scenes().end()};
  const auto r = synthetic_report(scenes, 3);
  const auto a = fresh_dir("emit_a"), b = fresh_dir("emit_b");
  emit_report(r, a);
  emit_report(r, b);
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(a)) {
    CHECK(read_file(e.path()) == read_file(b / e.path().filename()));
    ++n;
  }
  CHECK(n == 12 + 4);
}

TEST_CASE("emit_report fails on an unwritable directory") {
  const auto blocker = fresh_dir("blocker");
  std::filesystem::create_directories(blocker.parent_path());
  std::ofstream(blocker) << "x";
  CHECK_THROWS_AS(emit_report(synthetic_report({SceneCondition{}}, 1), blocker / "sub"), IoError);
}

}  // TEST_SUITE
