#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mmtrust/classifiers.hpp"
#include "mmtrust/core.hpp"
#include "mmtrust/fusion.hpp"

namespace mmtrust::eval {

// A system configuration: which modalities and views are used.
struct ConfigurationSpec {
  std::string name;
  std::vector<Modality> modalities;
  std::vector<View> views;

  static ConfigurationSpec mm();    // {R,D,P} × {t,s,h}
  static ConfigurationSpec mpm();   // {R,D,P} × {t}
  static ConfigurationSpec pmm();   // {R,D} × {t,s,h}
  static ConfigurationSpec pmpm();  // {R,D} × {t,s}
  // MM, MpM, PMM or PMpM. Throws std::invalid_argument.
  static ConfigurationSpec from_name(std::string_view name);
};

// Entry (i, j) counts points with truth i predicted as j.
using ConfusionMatrix = std::array<std::array<std::size_t, kNumLabels>, kNumLabels>;

// Throws LengthMismatch.
ConfusionMatrix confusion_matrix(std::span<const PoseLabel> preds, std::span<const PoseLabel> truth);
std::size_t total(const ConfusionMatrix& c);
// trace / total; 0 for an empty matrix.
double accuracy(const ConfusionMatrix& c);
ConfusionMatrix& operator+=(ConfusionMatrix& a, const ConfusionMatrix& b);

struct ConfigResult {
  ConfigurationSpec spec;
  std::set<Modality> missing;
  std::map<SceneCondition, ConfusionMatrix> confusion;  // fused predictions
  std::map<Modality, std::map<SceneCondition, ConfusionMatrix>> unimodal;
  std::vector<double> fold_accuracy;

  // "MM", or e.g. "MM-P" when modalities were removed at test time.
  std::string tag() const;
  double scene_accuracy(const SceneCondition& s) const;
  double unimodal_accuracy(Modality m, const SceneCondition& s) const;
  double overall_accuracy() const;
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::size_t n_folds = 0;
  classifiers::ClassifierKind classifier = classifiers::ClassifierKind::Lda;
  std::size_t n_points = 0;
  std::size_t trust_folds = 0;
  std::vector<ConfigResult> configs;

  std::vector<SceneCondition> scenes() const;  // scenes present, ascending
  const ConfigResult& config(std::string_view tag) const;
};

// Label-stratified k-fold CV. Each fold fits the channel classifiers and the
// per-scene trust table on its training part only, then fuses the test
// points with their scene's trust. Trust scoring inside a training fold uses
// trust_folds inner splits (ccls::fit_trust_table).
EvalReport run_cv(const Dataset& ds, const ConfigurationSpec& spec,
                  classifiers::ClassifierKind kind, std::size_t n_folds, std::uint64_t seed,
                  std::size_t threads = 1, std::size_t trust_folds = fusion::kDefaultTrustFolds);

// As run_cv, with `missing` removed at prediction time and the trust adjusted
// accordingly. Throws std::invalid_argument unless missing ⊊ spec.modalities.
EvalReport run_missing_modality(const Dataset& ds, const ConfigurationSpec& spec,
                                classifiers::ClassifierKind kind, const std::set<Modality>& missing,
                                std::size_t n_folds, std::uint64_t seed, std::size_t threads = 1,
                                std::size_t trust_folds = fusion::kDefaultTrustFolds);

// Appends the configurations of `b` to `a`. Throws std::invalid_argument when
// seeds, folds or classifiers differ.
EvalReport merge(EvalReport a, const EvalReport& b);

// Writes accuracy_by_scene.csv, unimodal_by_scene.csv, confusion_{scene}.csv,
// heatmap_accuracy.svg and report.json. Throws IoError.
void emit_report(const EvalReport& r, const std::filesystem::path& dir);

// Helpers behind emit_report, exposed for testing.
std::string accuracy_csv(const EvalReport& r);
std::string unimodal_csv(const EvalReport& r);
std::string confusion_csv(const EvalReport& r, const SceneCondition& scene);
std::string heatmap_svg(const EvalReport& r);
std::string report_json(const EvalReport& r);

}  // namespace mmtrust::eval
