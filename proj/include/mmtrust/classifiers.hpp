#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mmtrust/binio.hpp"
#include "mmtrust/core.hpp"

namespace mmtrust::classifiers {

// Posterior over the full label set; nonnegative and summing to 1.
using ProbabilityVector = std::array<double, kNumLabels>;

enum class ClassifierKind : std::uint8_t { Lda = 1, Svc = 2 };

std::string_view kind_name(ClassifierKind kind);
ClassifierKind kind_from_name(std::string_view name);

// Common contract for the per-channel classifiers. Fitting replaces any
// previous state; a fitted classifier is immutable and safe to share.
class ProbabilisticClassifier {
 public:
  virtual ~ProbabilisticClassifier() = default;

  virtual ClassifierKind kind() const = 0;
  virtual void fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels) = 0;
  virtual ProbabilityVector predict_proba(const FeatureVector& f) const = 0;
  virtual std::size_t dim() const = 0;

  virtual void serialize(binio::Writer& out) const = 0;
};

// Reads a classifier written by ProbabilisticClassifier::serialize.
std::unique_ptr<ProbabilisticClassifier> deserialize_classifier(binio::Reader& in);

// ---------------------------------------------------------------------------
// Linear discriminant analysis with a shared diagonal covariance.

struct LdaModel {
  Eigen::MatrixXd class_means;     // L × d
  Eigen::VectorXd shared_var;      // d, pooled within-class variance + ridge
  std::array<double, kNumLabels> priors{};
  std::array<bool, kNumLabels> fitted{};
};

inline constexpr double kDefaultRidge = 1e-3;

LdaModel lda_fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels,
                 double ridge = kDefaultRidge);
ProbabilityVector lda_predict_proba(const LdaModel& m, const FeatureVector& f);

class LdaClassifier final : public ProbabilisticClassifier {
 public:
  explicit LdaClassifier(double ridge = kDefaultRidge) : ridge_(ridge) {}
  explicit LdaClassifier(LdaModel model) : model_(std::move(model)) {}

  ClassifierKind kind() const override { return ClassifierKind::Lda; }
  void fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels) override {
    model_ = lda_fit(features, labels, ridge_);
  }
  ProbabilityVector predict_proba(const FeatureVector& f) const override {
    return lda_predict_proba(model_, f);
  }
  std::size_t dim() const override { return static_cast<std::size_t>(model_.shared_var.size()); }
  void serialize(binio::Writer& out) const override;

  const LdaModel& model() const { return model_; }

 private:
  double ridge_ = kDefaultRidge;
  LdaModel model_;
};

// ---------------------------------------------------------------------------
// One-vs-rest linear SVM with Platt-calibrated outputs.

struct SvmParams {
  double c_param = 0.5;
  int epochs = 15;
  std::uint64_t seed = 0;
};

struct LinearSvmModel {
  // Inputs are standardized with these before the linear map.
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_scale;
  Eigen::MatrixXd weights;  // L × d
  Eigen::VectorXd biases;   // L
  std::array<double, kNumLabels> platt_a{};
  std::array<double, kNumLabels> platt_b{};
  std::array<bool, kNumLabels> fitted{};
  double c_param = 0.5;

  // Raw one-vs-rest margins for a feature vector.
  Eigen::VectorXd margins(const FeatureVector& f) const;
};

// Platt sigmoid 1 / (1 + exp(a·margin + b)).
struct PlattFit {
  double a = 0.0;
  double b = 0.0;
};

// Fits a Platt sigmoid on decision values with binary targets using
// Newton's method with backtracking line search and Platt's smoothed
// targets.
PlattFit platt_fit(std::span<const double> margins, std::span<const bool> positive,
                   int iterations = 100);
double platt_probability(const PlattFit& fit, double margin);

LinearSvmModel svm_fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels,
                       const SvmParams& params = {});
ProbabilityVector svm_predict_proba(const LinearSvmModel& m, const FeatureVector& f);

class SvmClassifier final : public ProbabilisticClassifier {
 public:
  explicit SvmClassifier(SvmParams params = {}) : params_(params) {}
  explicit SvmClassifier(LinearSvmModel model) : model_(std::move(model)) {}

  ClassifierKind kind() const override { return ClassifierKind::Svc; }
  void fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels) override {
    model_ = svm_fit(features, labels, params_);
  }
  ProbabilityVector predict_proba(const FeatureVector& f) const override {
    return svm_predict_proba(model_, f);
  }
  std::size_t dim() const override { return static_cast<std::size_t>(model_.weights.cols()); }
  void serialize(binio::Writer& out) const override;

  const LinearSvmModel& model() const { return model_; }

 private:
  SvmParams params_;
  LinearSvmModel model_;
};

// Creates an unfitted classifier of the given kind.
std::unique_ptr<ProbabilisticClassifier> make_classifier(ClassifierKind kind,
                                                         std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Scoring

using ClassifierSet = std::map<ChannelKey, std::shared_ptr<const ProbabilisticClassifier>>;

// Label probabilities for one data point: s(l, c) for label l and channel
// column c.
struct ScoreBlock {
  Eigen::MatrixXd s;
  std::size_t k = 0;
};

// Fits one classifier per channel of the dataset.
ClassifierSet fit_channels(const Dataset& ds, ClassifierKind kind, std::uint64_t seed = 0,
                           std::size_t threads = 1);

// Per-point probability vectors keyed by channel.
std::map<ChannelKey, ProbabilityVector> score_point(const ClassifierSet& clfs,
                                                    const DataPoint& point);

// One L × (#channels) block per data point, columns in ds.config().channels()
// order. Throws MissingClassifier when a channel has no classifier.
std::vector<ScoreBlock> score_dataset(const ClassifierSet& clfs, const Dataset& ds,
                                      std::size_t threads = 1);

// Scores every point of ds with classifiers fitted on the other folds of a
// label-stratified n_folds split, so no point is scored by a model that saw
// it. Blocks are in ds order.
std::vector<ScoreBlock> score_out_of_fold(const Dataset& ds, ClassifierKind kind,
                                         std::size_t n_folds, std::uint64_t seed,
                                         std::size_t threads = 1);

}  // namespace mmtrust::classifiers
