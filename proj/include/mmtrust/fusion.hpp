#pragma once

#include <filesystem>
#include <map>
#include <set>

#include "mmtrust/ccls.hpp"
#include "mmtrust/classifiers.hpp"
#include "mmtrust/core.hpp"
#include "mmtrust/features.hpp"
#include "mmtrust/imgproc.hpp"

namespace mmtrust::fusion {

using classifiers::ProbabilityVector;
using ccls::TrustTable;
using ccls::TrustVector;

struct ModelConfig {
  std::vector<Modality> modalities;
  std::vector<View> views;
  std::map<ChannelKey, std::size_t> feature_dims;
  classifiers::ClassifierKind classifier = classifiers::ClassifierKind::Lda;
  features::HogConfig hog;
  features::GmomConfig gmom;
  imgproc::Registration registration;

  std::vector<ChannelKey> channels() const { return make_channels(modalities, views); }
};

struct TrustedModel {
  ModelConfig config;
  classifiers::ClassifierSet classifiers;
  TrustTable trust_table;
};

struct Prediction {
  PoseLabel label = PoseLabel::Background;
  ProbabilityVector probabilities{};
  TrustVector trust;  // weights actually applied
};

inline constexpr std::size_t kDefaultTrustFolds = 5;

// Fits per-channel classifiers on the whole dataset and estimates the
// per-scene trust table (see ccls::fit_trust_table for trust_folds).
TrustedModel train(const Dataset& ds, classifiers::ClassifierKind kind, std::uint64_t seed,
                   const features::HogConfig& hog = {}, const features::GmomConfig& gmom = {},
                   const imgproc::Registration& registration = {}, std::size_t threads = 1,
                   std::size_t trust_folds = kDefaultTrustFolds);

// Zeroes each missing modality in (R, D, P) order, scaling every survivor m
// by 1 + |w_n − w_m| / W with W the weight sum before that removal, then
// renormalizes onto the simplex. Throws AllModalitiesMissing when nothing
// survives.
TrustVector adjust_missing(const TrustVector& w, const std::set<Modality>& missing);

// Weighted sum over available modalities of the view-averaged channel
// probabilities. Argmax ties go to the lowest label index.
Prediction fuse(const std::map<ChannelKey, ProbabilityVector>& channel_scores,
                const TrustVector& trust, const std::set<Modality>& available);

// Scores the point with the model's classifiers and fuses with the trust
// vector of the point's scene. Throws UnknownScene, NoModalitiesAvailable.
Prediction predict(const TrustedModel& model, const DataPoint& point,
                   const std::set<Modality>& available);

// Trust applied for a scene and availability set (adjusted when modalities
// are missing).
TrustVector applied_trust(const TrustedModel& model, const SceneCondition& scene,
                          const std::set<Modality>& available);

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize_model(const TrustedModel& model);
TrustedModel deserialize_model(std::string_view bytes);

// Throws IoError, CorruptModel, VersionMismatch.
void save_model(const TrustedModel& model, const std::filesystem::path& path);
TrustedModel load_model(const std::filesystem::path& path);

}  // namespace mmtrust::fusion
