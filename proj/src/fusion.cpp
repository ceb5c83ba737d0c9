#include "mmtrust/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "mmtrust/binio.hpp"

namespace mmtrust::fusion {

TrustedModel train(const Dataset& ds, classifiers::ClassifierKind kind, std::uint64_t seed,
                   const features::HogConfig& hog, const features::GmomConfig& gmom,
                   const imgproc::Registration& registration, std::size_t threads,
                   std::size_t trust_folds) {
  TrustedModel model;
  model.config.modalities = ds.config().modalities;
  model.config.views = ds.config().views;
  model.config.feature_dims = ds.config().feature_dims;
  model.config.classifier = kind;
  model.config.hog = hog;
  model.config.gmom = gmom;
  model.config.registration = registration;
  model.classifiers = classifiers::fit_channels(ds, kind, seed, threads);
  model.trust_table = ccls::fit_trust_table(ds, model.classifiers, kind, ds.config().views,
                                            trust_folds, seed, threads);
  return model;
}

TrustVector adjust_missing(const TrustVector& w, const std::set<Modality>& missing) {
  TrustVector out = w;
  bool any_survivor = false;
  for (auto m : out.modalities) any_survivor |= !missing.contains(m);
  if (!any_survivor) throw AllModalitiesMissing("every modality is missing");

  for (Modality n : kAllModalities) {
    if (!missing.contains(n)) continue;
    const auto it = std::find(out.modalities.begin(), out.modalities.end(), n);
    if (it == out.modalities.end()) continue;
    const auto ni = static_cast<std::size_t>(it - out.modalities.begin());
    double total = 0.0;
    for (double v : out.w) total += v;
    const double wn = out.w[ni];
    if (total > 0.0) {
      for (std::size_t i = 0; i < out.w.size(); ++i) {
        if (i == ni) continue;
        out.w[i] *= 1.0 + std::abs(wn - out.w[i]) / total;
      }
    }
    out.w[ni] = 0.0;
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < out.w.size(); ++i) {
    if (missing.contains(out.modalities[i])) out.w[i] = 0.0;
    sum += out.w[i];
  }
  if (sum > 0.0) {
    for (auto& v : out.w) v /= sum;
  } else {
    // Survivors all carried zero trust; split evenly among them.
    std::size_t n = 0;
    for (auto m : out.modalities) n += missing.contains(m) ? 0 : 1;
    for (std::size_t i = 0; i < out.w.size(); ++i)
      out.w[i] = missing.contains(out.modalities[i]) ? 0.0 : 1.0 / static_cast<double>(n);
  }
  return out;
}

Prediction fuse(const std::map<ChannelKey, ProbabilityVector>& channel_scores,
                const TrustVector& trust, const std::set<Modality>& available) {
  std::set<Modality> missing;
  bool any = false;
  for (auto m : trust.modalities) {
    if (available.contains(m))
      any = true;
    else
      missing.insert(m);
  }
  if (!any) throw NoModalitiesAvailable("no available modality has a trust weight");

  Prediction pred;
  pred.trust = missing.empty() ? trust : adjust_missing(trust, missing);
  ProbabilityVector fused{};
  for (std::size_t i = 0; i < pred.trust.modalities.size(); ++i) {
    const Modality m = pred.trust.modalities[i];
    if (missing.contains(m)) continue;
    ProbabilityVector avg{};
    std::size_t n_views = 0;
    for (const auto& [key, p] : channel_scores) {
      if (key.modality != m) continue;
      for (std::size_t l = 0; l < kNumLabels; ++l) avg[l] += p[l];
      ++n_views;
    }
    if (n_views == 0)
      throw MissingClassifier("no scores for modality " + std::string(modality_code(m)));
    const double w = pred.trust.w[i] / static_cast<double>(n_views);
    for (std::size_t l = 0; l < kNumLabels; ++l) fused[l] += w * avg[l];
  }

  double sum = 0.0;
  for (double v : fused) sum += v;
  if (sum > 0.0)
    for (auto& v : fused) v /= sum;
  std::size_t best = 0;
  for (std::size_t l = 1; l < kNumLabels; ++l)
    if (fused[l] > fused[best]) best = l;
  pred.label = label_from_index(best);
  pred.probabilities = fused;
  return pred;
}

TrustVector applied_trust(const TrustedModel& model, const SceneCondition& scene,
                          const std::set<Modality>& available) {
  const auto it = model.trust_table.find(scene);
  if (it == model.trust_table.end()) throw UnknownScene("no trust vector for scene " + scene.name());
  std::set<Modality> missing;
  bool any = false;
  for (auto m : it->second.modalities) {
    if (available.contains(m))
      any = true;
    else
      missing.insert(m);
  }
  if (!any) throw NoModalitiesAvailable("no available modality in the model");
  return missing.empty() ? it->second : adjust_missing(it->second, missing);
}

Prediction predict(const TrustedModel& model, const DataPoint& point,
                   const std::set<Modality>& available) {
  if (available.empty()) throw NoModalitiesAvailable("no modalities available");
  for (auto m : available)
    if (std::find(model.config.modalities.begin(), model.config.modalities.end(), m) ==
        model.config.modalities.end())
      throw std::invalid_argument("modality " + std::string(modality_code(m)) +
                                  " is not part of the model");
  const auto it = model.trust_table.find(point.scene);
  if (it == model.trust_table.end())
    throw UnknownScene("no trust vector for scene " + point.scene.name());

  std::map<ChannelKey, ProbabilityVector> scores;
  for (const auto& [key, f] : point.features) {
    if (!available.contains(key.modality)) continue;
    const auto clf = model.classifiers.find(key);
    if (clf == model.classifiers.end() || !clf->second)
      throw MissingClassifier("no classifier for channel " + key.name());
    scores.emplace(key, clf->second->predict_proba(f));
  }
  return fuse(scores, it->second, available);
}

// ---------------------------------------------------------------------------
// Model file

namespace {

constexpr std::string_view kMagic = "CCLS";
constexpr std::uint8_t kNoView = 0xff;

}  // namespace

std::string serialize_model(const TrustedModel& model) {
  const auto& cfg = model.config;
  const auto channels = cfg.channels();
  binio::Writer out;
  out.bytes(kMagic);
  out.u32(kModelFormatVersion);
  out.u32(static_cast<std::uint32_t>(kNumLabels));
  out.u32(static_cast<std::uint32_t>(cfg.modalities.size()));
  out.u32(static_cast<std::uint32_t>(cfg.views.size()));
  for (auto m : cfg.modalities) out.u8(static_cast<std::uint8_t>(m));
  for (auto v : cfg.views) out.u8(static_cast<std::uint8_t>(v));
  out.u32(static_cast<std::uint32_t>(channels.size()));
  for (const auto& ch : channels) {
    out.u8(static_cast<std::uint8_t>(ch.modality));
    out.u8(ch.view ? static_cast<std::uint8_t>(*ch.view) : kNoView);
    out.u32(static_cast<std::uint32_t>(cfg.feature_dims.at(ch)));
  }
  for (auto l : all_labels()) out.str(label_name(l));
  out.u8(static_cast<std::uint8_t>(cfg.classifier));

  for (int v : {cfg.hog.n_orientations, cfg.hog.cell_px, cfg.hog.block_cells, cfg.hog.work_width,
                cfg.hog.work_height, cfg.hog.block_stride_cells})
    out.u32(static_cast<std::uint32_t>(v));
  for (int v : {cfg.gmom.tile_rows, cfg.gmom.tile_cols, cfg.gmom.max_order})
    out.u32(static_cast<std::uint32_t>(v));
  out.u32(static_cast<std::uint32_t>(cfg.registration.view_to_top.size()));
  for (const auto& [view, h] : cfg.registration.view_to_top) {
    out.u8(static_cast<std::uint8_t>(view));
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.f64(h.matrix()(r, c));
  }

  for (const auto& ch : channels) {
    const auto it = model.classifiers.find(ch);
    if (it == model.classifiers.end() || !it->second)
      throw MissingClassifier("no classifier for channel " + ch.name());
    binio::Writer section;
    it->second->serialize(section);
    out.u64(section.data().size());
    out.bytes(section.data());
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& scene : all_scenes()) {
    const auto it = model.trust_table.find(scene);
    for (std::size_t m = 0; m < cfg.modalities.size(); ++m)
      out.f64(it == model.trust_table.end() ? nan : it->second.w.at(m));
  }
  return out.take();
}

TrustedModel deserialize_model(std::string_view bytes) {
  binio::Reader in(bytes);
  if (bytes.size() < kMagic.size() || in.bytes(kMagic.size()) != kMagic)
    throw CorruptModel("not a model file (bad magic)");
  const auto version = in.u32();
  if (version != kModelFormatVersion)
    throw VersionMismatch("model format version " + std::to_string(version) +
                          " is not supported (expected " +
                          std::to_string(kModelFormatVersion) + ")");
  if (in.u32() != kNumLabels) throw CorruptModel("label count mismatch");

  TrustedModel model;
  auto& cfg = model.config;
  const auto n_mod = in.u32();
  const auto n_view = in.u32();
  if (n_mod < 1 || n_mod > 3 || n_view > 3) throw CorruptModel("invalid modality/view counts");
  for (std::uint32_t i = 0; i < n_mod; ++i) {
    const auto m = in.u8();
    if (m > 2) throw CorruptModel("invalid modality code");
    cfg.modalities.push_back(static_cast<Modality>(m));
  }
  for (std::uint32_t i = 0; i < n_view; ++i) {
    const auto v = in.u8();
    if (v > 2) throw CorruptModel("invalid view code");
    cfg.views.push_back(static_cast<View>(v));
  }
  if (!std::is_sorted(cfg.modalities.begin(), cfg.modalities.end()) ||
      !std::is_sorted(cfg.views.begin(), cfg.views.end()))
    throw CorruptModel("modalities/views out of canonical order");
  const auto channels = cfg.channels();
  if (in.u32() != channels.size()) throw CorruptModel("channel count mismatch");
  for (const auto& ch : channels) {
    const auto m = in.u8();
    const auto v = in.u8();
    const ChannelKey key{static_cast<Modality>(m),
                         v == kNoView ? std::nullopt : std::optional<View>(static_cast<View>(v))};
    if (!(key == ch)) throw CorruptModel("channel table mismatch");
    cfg.feature_dims[ch] = in.u32();
  }
  for (auto l : all_labels())
    if (in.str() != label_name(l)) throw CorruptModel("label set mismatch");
  const auto kind = in.u8();
  if (kind != static_cast<std::uint8_t>(classifiers::ClassifierKind::Lda) &&
      kind != static_cast<std::uint8_t>(classifiers::ClassifierKind::Svc))
    throw CorruptModel("unknown classifier kind");
  cfg.classifier = static_cast<classifiers::ClassifierKind>(kind);

  auto read_int = [&] { return static_cast<int>(in.u32()); };
  cfg.hog.n_orientations = read_int();
  cfg.hog.cell_px = read_int();
  cfg.hog.block_cells = read_int();
  cfg.hog.work_width = read_int();
  cfg.hog.work_height = read_int();
  cfg.hog.block_stride_cells = read_int();
  cfg.gmom.tile_rows = read_int();
  cfg.gmom.tile_cols = read_int();
  cfg.gmom.max_order = read_int();
  try {
    for (const auto& ch : channels)
      if (cfg.feature_dims.at(ch) != features::feature_length(ch.modality, cfg.hog, cfg.gmom))
        throw CorruptModel("feature dimension of " + ch.name() + " does not match its extractor");
  } catch (const ConfigMismatch& e) {
    throw CorruptModel(std::string("invalid feature configuration: ") + e.what());
  }
  const auto n_reg = in.u32();
  if (n_reg > 3) throw CorruptModel("invalid registration count");
  for (std::uint32_t i = 0; i < n_reg; ++i) {
    const auto v = in.u8();
    if (v > 2) throw CorruptModel("invalid registration view");
    Eigen::Matrix3d h;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) h(r, c) = in.f64();
    try {
      cfg.registration.view_to_top.emplace(static_cast<View>(v), imgproc::Homography(h));
    } catch (const SingularHomography&) {
      throw CorruptModel("invalid registration homography");
    }
  }

  for (const auto& ch : channels) {
    const auto len = in.u64();
    if (len > in.remaining()) throw CorruptModel("classifier section overruns the file");
    binio::Reader section(in.bytes(static_cast<std::size_t>(len)));
    auto clf = classifiers::deserialize_classifier(section);
    if (!section.at_end()) throw CorruptModel("trailing bytes in classifier section");
    if (clf->kind() != cfg.classifier) throw CorruptModel("classifier kind mismatch");
    if (clf->dim() != cfg.feature_dims.at(ch))
      throw CorruptModel("classifier dimension mismatch on " + ch.name());
    model.classifiers.emplace(ch, std::move(clf));
  }

  for (const auto& scene : all_scenes()) {
    TrustVector t;
    t.modalities = cfg.modalities;
    t.scene = scene;
    t.w = in.f64s(cfg.modalities.size());
    if (std::all_of(t.w.begin(), t.w.end(), [](double v) { return std::isnan(v); })) continue;
    double sum = 0.0;
    for (double v : t.w) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw CorruptModel("invalid trust weight");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-8) throw CorruptModel("trust vector is not on the simplex");
    model.trust_table.emplace(scene, std::move(t));
  }
  if (!in.at_end()) throw CorruptModel("trailing bytes after trust table");
  return model;
}

void save_model(const TrustedModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

TrustedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace mmtrust::fusion
