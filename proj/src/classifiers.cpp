#include "mmtrust/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace mmtrust::classifiers {

std::string_view kind_name(ClassifierKind kind) {
  return kind == ClassifierKind::Lda ? "lda" : "svc";
}

ClassifierKind kind_from_name(std::string_view name) {
  if (name == "lda" || name == "LDA") return ClassifierKind::Lda;
  if (name == "svc" || name == "SVC" || name == "svm") return ClassifierKind::Svc;
  throw std::invalid_argument("unknown classifier kind: " + std::string(name));
}

namespace {

std::size_t check_training_set(std::span<const FeatureVector> features,
                               std::span<const PoseLabel> labels) {
  if (features.empty()) throw EmptyTrainingSet("no training samples");
  if (features.size() != labels.size())
    throw DimensionMismatch("feature and label counts differ");
  const std::size_t d = features.front().size();
  if (d == 0) throw DimensionMismatch("zero-length feature vectors");
  for (const auto& f : features)
    if (f.size() != d) throw DimensionMismatch("feature vectors differ in length");
  return d;
}

Eigen::Map<const Eigen::VectorXd> as_vector(const FeatureVector& f) {
  return {f.values.data(), static_cast<Eigen::Index>(f.values.size())};
}

// Normalizes log-scores over the fitted classes; unfitted classes get 0.
ProbabilityVector softmax_fitted(const std::array<double, kNumLabels>& log_score,
                                 const std::array<bool, kNumLabels>& fitted) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < kNumLabels; ++l)
    if (fitted[l]) top = std::max(top, log_score[l]);
  ProbabilityVector p{};
  double sum = 0.0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!fitted[l]) continue;
    p[l] = std::exp(log_score[l] - top);
    sum += p[l];
  }
  for (auto& v : p) v /= sum;
  return p;
}

void write_flags(binio::Writer& out, const std::array<bool, kNumLabels>& flags) {
  for (bool b : flags) out.u8(b ? 1 : 0);
}

std::array<bool, kNumLabels> read_flags(binio::Reader& in) {
  std::array<bool, kNumLabels> flags{};
  for (auto& b : flags) {
    const auto v = in.u8();
    if (v > 1) throw CorruptModel("invalid class flag");
    b = v == 1;
  }
  return flags;
}

Eigen::VectorXd read_vector(binio::Reader& in, std::size_t n) {
  const auto v = in.f64s(n);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
}

Eigen::MatrixXd read_matrix(binio::Reader& in, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = in.f64();
  return m;
}

void write_matrix(binio::Writer& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.f64(m(r, c));
}

void write_vector(binio::Writer& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.f64(v[i]);
}

}  // namespace

// ---------------------------------------------------------------------------
// LDA

LdaModel lda_fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels,
                 double ridge) {
  const std::size_t d = check_training_set(features, labels);
  if (!(ridge > 0.0)) throw std::invalid_argument("LDA ridge must be positive");

  LdaModel m;
  m.class_means = Eigen::MatrixXd::Zero(kNumLabels, static_cast<Eigen::Index>(d));
  std::array<std::size_t, kNumLabels> counts{};
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto l = index_of(labels[i]);
    m.class_means.row(static_cast<Eigen::Index>(l)) += as_vector(features[i]).transpose();
    ++counts[l];
  }
  std::size_t n_classes = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    m.fitted[l] = counts[l] > 0;
    if (!m.fitted[l]) continue;
    ++n_classes;
    m.class_means.row(static_cast<Eigen::Index>(l)) /= static_cast<double>(counts[l]);
    m.priors[l] = static_cast<double>(counts[l]) / static_cast<double>(features.size());
  }

  Eigen::VectorXd ss = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto l = static_cast<Eigen::Index>(index_of(labels[i]));
    ss += (as_vector(features[i]) - m.class_means.row(l).transpose()).array().square().matrix();
  }
  const std::size_t dof =
      features.size() > n_classes ? features.size() - n_classes : features.size();
  m.shared_var = (ss / static_cast<double>(dof)).array() + ridge;
  return m;
}

ProbabilityVector lda_predict_proba(const LdaModel& m, const FeatureVector& f) {
  if (static_cast<Eigen::Index>(f.size()) != m.shared_var.size())
    throw DimensionMismatch("feature length does not match the LDA model");
  const auto x = as_vector(f);
  const Eigen::ArrayXd inv_var = m.shared_var.array().inverse();
  std::array<double, kNumLabels> log_score{};
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!m.fitted[l]) continue;
    const Eigen::ArrayXd diff =
        x.array() - m.class_means.row(static_cast<Eigen::Index>(l)).transpose().array();
    log_score[l] = std::log(m.priors[l]) - 0.5 * (diff.square() * inv_var).sum();
  }
  return softmax_fitted(log_score, m.fitted);
}

void LdaClassifier::serialize(binio::Writer& out) const {
  out.u8(static_cast<std::uint8_t>(ClassifierKind::Lda));
  out.u32(static_cast<std::uint32_t>(kNumLabels));
  out.u32(static_cast<std::uint32_t>(model_.shared_var.size()));
  write_matrix(out, model_.class_means);
  write_vector(out, model_.shared_var);
  for (double p : model_.priors) out.f64(p);
  write_flags(out, model_.fitted);
}

// ---------------------------------------------------------------------------
// Linear SVM

Eigen::VectorXd LinearSvmModel::margins(const FeatureVector& f) const {
  if (static_cast<Eigen::Index>(f.size()) != weights.cols())
    throw DimensionMismatch("feature length does not match the SVM model");
  const Eigen::VectorXd z =
      ((as_vector(f) - feature_mean).array() / feature_scale.array()).matrix();
  return weights * z + biases;
}

PlattFit platt_fit(std::span<const double> margins, std::span<const bool> positive,
                   int iterations) {
  if (margins.size() != positive.size())
    throw DimensionMismatch("margin and target counts differ");
  const double n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const double n_neg = static_cast<double>(positive.size()) - n_pos;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(margins.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = positive[i] ? hi : lo;

  // Negative log-likelihood of the sigmoid, written to avoid overflow.
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double z = margins[i] * a + b;
      f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return f;
  };

  constexpr double kSigma = 1e-12;  // Hessian damping
  constexpr double kMinStep = 1e-10;
  constexpr double kTol = 1e-5;
  double a = 0.0;
  double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double fval = objective(a, b);
  for (int it = 0; it < iterations; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double z = margins[i] * a + b;
      double p, q;  // p = 1/(1+exp(z)), q = 1 - p
      if (z >= 0) {
        p = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        p = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = p * q;
      h11 += margins[i] * margins[i] * d2;
      h22 += d2;
      h21 += margins[i] * d2;
      const double d1 = t[i] - p;
      g1 += margins[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kTol && std::abs(g2) < kTol) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    bool moved = false;
    while (step >= kMinStep) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    if (!moved) break;
  }
  return {a, b};
}

double platt_probability(const PlattFit& fit, double margin) {
  const double z = fit.a * margin + fit.b;
  return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

LinearSvmModel svm_fit(std::span<const FeatureVector> features, std::span<const PoseLabel> labels,
                       const SvmParams& params) {
  const std::size_t d = check_training_set(features, labels);
  if (!(params.c_param > 0.0)) throw std::invalid_argument("SVC C must be positive");
  const std::size_t n = features.size();
  const auto di = static_cast<Eigen::Index>(d);

  LinearSvmModel m;
  m.c_param = params.c_param;
  std::array<std::size_t, kNumLabels> counts{};
  for (auto l : labels) ++counts[index_of(l)];
  std::size_t n_classes = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    m.fitted[l] = counts[l] > 0;
    n_classes += m.fitted[l] ? 1 : 0;
  }
  if (n_classes < 2) throw SingleClassTraining("SVC needs at least two classes");

  Eigen::MatrixXd z(di, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) z.col(static_cast<Eigen::Index>(i)) = as_vector(features[i]);
  m.feature_mean = z.rowwise().mean();
  z.colwise() -= m.feature_mean;
  m.feature_scale = (z.array().square().rowwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < di; ++j)
    if (!(m.feature_scale[j] > 1e-12)) m.feature_scale[j] = 1.0;
  z.array().colwise() /= m.feature_scale.array();

  // Pegasos subgradient descent on the hinge loss with the bias appended as
  // a constant feature. w = scale · v keeps the per-step shrink O(1).
  const double lambda = 1.0 / (params.c_param * static_cast<double>(n));
  m.weights = Eigen::MatrixXd::Zero(kNumLabels, di);
  m.biases = Eigen::VectorXd::Zero(kNumLabels);
  std::vector<Eigen::VectorXd> v(kNumLabels, Eigen::VectorXd::Zero(di));
  std::array<double, kNumLabels> vb{}, scale{};
  scale.fill(1.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t t = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(params.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double shrink = 1.0 - 1.0 / static_cast<double>(t);
      const auto x = z.col(static_cast<Eigen::Index>(i));
      const std::size_t yi = index_of(labels[i]);
      for (std::size_t l = 0; l < kNumLabels; ++l) {
        if (!m.fitted[l]) continue;
        const double y = l == yi ? 1.0 : -1.0;
        const double margin = scale[l] * (v[l].dot(x) + vb[l]);
        if (shrink == 0.0) {
          v[l].setZero();
          vb[l] = 0.0;
          scale[l] = 1.0;
        } else {
          scale[l] *= shrink;
        }
        if (y * margin < 1.0) {
          v[l] += (eta * y / scale[l]) * x;
          vb[l] += eta * y / scale[l];
        }
        if (scale[l] < 1e-9) {
          v[l] *= scale[l];
          vb[l] *= scale[l];
          scale[l] = 1.0;
        }
      }
    }
  }
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!m.fitted[l]) continue;
    m.weights.row(static_cast<Eigen::Index>(l)) = scale[l] * v[l].transpose();
    m.biases[static_cast<Eigen::Index>(l)] = scale[l] * vb[l];
  }

  const Eigen::MatrixXd train_margins = (m.weights * z).colwise() + m.biases;  // L × n
  std::vector<double> margins(n);
  auto positive = std::make_unique<bool[]>(n);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!m.fitted[l]) continue;
    for (std::size_t i = 0; i < n; ++i) {
      margins[i] = train_margins(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
      positive[i] = index_of(labels[i]) == l;
    }
    const auto fit = platt_fit(margins, std::span<const bool>(positive.get(), n));
    m.platt_a[l] = fit.a;
    m.platt_b[l] = fit.b;
  }
  return m;
}

ProbabilityVector svm_predict_proba(const LinearSvmModel& m, const FeatureVector& f) {
  const Eigen::VectorXd margin = m.margins(f);
  ProbabilityVector p{};
  double sum = 0.0;
  std::size_t n_fitted = 0;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!m.fitted[l]) continue;
    ++n_fitted;
    p[l] = platt_probability({m.platt_a[l], m.platt_b[l]}, margin[static_cast<Eigen::Index>(l)]);
    sum += p[l];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    for (std::size_t l = 0; l < kNumLabels; ++l) p[l] = m.fitted[l] ? 1.0 / n_fitted : 0.0;
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

void SvmClassifier::serialize(binio::Writer& out) const {
  out.u8(static_cast<std::uint8_t>(ClassifierKind::Svc));
  out.u32(static_cast<std::uint32_t>(kNumLabels));
  out.u32(static_cast<std::uint32_t>(model_.weights.cols()));
  write_vector(out, model_.feature_mean);
  write_vector(out, model_.feature_scale);
  write_matrix(out, model_.weights);
  write_vector(out, model_.biases);
  for (double a : model_.platt_a) out.f64(a);
  for (double b : model_.platt_b) out.f64(b);
  write_flags(out, model_.fitted);
  out.f64(model_.c_param);
}

std::unique_ptr<ProbabilisticClassifier> deserialize_classifier(binio::Reader& in) {
  const auto kind = in.u8();
  const auto labels = in.u32();
  if (labels != kNumLabels) throw CorruptModel("classifier label count mismatch");
  const std::size_t d = in.u32();
  if (d == 0 || d > in.remaining() / 8) throw CorruptModel("implausible classifier dimension");
  if (kind == static_cast<std::uint8_t>(ClassifierKind::Lda)) {
    LdaModel m;
    m.class_means = read_matrix(in, kNumLabels, d);
    m.shared_var = read_vector(in, d);
    for (auto& p : m.priors) p = in.f64();
    m.fitted = read_flags(in);
    if ((m.shared_var.array() <= 0.0).any()) throw CorruptModel("non-positive LDA variance");
    return std::make_unique<LdaClassifier>(std::move(m));
  }
  if (kind == static_cast<std::uint8_t>(ClassifierKind::Svc)) {
    LinearSvmModel m;
    m.feature_mean = read_vector(in, d);
    m.feature_scale = read_vector(in, d);
    m.weights = read_matrix(in, kNumLabels, d);
    m.biases = read_vector(in, kNumLabels);
    for (auto& a : m.platt_a) a = in.f64();
    for (auto& b : m.platt_b) b = in.f64();
    m.fitted = read_flags(in);
    m.c_param = in.f64();
    return std::make_unique<SvmClassifier>(std::move(m));
  }
  throw CorruptModel("unknown classifier kind");
}

std::unique_ptr<ProbabilisticClassifier> make_classifier(ClassifierKind kind, std::uint64_t seed) {
  if (kind == ClassifierKind::Lda) return std::make_unique<LdaClassifier>();
  SvmParams params;
  params.seed = seed;
  return std::make_unique<SvmClassifier>(params);
}

// ---------------------------------------------------------------------------

ClassifierSet fit_channels(const Dataset& ds, ClassifierKind kind, std::uint64_t seed,
                           std::size_t threads) {
  const auto channels = ds.config().channels();
  std::vector<std::shared_ptr<const ProbabilisticClassifier>> fitted(channels.size());
  const auto labels = ds.labels();
  parallel_for(channels.size(), threads, [&](std::size_t c) {
    std::vector<FeatureVector> xs;
    xs.reserve(ds.size());
    for (const auto& p : ds.points()) xs.push_back(p.features.at(channels[c]));
    auto clf = make_classifier(kind, mix_seed(seed, c));
    clf->fit(xs, labels);
    fitted[c] = std::move(clf);
  });
  ClassifierSet out;
  for (std::size_t c = 0; c < channels.size(); ++c) out.emplace(channels[c], fitted[c]);
  return out;
}

std::map<ChannelKey, ProbabilityVector> score_point(const ClassifierSet& clfs,
                                                    const DataPoint& point) {
  std::map<ChannelKey, ProbabilityVector> out;
  for (const auto& [key, f] : point.features) {
    auto it = clfs.find(key);
    if (it == clfs.end() || !it->second)
      throw MissingClassifier("no classifier for channel " + key.name());
    out.emplace(key, it->second->predict_proba(f));
  }
  return out;
}

std::vector<ScoreBlock> score_dataset(const ClassifierSet& clfs, const Dataset& ds,
                                      std::size_t threads) {
  const auto channels = ds.config().channels();
  for (const auto& ch : channels)
    if (!clfs.contains(ch) || !clfs.at(ch))
      throw MissingClassifier("no classifier for channel " + ch.name());
  std::vector<ScoreBlock> blocks(ds.size());
  parallel_for(ds.size(), threads, [&](std::size_t k) {
    ScoreBlock& b = blocks[k];
    b.k = k;
    b.s.resize(kNumLabels, static_cast<Eigen::Index>(channels.size()));
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const auto p = clfs.at(channels[c])->predict_proba(ds[k].features.at(channels[c]));
      for (std::size_t l = 0; l < kNumLabels; ++l)
        b.s(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(c)) = p[l];
    }
  });
  return blocks;
}

std::vector<ScoreBlock> score_out_of_fold(const Dataset& ds, ClassifierKind kind,
                                         std::size_t n_folds, std::uint64_t seed,
                                         std::size_t threads) {
  const auto folds = stratified_fold_indices(ds.labels(), n_folds, seed);
  std::vector<ScoreBlock> blocks(ds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<bool> held_out(ds.size(), false);
    for (auto i : folds[f]) held_out[i] = true;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (!held_out[i]) train_idx.push_back(i);
    const auto clfs = fit_channels(ds.subset(train_idx), kind, mix_seed(seed, 0x00F, f), threads);
    const auto scored = score_dataset(clfs, ds.subset(folds[f]), threads);
    for (std::size_t j = 0; j < folds[f].size(); ++j) {
      blocks[folds[f][j]] = scored[j];
      blocks[folds[f][j]].k = folds[f][j];
    }
  }
  return blocks;
}

}  // namespace mmtrust::classifiers
