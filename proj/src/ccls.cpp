#include "mmtrust/ccls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmtrust::ccls {

double TrustVector::weight(Modality m) const {
  for (std::size_t i = 0; i < modalities.size(); ++i)
    if (modalities[i] == m) return w[i];
  return 0.0;
}

DesignMatrix build_design(std::span<const ScoreBlock> blocks, std::vector<Modality> modalities) {
  if (blocks.empty()) throw ShapeMismatch("no score blocks");
  const auto rows = blocks.front().s.rows();
  const auto cols = blocks.front().s.cols();
  if (rows == 0 || cols == 0) throw ShapeMismatch("empty score block");
  for (const auto& blk : blocks)
    if (blk.s.rows() != rows || blk.s.cols() != cols)
      throw ShapeMismatch("score blocks differ in shape");
  if (modalities.empty()) {
    if (cols > static_cast<Eigen::Index>(kAllModalities.size()))
      throw ShapeMismatch("more score columns than modalities");
    modalities.assign(kAllModalities.begin(), kAllModalities.begin() + cols);
  }
  if (static_cast<Eigen::Index>(modalities.size()) != cols)
    throw ShapeMismatch("modality list does not match score columns");

  DesignMatrix d;
  d.n_points = blocks.size();
  d.n_labels = static_cast<std::size_t>(rows);
  d.n_views = 1;
  d.modalities = std::move(modalities);
  d.a.resize(rows * static_cast<Eigen::Index>(blocks.size()), cols);
  for (std::size_t k = 0; k < blocks.size(); ++k)
    d.a.middleRows(static_cast<Eigen::Index>(k) * rows, rows) = blocks[k].s;
  return d;
}

OracleVector build_oracle(std::span<const ScoreBlock> blocks, std::span<const PoseLabel> truth) {
  if (blocks.empty()) throw ShapeMismatch("no score blocks");
  if (blocks.size() != truth.size()) throw ShapeMismatch("score block and label counts differ");
  const auto rows = blocks.front().s.rows();
  const auto cols = blocks.front().s.cols();
  OracleVector o;
  o.per_modality = Eigen::MatrixXd::Zero(rows * static_cast<Eigen::Index>(blocks.size()), cols);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& s = blocks[k].s;
    if (s.rows() != rows || s.cols() != cols) throw ShapeMismatch("score blocks differ in shape");
    const auto truth_row = static_cast<Eigen::Index>(index_of(truth[k]));
    if (truth_row >= rows) throw ShapeMismatch("true label outside the score block");
    for (Eigen::Index m = 0; m < cols; ++m) {
      Eigen::Index best = 0;
      s.col(m).maxCoeff(&best);  // first maximum on ties
      if (best == truth_row)
        o.per_modality(static_cast<Eigen::Index>(k) * rows + truth_row, m) = 1.0;
    }
  }
  o.b = o.per_modality.rowwise().sum() / static_cast<double>(cols);
  return o;
}

std::pair<DesignMatrix, OracleVector> stack_views(
    std::span<const std::pair<DesignMatrix, OracleVector>> per_view) {
  if (per_view.empty()) throw ShapeMismatch("no views to stack");
  const auto& first = per_view.front().first;
  Eigen::Index rows = 0;
  for (const auto& [a, b] : per_view) {
    if (a.n_points != first.n_points || a.n_labels != first.n_labels ||
        a.a.cols() != first.a.cols() || a.modalities != first.modalities)
      throw ShapeMismatch("per-view systems differ in K, L or M");
    if (b.b.size() != a.a.rows() || b.per_modality.rows() != a.a.rows())
      throw ShapeMismatch("oracle length does not match design rows");
    rows += a.a.rows();
  }
  DesignMatrix d;
  d.n_points = first.n_points;
  d.n_labels = first.n_labels;
  d.modalities = first.modalities;
  d.n_views = 0;
  d.a.resize(rows, first.a.cols());
  OracleVector o;
  o.b.resize(rows);
  o.per_modality.resize(rows, first.a.cols());
  Eigen::Index r = 0;
  for (const auto& [a, b] : per_view) {
    d.a.middleRows(r, a.a.rows()) = a.a;
    o.b.segment(r, a.a.rows()) = b.b;
    o.per_modality.middleRows(r, a.a.rows()) = b.per_modality;
    r += a.a.rows();
    d.n_views += a.n_views;
  }
  return {std::move(d), std::move(o)};
}

double trust_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& w) {
  return 0.5 * (a * w - b).squaredNorm();
}

namespace {

constexpr double kFeasibilityTol = 1e-10;
constexpr double kTieTol = 1e-10;
constexpr double kRankTol = 1e-10;

// Minimizer of ‖A_S w − b‖² over the affine hull {1ᵀw = 1} of support S.
Eigen::VectorXd solve_on_support(const Eigen::MatrixXd& a_s, const Eigen::VectorXd& b) {
  const Eigen::Index s = a_s.cols();
  if (s == 1) return Eigen::VectorXd::Ones(1);
  // w = 1/s + N z with N an orthonormal basis of the null space of 1ᵀ;
  // since 1/s ⟂ N, the minimum-norm z gives the minimum-norm w.
  const Eigen::VectorXd w0 = Eigen::VectorXd::Constant(s, 1.0 / static_cast<double>(s));
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Ones(s, 1));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(s, s);
  const Eigen::MatrixXd n = q.rightCols(s - 1);
  const Eigen::MatrixXd an = a_s * n;
  // Pseudo-inverse with an absolute cutoff: collinear columns leave A·N at
  // rounding-noise level, which a relative rank test would treat as signal.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(an, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double cutoff = kRankTol * std::max(1.0, a_s.norm());
  const Eigen::VectorXd ut_r = svd.matrixU().transpose() * (b - a_s * w0);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(ut_r.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (svd.singularValues()(i) > cutoff) y(i) = ut_r(i) / svd.singularValues()(i);
  return w0 + n * (svd.matrixV() * y);
}

}  // namespace

TrustSolution solve_trust_detailed(const DesignMatrix& a, const OracleVector& b) {
  const Eigen::MatrixXd& A = a.a;
  const Eigen::Index m = A.cols();
  if (m < 1 || m > 8) throw ShapeMismatch("trust solve supports 1 to 8 modalities");
  if (A.rows() < m) throw ShapeMismatch("design matrix has fewer rows than columns");
  if (b.b.size() != A.rows()) throw ShapeMismatch("oracle length does not match design rows");
  if (!A.allFinite() || !b.b.allFinite()) throw ShapeMismatch("non-finite design or oracle");

  std::vector<Modality> modalities = a.modalities;
  if (modalities.empty()) modalities.assign(kAllModalities.begin(), kAllModalities.begin() + m);

  std::vector<bool> zero_col(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) zero_col[j] = A.col(j).cwiseAbs().maxCoeff() == 0.0;

  Eigen::VectorXd best_w;
  double best_obj = std::numeric_limits<double>::infinity();
  double best_norm = std::numeric_limits<double>::infinity();
  unsigned best_mask = 0;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < m; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    Eigen::MatrixXd a_s(A.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) a_s.col(static_cast<Eigen::Index>(i)) = A.col(cols[i]);
    const Eigen::VectorXd ws = solve_on_support(a_s, b.b);
    if (!ws.allFinite() || ws.minCoeff() < -kFeasibilityTol) continue;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < cols.size(); ++i) w[cols[i]] = std::max(0.0, ws[static_cast<Eigen::Index>(i)]);
    w /= w.sum();
    const double obj = trust_objective(A, b.b, w);
    const double norm = w.norm();
    if (obj < best_obj - kTieTol || (obj <= best_obj + kTieTol && norm < best_norm)) {
      best_w = w;
      best_obj = std::min(obj, best_obj);
      best_norm = norm;
      best_mask = mask;
    }
  }

  TrustSolution sol;
  sol.trust.modalities = modalities;
  bool degenerate = best_mask == 0;
  for (Eigen::Index j = 0; j < m && !degenerate; ++j)
    if ((best_mask & (1u << j)) && zero_col[j] && best_w[j] > 0.0) degenerate = true;
  if (degenerate) {
    best_w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    sol.degenerate = true;
  }
  for (Eigen::Index j = 0; j < m; ++j)
    if (best_w[j] < 1e-12) best_w[j] = 0.0;
  best_w /= best_w.sum();
  sol.trust.w.assign(best_w.data(), best_w.data() + m);
  sol.objective = trust_objective(A, b.b, best_w);
  return sol;
}

TrustVector solve_trust(const DesignMatrix& a, const OracleVector& b) {
  return solve_trust_detailed(a, b).trust;
}

ScoreBlock view_block(const ScoreBlock& block, const std::vector<ChannelKey>& channels,
                      const std::vector<Modality>& modalities, std::optional<View> view) {
  if (static_cast<std::size_t>(block.s.cols()) != channels.size())
    throw ShapeMismatch("score block columns do not match the channel list");
  ScoreBlock out;
  out.k = block.k;
  out.s.resize(block.s.rows(), static_cast<Eigen::Index>(modalities.size()));
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    const ChannelKey key{modalities[i], is_viewless(modalities[i]) ? std::nullopt : view};
    const auto it = std::find(channels.begin(), channels.end(), key);
    if (it == channels.end()) throw ShapeMismatch("no score column for channel " + key.name());
    out.s.col(static_cast<Eigen::Index>(i)) = block.s.col(it - channels.begin());
  }
  return out;
}

std::pair<DesignMatrix, OracleVector> build_system(const std::vector<ScoreBlock>& channel_blocks,
                                                   const std::vector<ChannelKey>& channels,
                                                   const std::vector<Modality>& modalities,
                                                   const std::vector<View>& views,
                                                   std::span<const PoseLabel> truth) {
  const bool any_viewed = std::any_of(modalities.begin(), modalities.end(),
                                      [](Modality m) { return !is_viewless(m); });
  std::vector<std::optional<View>> passes;
  if (any_viewed) {
    if (views.empty()) throw ShapeMismatch("view-keyed modalities need at least one view");
    passes.assign(views.begin(), views.end());
  } else {
    passes.push_back(std::nullopt);
  }
  std::vector<std::pair<DesignMatrix, OracleVector>> per_view;
  per_view.reserve(passes.size());
  std::vector<ScoreBlock> blocks(channel_blocks.size());
  for (const auto& v : passes) {
    for (std::size_t k = 0; k < channel_blocks.size(); ++k)
      blocks[k] = view_block(channel_blocks[k], channels, modalities, v);
    per_view.emplace_back(build_design(blocks, modalities), build_oracle(blocks, truth));
  }
  return stack_views(per_view);
}

TrustTable estimate_trust_table(const Dataset& ds, const std::vector<ScoreBlock>& channel_blocks,
                                const std::vector<View>& views) {
  if (channel_blocks.size() != ds.size())
    throw ShapeMismatch("one score block per data point required");
  const auto channels = ds.config().channels();
  const auto& modalities = ds.config().modalities;

  std::map<SceneCondition, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < ds.size(); ++k) groups[ds[k].scene].push_back(k);

  TrustTable table;
  for (const auto& [scene, idx] : groups) {
    std::vector<ScoreBlock> blocks;
    std::vector<PoseLabel> truth;
    blocks.reserve(idx.size());
    for (auto k : idx) {
      blocks.push_back(channel_blocks[k]);
      truth.push_back(ds[k].label);
    }
    const auto [a, b] = build_system(blocks, channels, modalities, views, truth);
    TrustVector t = solve_trust(a, b);
    t.scene = scene;
    table.emplace(scene, std::move(t));
  }
  return table;
}

TrustTable estimate_trust_table(const Dataset& ds, const classifiers::ClassifierSet& clfs,
                                const std::vector<View>& views, std::size_t threads) {
  return estimate_trust_table(ds, classifiers::score_dataset(clfs, ds, threads), views);
}

std::size_t effective_trust_folds(const Dataset& ds, std::size_t trust_folds) {
  if (trust_folds < 2) return 0;
  std::array<std::size_t, kNumLabels> counts{};
  for (const auto& p : ds.points()) ++counts[index_of(p.label)];
  std::size_t smallest = trust_folds;
  std::size_t classes = 0;
  for (auto c : counts) {
    if (c == 0) continue;
    ++classes;
    smallest = std::min(smallest, c);
  }
  return smallest >= 2 && classes >= 2 ? smallest : 0;
}

TrustTable fit_trust_table(const Dataset& ds, const classifiers::ClassifierSet& clfs,
                           classifiers::ClassifierKind kind, const std::vector<View>& views,
                           std::size_t trust_folds, std::uint64_t seed, std::size_t threads) {
  const std::size_t folds = effective_trust_folds(ds, trust_folds);
  if (folds == 0) return estimate_trust_table(ds, clfs, views, threads);
  return estimate_trust_table(
      ds, classifiers::score_out_of_fold(ds, kind, folds, mix_seed(seed, 0x7C), threads), views);
}

}  // namespace mmtrust::ccls
