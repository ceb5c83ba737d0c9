#pragma once

#include <map>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mmtrust/classifiers.hpp"
#include "mmtrust/core.hpp"

namespace mmtrust::ccls {

using classifiers::ScoreBlock;

// Stacked label probabilities: row (v·K·L + k·L + l), column m holds the
// probability that modality m's classifier assigns label l to point k in
// view v.
struct DesignMatrix {
  Eigen::MatrixXd a;
  std::size_t n_points = 0;  // K
  std::size_t n_labels = 0;  // L
  std::size_t n_views = 1;   // V
  std::vector<Modality> modalities;
};

// Oracle target b and the per-modality indicator columns it averages.
struct OracleVector {
  Eigen::VectorXd b;
  Eigen::MatrixXd per_modality;  // rows × M, entries in {0,1}
};

// Modality weights on the probability simplex.
struct TrustVector {
  std::vector<Modality> modalities;
  std::vector<double> w;
  SceneCondition scene;

  double weight(Modality m) const;
};

using TrustTable = std::map<SceneCondition, TrustVector>;

// A = [S₁ᵀ … S_Kᵀ]ᵀ. Every block must be L × M with the same shape.
// `modalities` labels the columns; when empty the first M of (R, D, P) are
// assumed. Throws ShapeMismatch.
DesignMatrix build_design(std::span<const ScoreBlock> blocks,
                          std::vector<Modality> modalities = {});

// b_m[k·L + l] = 1 iff modality m's argmax for point k is the true label
// and l is that label; b = (Σ_m b_m) / M. Throws ShapeMismatch.
OracleVector build_oracle(std::span<const ScoreBlock> blocks, std::span<const PoseLabel> truth);

// Row-wise concatenation of per-view systems in the given order.
std::pair<DesignMatrix, OracleVector> stack_views(
    std::span<const std::pair<DesignMatrix, OracleVector>> per_view);

// Result of the simplex-constrained least-squares solve.
struct TrustSolution {
  TrustVector trust;
  double objective = 0.0;  // ½‖Aw − b‖²
  bool degenerate = false;  // A had no usable column; uniform weights returned
};

// Objective ½‖Aw − b‖².
double trust_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& w);

// Minimizes ½‖Aw − b‖² subject to w ≥ 0, 1ᵀw = 1 by enumerating every
// nonempty support: each support's equality-constrained least-squares
// problem is solved in the null space of 1ᵀ (minimum-norm when
// rank-deficient), infeasible candidates are dropped, and the lowest
// objective wins with ties (within 1e-10) going to the smallest ‖w‖.
// Supports at most 8 columns.
TrustSolution solve_trust_detailed(const DesignMatrix& a, const OracleVector& b);
TrustVector solve_trust(const DesignMatrix& a, const OracleVector& b);

// Extracts the L × M score block of one view from a per-channel score block
// whose columns follow `channels`. Viewless channels are replicated into
// every view.
ScoreBlock view_block(const ScoreBlock& block, const std::vector<ChannelKey>& channels,
                      const std::vector<Modality>& modalities, std::optional<View> view);

// Trust system (A, b) for one set of scored points, stacked over `views`.
std::pair<DesignMatrix, OracleVector> build_system(const std::vector<ScoreBlock>& channel_blocks,
                                                   const std::vector<ChannelKey>& channels,
                                                   const std::vector<Modality>& modalities,
                                                   const std::vector<View>& views,
                                                   std::span<const PoseLabel> truth);

// Per-scene trust from precomputed channel scores (columns in
// ds.config().channels() order, one block per point of ds).
TrustTable estimate_trust_table(const Dataset& ds, const std::vector<ScoreBlock>& channel_blocks,
                                const std::vector<View>& views);

// Scores ds with the classifiers, then estimates one trust vector per scene
// present in ds.
TrustTable estimate_trust_table(const Dataset& ds, const classifiers::ClassifierSet& clfs,
                                const std::vector<View>& views, std::size_t threads = 1);

// Number of out-of-fold splits used for trust scoring: trust_folds capped by
// the smallest label count, or 0 (resubstitution) when fewer than 2 remain.
std::size_t effective_trust_folds(const Dataset& ds, std::size_t trust_folds);

// Trust table from out-of-fold channel scores when trust_folds ≥ 2, so the
// oracle reflects how each modality does on points its classifier has not
// seen. With trust_folds < 2 the fitted `clfs` score their own training set.
TrustTable fit_trust_table(const Dataset& ds, const classifiers::ClassifierSet& clfs,
                           classifiers::ClassifierKind kind, const std::vector<View>& views,
                           std::size_t trust_folds, std::uint64_t seed, std::size_t threads = 1);

}  // namespace mmtrust::ccls
