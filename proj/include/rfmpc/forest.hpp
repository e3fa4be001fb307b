#ifndef RFMPC_FOREST_HPP
#define RFMPC_FOREST_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rfmpc/dynamics.hpp"
#include "rfmpc/mat.hpp"
#include "rfmpc/rng.hpp"

namespace rfmpc {

/// Feature partition of one training window over N consecutive steps: the
/// trees route on the non-control block, the leaf linear models act on the
/// control block.
struct FeatureWindow {
  Vec zn;  // 4N flattened error states, oldest first
  Vec zc;  // N steering increments, oldest first

  bool finite() const;
};

struct ResidualSample {
  FeatureWindow window;
  std::array<double, 4> eps{};  // one-step residue of the four error states
};

struct ForestConfig {
  int n_trees = 20;
  int max_depth = 6;
  int min_leaf = 34;               // default 2 (N+1): leaf fits overdetermined
  double feature_fraction = 0.125; // of the 4N zn coordinates, per split
  bool bootstrap = true;
  double ridge = 1e-3;             // on slopes only; keeps normal equations PD
  std::uint64_t seed = 1;
  int horizon = 16;                // N

  void validate() const;
};

/// Flat-array tree node: feature >= 0 splits on a zn coordinate (left when
/// value < threshold), feature == -1 is a leaf carrying the linear model.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  Mat theta;  // (N+1) x 4: intercept row, then one row per window increment
  std::array<double, 4> mean_label{};
  int n_samples = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at 0, preorder
};

struct FitMetrics {
  double rmse = 0.0;
  double me = 0.0;
  double mae = 0.0;
};

/// RMSE / max-abs / mean-abs error. Throws on empty or mismatched input.
FitMetrics fit_metrics(const Vec& y, const Vec& y_hat);

/// One recorded control step, the minimum needed to rebuild the one-step
/// nominal prediction: psi_dot_des is recoverable from a run log as r - e2_dot.
struct MeasuredStep {
  ErrorState err;
  double du = 0.0;          // applied increment at this step
  double u = 0.0;           // absolute steering after applying du
  double psi_dot_des = 0.0;
};

/// Turns a closed-loop log into (window, one-step residue) pairs: for every
/// step k >= N-1 the label is the measured x_{k+1} minus the nominal one-step
/// prediction, restricted to the error states; the window is the N states and
/// N increments ending at step k. Throws when the log has fewer than N+1 rows.
std::vector<ResidualSample> build_samples(const std::vector<MeasuredStep>& log,
                                          const VehicleParams& veh, double ts,
                                          int horizon);

/// Greedy CART on the zn features as given (no standardization): binary splits
/// minimizing total label variance, each output normalized by its sample
/// variance; stops at max_depth, min_leaf or zero variance. Leaves get their
/// linear model from fit_leaf_linear.
Tree fit_tree(const std::vector<ResidualSample>& samples, const ForestConfig& cfg,
              Rng& rng);

/// Ridge leaf model: argmin sum ||eps - Theta^T [1; zc]||^2 + ridge ||slopes||^2
/// via symmetric positive definite normal equations (intercept unpenalized).
Mat fit_leaf_linear(const std::vector<ResidualSample>& samples,
                    const std::vector<int>& index, double ridge, int horizon);

/// Switched-linear residual model: trees route on standardized zn, each leaf
/// carries an (N+1) x 4 coefficient matrix, queries average the per-tree leaf
/// coefficients. Immutable once fitted; safe for concurrent readers.
class ResidualForest {
 public:
  ResidualForest() = default;

  static ResidualForest fit(const std::vector<ResidualSample>& samples,
                            const ForestConfig& cfg);

  /// Arithmetic mean of the per-tree leaf coefficient matrices for zn.
  Mat predict_leaf(const Vec& zn) const;

  /// predict_leaf(zn)^T applied to [1; zc].
  std::array<double, 4> predict_residue(const FeatureWindow& w) const;

  /// Leaf-mean ablation: average of the per-tree leaf mean labels (the plain
  /// regression-tree prediction, no linear part).
  std::array<double, 4> predict_residue_mean(const Vec& zn) const;

  /// Per-tree leaf node index reached by zn.
  std::vector<int> leaf_ids(const Vec& zn) const;

  /// Total nodes touched routing zn through all trees (query-cost probe).
  int route_node_visits(const Vec& zn) const;

  bool fitted() const { return fitted_; }
  const ForestConfig& config() const { return cfg_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const Vec& feature_mean() const { return mean_; }
  const Vec& feature_scale() const { return scale_; }

  std::string to_json() const;
  static ResidualForest from_json(const std::string& text);
  void save(const std::string& path) const;
  static ResidualForest load(const std::string& path);

 private:
  Vec standardize(const Vec& zn) const;

  ForestConfig cfg_;
  Vec mean_, scale_;
  std::vector<Tree> trees_;
  bool fitted_ = false;
};

/// Dataset file: CSV with header k, zn_0..zn_{4N-1}, zc_0..zc_{N-1},
/// eps_0..eps_3; doubles in shortest round-trip decimal form.
void write_dataset_csv(const std::string& path,
                       const std::vector<ResidualSample>& samples);
std::vector<ResidualSample> read_dataset_csv(const std::string& path);

}  // namespace rfmpc

#endif  // RFMPC_FOREST_HPP
