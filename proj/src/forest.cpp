#include "rfmpc/forest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rfmpc/kernels.hpp"
#include "rfmpc/linalg.hpp"

namespace rfmpc {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("dataset csv: bad number '" + s + "'");
  return v;
}

}  // namespace

bool FeatureWindow::finite() const {
  for (double v : zn)
    if (!std::isfinite(v)) return false;
  for (double v : zc)
    if (!std::isfinite(v)) return false;
  return true;
}

void ForestConfig::validate() const {
  if (n_trees < 1) throw std::invalid_argument("ForestConfig: n_trees must be >= 1");
  if (max_depth < 0) throw std::invalid_argument("ForestConfig: max_depth must be >= 0");
  if (horizon < 1) throw std::invalid_argument("ForestConfig: horizon must be >= 1");
  if (min_leaf < horizon + 2)
    throw std::invalid_argument("ForestConfig: min_leaf must be >= N+2");
  if (!(feature_fraction > 0.0) || feature_fraction > 1.0)
    throw std::invalid_argument("ForestConfig: feature_fraction must be in (0, 1]");
  if (!(ridge > 0.0)) throw std::invalid_argument("ForestConfig: ridge must be > 0");
}

FitMetrics fit_metrics(const Vec& y, const Vec& y_hat) {
  if (y.empty() || y.size() != y_hat.size())
    throw std::invalid_argument("fit_metrics: sequences must be equal and nonzero length");
  FitMetrics m;
  double sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - y_hat[i];
    sq += e * e;
    m.mae += std::fabs(e);
    m.me = std::max(m.me, std::fabs(e));
  }
  const double n = static_cast<double>(y.size());
  m.rmse = std::sqrt(sq / n);
  m.mae /= n;
  return m;
}

std::vector<ResidualSample> build_samples(const std::vector<MeasuredStep>& log,
                                          const VehicleParams& veh, double ts,
                                          int horizon) {
  const int n = horizon;
  if (n < 1) throw std::invalid_argument("build_samples: horizon must be >= 1");
  if (static_cast<int>(log.size()) < n + 1)
    throw std::invalid_argument("build_samples: log shorter than N+1 steps");

  const ContinuousMatrices cm = continuous_matrices(veh);
  std::vector<ResidualSample> out;
  out.reserve(log.size() - n);

  for (std::size_t k = static_cast<std::size_t>(n) - 1; k + 1 < log.size(); ++k) {
    const MeasuredStep& cur = log[k];
    const MeasuredStep& nxt = log[k + 1];
    const LtvMatrices ltv = discretize_and_augment(cm, ts, cur.psi_dot_des);

    const Vec xk = {cur.err.e1, cur.err.e1_dot, cur.err.e2, cur.err.e2_dot,
                    cur.u - cur.du};
    Vec pred = matvec(ltv.ad, xk);
    for (int i = 0; i < 5; ++i) pred[i] += ltv.bd[i] * cur.du + ltv.dd[i];

    ResidualSample s;
    s.eps = {nxt.err.e1 - pred[0], nxt.err.e1_dot - pred[1], nxt.err.e2 - pred[2],
             nxt.err.e2_dot - pred[3]};
    s.window.zn.reserve(4 * n);
    s.window.zc.reserve(n);
    for (std::size_t t = k + 1 - n; t <= k; ++t) {
      s.window.zn.push_back(log[t].err.e1);
      s.window.zn.push_back(log[t].err.e1_dot);
      s.window.zn.push_back(log[t].err.e2);
      s.window.zn.push_back(log[t].err.e2_dot);
      s.window.zc.push_back(log[t].du);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Mat fit_leaf_linear(const std::vector<ResidualSample>& samples,
                    const std::vector<int>& index, double ridge, int horizon) {
  if (index.empty()) throw std::invalid_argument("fit_leaf_linear: no samples");
  const std::size_t dim = static_cast<std::size_t>(horizon) + 1;

  Mat x(index.size(), dim);
  Mat e(index.size(), 4);
  for (std::size_t r = 0; r < index.size(); ++r) {
    const ResidualSample& s = samples[static_cast<std::size_t>(index[r])];
    x(r, 0) = 1.0;
    for (int p = 0; p < horizon; ++p) x(r, static_cast<std::size_t>(p) + 1) = s.window.zc[p];
    for (int q = 0; q < 4; ++q) e(r, q) = s.eps[q];
  }

  Mat m = gram(x, {});
  for (std::size_t i = 1; i < dim; ++i) m(i, i) += ridge;  // intercept unpenalized
  Cholesky ch;
  if (!ch.factor(m)) throw std::runtime_error("fit_leaf_linear: normal equations not PD");

  Mat rhs = matmul_tn(x, e);  // dim x 4
  Mat theta(dim, 4);
  Vec col(dim);
  for (int q = 0; q < 4; ++q) {
    for (std::size_t i = 0; i < dim; ++i) col[i] = rhs(i, q);
    ch.solve_in_place(col);
    for (std::size_t i = 0; i < dim; ++i) theta(i, q) = col[i];
  }
  return theta;
}

namespace {

// Recursive CART builder shared by the public fit_tree and the forest fit.
struct TreeBuilder {
  const std::vector<ResidualSample>& samples;
  const ForestConfig& cfg;
  Rng& rng;
  std::array<double, 4> inv_var;  // split-cost normalization per output
  int zn_dim;
  Tree tree;

  int features_per_split() const {
    const int fc = static_cast<int>(
        std::llround(cfg.feature_fraction * static_cast<double>(zn_dim)));
    return std::clamp(fc, 1, zn_dim);
  }

  // Standardized total SSE of the labels at a node (two-pass, centered: the
  // zero-variance stop must see an exact zero for constant labels).
  double node_cost(const std::vector<int>& idx) const {
    double total = 0.0;
    for (int q = 0; q < 4; ++q) {
      double s = 0.0;
      for (int i : idx) s += samples[static_cast<std::size_t>(i)].eps[q];
      const double mean = s / static_cast<double>(idx.size());
      double sse = 0.0;
      for (int i : idx) {
        const double d = samples[static_cast<std::size_t>(i)].eps[q] - mean;
        sse += d * d;
      }
      total += sse * inv_var[q];
    }
    return total;
  }

  int make_leaf(const std::vector<int>& idx) {
    TreeNode node;
    node.theta = fit_leaf_linear(samples, idx, cfg.ridge, cfg.horizon);
    node.n_samples = static_cast<int>(idx.size());
    for (int q = 0; q < 4; ++q) {
      double s = 0.0;
      for (int i : idx) s += samples[static_cast<std::size_t>(i)].eps[q];
      node.mean_label[q] = s / static_cast<double>(idx.size());
    }
    tree.nodes.push_back(std::move(node));
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  int build(std::vector<int>& idx, int depth) {
    const int n = static_cast<int>(idx.size());
    if (depth >= cfg.max_depth || n < 2 * cfg.min_leaf || node_cost(idx) <= 1e-12)
      return make_leaf(idx);

    // Per-split feature subsample, drawn then scanned in ascending order so
    // cost ties resolve to the lowest feature index.
    const int fc = features_per_split();
    std::vector<int> pool(static_cast<std::size_t>(zn_dim));
    for (int i = 0; i < zn_dim; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < fc; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) + rng.index(static_cast<std::uint64_t>(zn_dim - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    std::vector<int> feats(pool.begin(), pool.begin() + fc);
    std::sort(feats.begin(), feats.end());

    double best_cost = 1e300;
    int best_feat = -1;
    double best_thr = 0.0;

    std::vector<std::pair<double, int>> vals(static_cast<std::size_t>(n));
    for (int f : feats) {
      for (int i = 0; i < n; ++i) {
        const int si = idx[static_cast<std::size_t>(i)];
        vals[static_cast<std::size_t>(i)] = {
            samples[static_cast<std::size_t>(si)].window.zn[static_cast<std::size_t>(f)], si};
      }
      std::sort(vals.begin(), vals.end());

      // prefix sums per output over the sorted order
      std::array<double, 4> sl{}, sl2{};
      std::array<double, 4> st{}, st2{};
      for (int i = 0; i < n; ++i)
        for (int q = 0; q < 4; ++q) {
          const double v = samples[static_cast<std::size_t>(vals[static_cast<std::size_t>(i)].second)].eps[q];
          st[q] += v;
          st2[q] += v * v;
        }
      for (int p = 1; p < n; ++p) {
        const double vprev = vals[static_cast<std::size_t>(p - 1)].first;
        const double vcur = vals[static_cast<std::size_t>(p)].first;
        for (int q = 0; q < 4; ++q) {
          const double v = samples[static_cast<std::size_t>(vals[static_cast<std::size_t>(p - 1)].second)].eps[q];
          sl[q] += v;
          sl2[q] += v * v;
        }
        if (p < cfg.min_leaf || n - p < cfg.min_leaf) continue;
        if (!(vprev < vcur)) continue;
        const double thr = vprev + 0.5 * (vcur - vprev);
        if (!(thr > vprev)) continue;  // adjacent doubles: midpoint collapsed

        double cost = 0.0;
        for (int q = 0; q < 4; ++q) {
          const double nr = static_cast<double>(n - p);
          const double nl = static_cast<double>(p);
          const double sse_l = sl2[q] - sl[q] * sl[q] / nl;
          const double sse_r = (st2[q] - sl2[q]) - (st[q] - sl[q]) * (st[q] - sl[q]) / nr;
          cost += (sse_l + sse_r) * inv_var[q];
        }
        if (cost < best_cost) {
          best_cost = cost;
          best_feat = f;
          best_thr = thr;
        }
      }
    }

    if (best_feat < 0) return make_leaf(idx);

    std::vector<int> left_idx, right_idx;
    left_idx.reserve(idx.size());
    right_idx.reserve(idx.size());
    for (int i : idx) {
      if (samples[static_cast<std::size_t>(i)].window.zn[static_cast<std::size_t>(best_feat)] <
          best_thr)
        left_idx.push_back(i);
      else
        right_idx.push_back(i);
    }

    TreeNode node;
    node.feature = best_feat;
    node.threshold = best_thr;
    tree.nodes.push_back(std::move(node));
    const int me = static_cast<int>(tree.nodes.size()) - 1;
    const int l = build(left_idx, depth + 1);
    const int r = build(right_idx, depth + 1);
    tree.nodes[static_cast<std::size_t>(me)].left = l;
    tree.nodes[static_cast<std::size_t>(me)].right = r;
    return me;
  }
};

std::array<double, 4> output_inv_variance(const std::vector<ResidualSample>& samples) {
  std::array<double, 4> inv{};
  const double n = static_cast<double>(samples.size());
  for (int q = 0; q < 4; ++q) {
    double s = 0.0;
    for (const ResidualSample& smp : samples) s += smp.eps[q];
    const double mean = s / n;
    double var = 0.0;
    for (const ResidualSample& smp : samples) {
      const double d = smp.eps[q] - mean;
      var += d * d;
    }
    var /= n;
    inv[q] = var > 1e-30 ? 1.0 / var : 0.0;
  }
  return inv;
}

Tree fit_tree_on(const std::vector<ResidualSample>& samples, std::vector<int> idx,
                 const ForestConfig& cfg, Rng& rng,
                 const std::array<double, 4>& inv_var) {
  TreeBuilder b{samples, cfg, rng, inv_var, 4 * cfg.horizon, {}};
  b.build(idx, 0);
  return std::move(b.tree);
}

int route_to_leaf(const Tree& tree, const Vec& zn, int* visits = nullptr) {
  int node = 0;
  int seen = 1;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& t = tree.nodes[static_cast<std::size_t>(node)];
    node = zn[static_cast<std::size_t>(t.feature)] < t.threshold ? t.left : t.right;
    ++seen;
  }
  if (visits) *visits += seen;
  return node;
}

void check_sample_dims(const std::vector<ResidualSample>& samples, int horizon) {
  for (const ResidualSample& s : samples) {
    if (s.window.zn.size() != static_cast<std::size_t>(4 * horizon) ||
        s.window.zc.size() != static_cast<std::size_t>(horizon))
      throw std::invalid_argument("samples do not match the configured horizon");
    if (!s.window.finite() || !std::isfinite(s.eps[0]) || !std::isfinite(s.eps[1]) ||
        !std::isfinite(s.eps[2]) || !std::isfinite(s.eps[3]))
      throw std::invalid_argument("samples contain non-finite values");
  }
}

}  // namespace

Tree fit_tree(const std::vector<ResidualSample>& samples, const ForestConfig& cfg,
              Rng& rng) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("fit_tree: empty sample set");
  check_sample_dims(samples, cfg.horizon);
  std::vector<int> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return fit_tree_on(samples, std::move(idx), cfg, rng, output_inv_variance(samples));
}

ResidualForest ResidualForest::fit(const std::vector<ResidualSample>& samples,
                                   const ForestConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(samples.size()) < cfg.min_leaf)
    throw std::invalid_argument("ResidualForest::fit: need at least min_leaf samples");
  check_sample_dims(samples, cfg.horizon);

  const std::size_t zn_dim = static_cast<std::size_t>(4 * cfg.horizon);
  ResidualForest forest;
  forest.cfg_ = cfg;
  forest.mean_.assign(zn_dim, 0.0);
  forest.scale_.assign(zn_dim, 1.0);

  const double n = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < zn_dim; ++j) {
    double s = 0.0, s2 = 0.0;
    for (const ResidualSample& smp : samples) {
      s += smp.window.zn[j];
      s2 += smp.window.zn[j] * smp.window.zn[j];
    }
    forest.mean_[j] = s / n;
    const double var = s2 / n - forest.mean_[j] * forest.mean_[j];
    forest.scale_[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }

  // Trees operate on standardized zn; zc and labels stay raw so the leaf
  // coefficients feed the evolution matrices directly.
  std::vector<ResidualSample> std_samples = samples;
  for (ResidualSample& smp : std_samples)
    for (std::size_t j = 0; j < zn_dim; ++j)
      smp.window.zn[j] = (smp.window.zn[j] - forest.mean_[j]) / forest.scale_[j];

  const std::array<double, 4> inv_var = output_inv_variance(std_samples);

  forest.trees_.reserve(static_cast<std::size_t>(cfg.n_trees));
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng stream = Rng::stream(cfg.seed, static_cast<std::uint64_t>(t));
    std::vector<int> idx(std_samples.size());
    if (cfg.bootstrap) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = static_cast<int>(stream.index(std_samples.size()));
    } else {
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    }
    forest.trees_.push_back(fit_tree_on(std_samples, std::move(idx), cfg, stream, inv_var));
  }
  forest.fitted_ = true;
  return forest;
}

Vec ResidualForest::standardize(const Vec& zn) const {
  if (zn.size() != mean_.size())
    throw std::invalid_argument("ResidualForest: zn has the wrong length");
  Vec out(zn.size());
  for (std::size_t j = 0; j < zn.size(); ++j) out[j] = (zn[j] - mean_[j]) / scale_[j];
  return out;
}

Mat ResidualForest::predict_leaf(const Vec& zn) const {
  if (!fitted_) throw std::logic_error("ResidualForest: not fitted");
  const Vec z = standardize(zn);
  Mat acc(static_cast<std::size_t>(cfg_.horizon) + 1, 4);
  for (const Tree& tree : trees_) {
    const int leaf = route_to_leaf(tree, z);
    add_in_place(acc, tree.nodes[static_cast<std::size_t>(leaf)].theta);
  }
  kernels::scal(1.0 / static_cast<double>(trees_.size()), acc.data(),
                acc.rows() * acc.cols());
  return acc;
}

std::array<double, 4> ResidualForest::predict_residue(const FeatureWindow& w) const {
  const Mat theta = predict_leaf(w.zn);
  std::array<double, 4> out{};
  for (int q = 0; q < 4; ++q) {
    double v = theta(0, static_cast<std::size_t>(q));
    for (int p = 0; p < cfg_.horizon; ++p)
      v += theta(static_cast<std::size_t>(p) + 1, static_cast<std::size_t>(q)) *
           w.zc[static_cast<std::size_t>(p)];
    out[static_cast<std::size_t>(q)] = v;
  }
  return out;
}

std::array<double, 4> ResidualForest::predict_residue_mean(const Vec& zn) const {
  if (!fitted_) throw std::logic_error("ResidualForest: not fitted");
  const Vec z = standardize(zn);
  std::array<double, 4> acc{};
  for (const Tree& tree : trees_) {
    const int leaf = route_to_leaf(tree, z);
    for (int q = 0; q < 4; ++q)
      acc[static_cast<std::size_t>(q)] +=
          tree.nodes[static_cast<std::size_t>(leaf)].mean_label[static_cast<std::size_t>(q)];
  }
  for (double& v : acc) v /= static_cast<double>(trees_.size());
  return acc;
}

std::vector<int> ResidualForest::leaf_ids(const Vec& zn) const {
  if (!fitted_) throw std::logic_error("ResidualForest: not fitted");
  const Vec z = standardize(zn);
  std::vector<int> ids;
  ids.reserve(trees_.size());
  for (const Tree& tree : trees_) ids.push_back(route_to_leaf(tree, z));
  return ids;
}

int ResidualForest::route_node_visits(const Vec& zn) const {
  if (!fitted_) throw std::logic_error("ResidualForest: not fitted");
  const Vec z = standardize(zn);
  int visits = 0;
  for (const Tree& tree : trees_) route_to_leaf(tree, z, &visits);
  return visits;
}

std::string ResidualForest::to_json() const {
  if (!fitted_) throw std::logic_error("ResidualForest: not fitted");
  ordered_json root;
  root["config"] = {
      {"trees", cfg_.n_trees},
      {"depth", cfg_.max_depth},
      {"min_leaf", cfg_.min_leaf},
      {"feature_fraction", cfg_.feature_fraction},
      {"bootstrap", cfg_.bootstrap},
      {"ridge", cfg_.ridge},
      {"seed", cfg_.seed},
      {"horizon", cfg_.horizon},
  };
  root["standardization"] = {{"mean", mean_}, {"scale", scale_}};

  ordered_json trees = ordered_json::array();
  for (const Tree& tree : trees_) {
    ordered_json nodes = ordered_json::array();
    for (const TreeNode& nd : tree.nodes) {
      if (nd.feature >= 0) {
        nodes.push_back({{"f", nd.feature}, {"t", nd.threshold}, {"l", nd.left}, {"r", nd.right}});
      } else {
        ordered_json theta = ordered_json::array();
        for (std::size_t i = 0; i < nd.theta.rows(); ++i) {
          ordered_json row = ordered_json::array();
          for (std::size_t j = 0; j < 4; ++j) row.push_back(nd.theta(i, j));
          theta.push_back(std::move(row));
        }
        nodes.push_back({{"theta", std::move(theta)},
                         {"n", nd.n_samples},
                         {"mean", nd.mean_label}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  root["trees"] = std::move(trees);
  return root.dump();
}

ResidualForest ResidualForest::from_json(const std::string& text) {
  const ordered_json root = ordered_json::parse(text);
  ResidualForest forest;
  const auto& cfg = root.at("config");
  forest.cfg_.n_trees = cfg.at("trees").get<int>();
  forest.cfg_.max_depth = cfg.at("depth").get<int>();
  forest.cfg_.min_leaf = cfg.at("min_leaf").get<int>();
  forest.cfg_.feature_fraction = cfg.at("feature_fraction").get<double>();
  forest.cfg_.bootstrap = cfg.at("bootstrap").get<bool>();
  forest.cfg_.ridge = cfg.at("ridge").get<double>();
  forest.cfg_.seed = cfg.at("seed").get<std::uint64_t>();
  forest.cfg_.horizon = cfg.at("horizon").get<int>();
  forest.cfg_.validate();

  forest.mean_ = root.at("standardization").at("mean").get<Vec>();
  forest.scale_ = root.at("standardization").at("scale").get<Vec>();
  const std::size_t zn_dim = static_cast<std::size_t>(4 * forest.cfg_.horizon);
  if (forest.mean_.size() != zn_dim || forest.scale_.size() != zn_dim)
    throw std::runtime_error("model file: standardization length mismatch");

  for (const auto& jt : root.at("trees")) {
    Tree tree;
    for (const auto& jn : jt) {
      TreeNode nd;
      if (jn.contains("f")) {
        nd.feature = jn.at("f").get<int>();
        nd.threshold = jn.at("t").get<double>();
        nd.left = jn.at("l").get<int>();
        nd.right = jn.at("r").get<int>();
      } else {
        const auto& theta = jn.at("theta");
        nd.theta = Mat(static_cast<std::size_t>(forest.cfg_.horizon) + 1, 4);
        if (theta.size() != nd.theta.rows())
          throw std::runtime_error("model file: theta row count mismatch");
        for (std::size_t i = 0; i < nd.theta.rows(); ++i)
          for (std::size_t j = 0; j < 4; ++j) nd.theta(i, j) = theta.at(i).at(j).get<double>();
        nd.n_samples = jn.at("n").get<int>();
        const auto& mean = jn.at("mean");
        for (std::size_t q = 0; q < 4; ++q) nd.mean_label[q] = mean.at(q).get<double>();
      }
      tree.nodes.push_back(std::move(nd));
    }
    if (tree.nodes.empty()) throw std::runtime_error("model file: empty tree");
    const int count = static_cast<int>(tree.nodes.size());
    for (const TreeNode& nd : tree.nodes) {
      if (nd.feature < 0) continue;
      if (nd.feature >= 4 * forest.cfg_.horizon)
        throw std::runtime_error("model file: split feature out of range");
      if (nd.left < 0 || nd.left >= count || nd.right < 0 || nd.right >= count)
        throw std::runtime_error("model file: child index out of range");
    }
    forest.trees_.push_back(std::move(tree));
  }
  if (static_cast<int>(forest.trees_.size()) != forest.cfg_.n_trees)
    throw std::runtime_error("model file: tree count mismatch");
  forest.fitted_ = true;
  return forest;
}

void ResidualForest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open model file for writing: " + path);
  out << to_json();
  if (!out) throw std::runtime_error("failed writing model file: " + path);
}

ResidualForest ResidualForest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void write_dataset_csv(const std::string& path,
                       const std::vector<ResidualSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("write_dataset_csv: no samples");
  const std::size_t zn = samples.front().window.zn.size();
  const std::size_t zc = samples.front().window.zc.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path);
  out << "k";
  for (std::size_t j = 0; j < zn; ++j) out << ",zn_" << j;
  for (std::size_t j = 0; j < zc; ++j) out << ",zc_" << j;
  for (int q = 0; q < 4; ++q) out << ",eps_" << q;
  out << "\n";
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const ResidualSample& s = samples[k];
    out << k;
    for (double v : s.window.zn) out << ',' << format_double(v);
    for (double v : s.window.zc) out << ',' << format_double(v);
    for (double v : s.eps) out << ',' << format_double(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing dataset file: " + path);
}

std::vector<ResidualSample> read_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("dataset csv is empty: " + path);

  std::size_t zn = 0, zc = 0, eps = 0;
  {
    std::stringstream hs(header);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        if (col != "k") throw std::runtime_error("dataset csv: header must start with k");
        first = false;
      } else if (col.rfind("zn_", 0) == 0) {
        ++zn;
      } else if (col.rfind("zc_", 0) == 0) {
        ++zc;
      } else if (col.rfind("eps_", 0) == 0) {
        ++eps;
      } else {
        throw std::runtime_error("dataset csv: unexpected column '" + col + "'");
      }
    }
  }
  if (zc == 0 || zn != 4 * zc || eps != 4)
    throw std::runtime_error("dataset csv: malformed header");

  std::vector<ResidualSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 1 + zn + zc + 4)
      throw std::runtime_error("dataset csv: wrong column count in a row");
    ResidualSample s;
    std::size_t c = 1;
    for (std::size_t j = 0; j < zn; ++j) s.window.zn.push_back(parse_double(cells[c++]));
    for (std::size_t j = 0; j < zc; ++j) s.window.zc.push_back(parse_double(cells[c++]));
    for (std::size_t q = 0; q < 4; ++q) s.eps[q] = parse_double(cells[c++]);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw std::runtime_error("dataset csv has no data rows: " + path);
  return samples;
}

}  // namespace rfmpc
