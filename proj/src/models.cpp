#include "labrisk/models.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace labrisk::models {

using nlohmann::json;

std::string family_name(Family f) {
  switch (f) {
    case Family::logreg: return "logreg";
    case Family::svm_rbf: return "svm_rbf";
    case Family::random_forest: return "random_forest";
    case Family::extra_trees: return "extra_trees";
    case Family::gradient_boosting: return "gradient_boosting";
  }
  return "unknown";
}

Family family_from_name(const std::string& name) {
  if (name == "logreg") return Family::logreg;
  if (name == "svm_rbf") return Family::svm_rbf;
  if (name == "random_forest") return Family::random_forest;
  if (name == "extra_trees") return Family::extra_trees;
  if (name == "gradient_boosting") return Family::gradient_boosting;
  throw ConfigError("unknown model family: " + name);
}

double Hyperparams::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing hyperparameter: " + key);
  return it->second;
}

double Hyperparams::get_or(const std::string& key, double fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

int resolve_features_per_split(FeatureSubset mode, int d) {
  switch (mode) {
    case FeatureSubset::sqrt_d:
      return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
    case FeatureSubset::third_d: return std::max(1, d / 3);
    case FeatureSubset::all_d: return d;
  }
  return d;
}

double logistic_loss(const Vector& scores, const IntVector& y) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    double s = scores[i];
    double softplus = std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s)));
    sum += softplus - static_cast<double>(y[i]) * s;
  }
  return sum / static_cast<double>(scores.size());
}

void Model::check_dim(const Matrix& X) const {
  if (X.cols() != input_dim())
    throw DataError("predict_proba: expected " + std::to_string(input_dim()) +
                    " features, got " + std::to_string(X.cols()));
}

// ---------------------------------------------------------------------------
// CART core
// ---------------------------------------------------------------------------

double Tree::predict_row(const Matrix& X, Eigen::Index row) const {
  int node = 0;
  while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
    node = X(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(node)].leaf_value;
}

int Tree::depth() const {
  std::function<int(int)> walk = [&](int i) -> int {
    const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
    if (nd.is_leaf()) return 0;
    return 1 + std::max(walk(nd.left), walk(nd.right));
  };
  return nodes.empty() ? 0 : walk(0);
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double decrease = 0.0;  // SSE decrease; doubled for gini reporting
};

double node_sse(double sum, double sumsq, double n) { return sumsq - sum * sum / n; }

struct CartBuilder {
  const Matrix& X;
  const Vector& t;
  const CartParams& params;
  Rng& rng;
  const LeafValueFn& leaf_value;
  Tree tree;

  int build(std::vector<Eigen::Index>& rows, int depth) {
    const auto m = static_cast<double>(rows.size());
    double sum = 0.0, sumsq = 0.0;
    for (Eigen::Index r : rows) {
      sum += t[r];
      sumsq += t[r] * t[r];
    }
    bool pure = node_sse(sum, sumsq, m) <= 0.0;

    SplitChoice best;
    if (!pure && depth < params.max_depth &&
        rows.size() >= 2 * static_cast<std::size_t>(params.min_samples_leaf))
      best = find_split(rows, sum, sumsq);

    int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best.feature < 0) {
      tree.nodes[static_cast<std::size_t>(idx)].leaf_value =
          leaf_value ? leaf_value(rows) : sum / m;
      return idx;
    }

    std::vector<Eigen::Index> left, right;
    for (Eigen::Index r : rows) {
      (X(r, best.feature) <= best.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    int l = build(left, depth + 1);
    int r = build(right, depth + 1);
    TreeNode& nd = tree.nodes[static_cast<std::size_t>(idx)];
    nd.feature = best.feature;
    nd.threshold = best.threshold;
    nd.left = l;
    nd.right = r;
    nd.impurity_decrease =
        params.criterion == Criterion::gini ? 2.0 * best.decrease : best.decrease;
    return idx;
  }

  std::vector<int> candidate_features() {
    const int d = static_cast<int>(X.cols());
    int k = params.features_per_split > 0 ? std::min(params.features_per_split, d) : d;
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    if (k < d) {
      // Partial Fisher-Yates, then ascending order for deterministic tie-breaks.
      for (int i = 0; i < k; ++i) {
        auto j = static_cast<std::size_t>(i) +
                 static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(d - i)));
        std::swap(features[static_cast<std::size_t>(i)], features[j]);
      }
      features.resize(static_cast<std::size_t>(k));
      std::sort(features.begin(), features.end());
    }
    return features;
  }

  SplitChoice find_split(const std::vector<Eigen::Index>& rows, double total_sum,
                         double total_sumsq) {
    SplitChoice best;
    const auto m = static_cast<double>(rows.size());
    const double total_sse = node_sse(total_sum, total_sumsq, m);
    const int msl = params.min_samples_leaf;
    std::vector<std::pair<double, double>> pairs;  // (x, target)

    for (int f : candidate_features()) {
      if (params.split_mode == SplitMode::exhaustive) {
        pairs.clear();
        pairs.reserve(rows.size());
        for (Eigen::Index r : rows) pairs.emplace_back(X(r, f), t[r]);
        std::sort(pairs.begin(), pairs.end());
        double lsum = 0.0, lsumsq = 0.0;
        for (std::size_t k = 1; k < pairs.size(); ++k) {
          lsum += pairs[k - 1].second;
          lsumsq += pairs[k - 1].second * pairs[k - 1].second;
          if (pairs[k - 1].first == pairs[k].first) continue;  // not a boundary
          long nl = static_cast<long>(k), nr = static_cast<long>(pairs.size() - k);
          if (nl < msl || nr < msl) continue;
          double sse = node_sse(lsum, lsumsq, static_cast<double>(nl)) +
                       node_sse(total_sum - lsum, total_sumsq - lsumsq, static_cast<double>(nr));
          double decrease = total_sse - sse;
          if (decrease > best.decrease) {
            double thr = 0.5 * (pairs[k - 1].first + pairs[k].first);
            if (thr == pairs[k].first) thr = pairs[k - 1].first;  // adjacent floats
            best = {f, thr, decrease};
          }
        }
      } else {
        double lo = X(rows[0], f), hi = lo;
        for (Eigen::Index r : rows) {
          lo = std::min(lo, X(r, f));
          hi = std::max(hi, X(r, f));
        }
        if (lo == hi) continue;
        double thr = rng.uniform_real(lo, hi);
        double lsum = 0.0, lsumsq = 0.0;
        long nl = 0;
        for (Eigen::Index r : rows) {
          if (X(r, f) <= thr) {
            lsum += t[r];
            lsumsq += t[r] * t[r];
            ++nl;
          }
        }
        long nr = static_cast<long>(rows.size()) - nl;
        if (nl < msl || nr < msl || nl == 0 || nr == 0) continue;
        double sse = node_sse(lsum, lsumsq, static_cast<double>(nl)) +
                     node_sse(total_sum - lsum, total_sumsq - lsumsq, static_cast<double>(nr));
        double decrease = total_sse - sse;
        if (decrease > best.decrease) best = {f, thr, decrease};
      }
    }
    return best;
  }
};

}  // namespace

Tree train_cart(const Matrix& X, const Vector& targets, const std::vector<Eigen::Index>& rows,
                const CartParams& params, Rng& rng, const LeafValueFn& leaf_value) {
  if (rows.empty()) throw DataError("train_cart: empty row set");
  CartBuilder builder{X, targets, params, rng, leaf_value, {}};
  std::vector<Eigen::Index> work = rows;
  builder.build(work, 0);
  return std::move(builder.tree);
}

namespace {

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const auto& nd : tree.nodes)
    nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.leaf_value,
                     nd.impurity_decrease});
  return nodes;
}

Tree tree_from_json(const json& j) {
  Tree tree;
  for (const auto& nj : j) {
    TreeNode nd;
    nd.feature = nj[0].get<int>();
    nd.threshold = nj[1].get<double>();
    nd.left = nj[2].get<int>();
    nd.right = nj[3].get<int>();
    nd.leaf_value = nj[4].get<double>();
    nd.impurity_decrease = nj[5].get<double>();
    tree.nodes.push_back(nd);
  }
  return tree;
}

Vector tree_importances(const std::vector<Tree>& trees, Eigen::Index d) {
  Vector imp = Vector::Zero(d);
  for (const auto& tree : trees)
    for (const auto& nd : tree.nodes)
      if (!nd.is_leaf()) imp[nd.feature] += nd.impurity_decrease;
  double total = imp.sum();
  if (total > 0.0) imp /= total;
  return imp;
}

// ---------------------------------------------------------------------------
// Logistic regression: full-batch gradient descent with backtracking.
// ---------------------------------------------------------------------------

class LogregModel final : public Model {
 public:
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;
  bool converged_flag = true;

  Family family() const override { return Family::logreg; }
  Eigen::Index input_dim() const override { return weights.size(); }
  bool converged() const override { return converged_flag; }

  Vector predict_proba(const Matrix& X) const override {
    check_dim(X);
    Vector scores = (X * weights).array() + intercept;
    return scores.unaryExpr([](double s) { return sigmoid(s); });
  }

  json to_json() const override {
    return {{"family", "logreg"},
            {"weights", std::vector<double>(weights.begin(), weights.end())},
            {"intercept", intercept},
            {"lambda", lambda},
            {"converged", converged_flag}};
  }
};

// ---------------------------------------------------------------------------
// SVM with RBF kernel: SMO on the soft-margin dual, Platt-scaled outputs.
// ---------------------------------------------------------------------------

class SvmModel final : public Model {
 public:
  Matrix support_vectors;  // rows with nonzero alpha
  Vector dual_coef;        // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0;
  double platt_a = 0.0, platt_b = 0.0;
  bool converged_flag = true;

  Family family() const override { return Family::svm_rbf; }
  Eigen::Index input_dim() const override { return support_vectors.cols(); }
  bool converged() const override { return converged_flag; }

  double decision_value(const Matrix& X, Eigen::Index row) const {
    double f = bias;
    for (Eigen::Index s = 0; s < support_vectors.rows(); ++s) {
      double sq = (support_vectors.row(s) - X.row(row)).squaredNorm();
      f += dual_coef[s] * std::exp(-gamma * sq);
    }
    return f;
  }

  Vector predict_proba(const Matrix& X) const override {
    check_dim(X);
    Vector out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      double f = decision_value(X, i);
      out[i] = 1.0 / (1.0 + std::exp(platt_a * f + platt_b));
    }
    return out;
  }

  json to_json() const override {
    json sv = json::array();
    for (Eigen::Index i = 0; i < support_vectors.rows(); ++i)
      sv.push_back(std::vector<double>(support_vectors.row(i).begin(),
                                       support_vectors.row(i).end()));
    return {{"family", "svm_rbf"},
            {"support_vectors", sv},
            {"dual_coef", std::vector<double>(dual_coef.begin(), dual_coef.end())},
            {"bias", bias},
            {"gamma", gamma},
            {"platt_a", platt_a},
            {"platt_b", platt_b},
            {"dim", support_vectors.cols()},
            {"converged", converged_flag}};
  }
};

// ---------------------------------------------------------------------------
// Tree ensembles
// ---------------------------------------------------------------------------

class ForestModel final : public Model {
 public:
  Family fam = Family::random_forest;
  std::vector<Tree> trees;
  Eigen::Index d = 0;

  Family family() const override { return fam; }
  Eigen::Index input_dim() const override { return d; }

  Vector predict_proba(const Matrix& X) const override {
    check_dim(X);
    Vector out = Vector::Zero(X.rows());
    for (const auto& tree : trees)
      for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] += tree.predict_row(X, i);
    out /= static_cast<double>(trees.size());
    return out;
  }

  std::optional<Vector> feature_importance() const override {
    return tree_importances(trees, d);
  }

  json to_json() const override {
    json tj = json::array();
    for (const auto& tree : trees) tj.push_back(tree_to_json(tree));
    return {{"family", family_name(fam)}, {"dim", d}, {"trees", tj}};
  }
};

class GbmModel final : public Model {
 public:
  double base_score = 0.0;  // prevalence log-odds
  double learning_rate = 0.1;
  std::vector<Tree> trees;
  Eigen::Index d = 0;
  bool early_stopped = false;

  Family family() const override { return Family::gradient_boosting; }
  Eigen::Index input_dim() const override { return d; }

  Vector raw_scores(const Matrix& X) const {
    Vector scores = Vector::Constant(X.rows(), base_score);
    for (const auto& tree : trees)
      for (Eigen::Index i = 0; i < X.rows(); ++i)
        scores[i] += learning_rate * tree.predict_row(X, i);
    return scores;
  }

  Vector predict_proba(const Matrix& X) const override {
    check_dim(X);
    return raw_scores(X).unaryExpr([](double s) { return sigmoid(s); });
  }

  std::optional<Vector> feature_importance() const override {
    return tree_importances(trees, d);
  }

  json to_json() const override {
    json tj = json::array();
    for (const auto& tree : trees) tj.push_back(tree_to_json(tree));
    return {{"family", "gradient_boosting"},
            {"dim", d},
            {"base_score", base_score},
            {"learning_rate", learning_rate},
            {"early_stopped", early_stopped},
            {"trees", tj}};
  }
};

void require_both_classes(const IntVector& y) {
  long pos = y.sum();
  if (pos == 0 || pos == y.size()) throw DataError("training labels contain one class only");
}

}  // namespace

std::unique_ptr<Model> train_logreg(const Matrix& X, const IntVector& y, const Hyperparams& hp) {
  require_both_classes(y);
  const double lambda = hp.get("l2_lambda");
  const int max_iter = static_cast<int>(hp.get_or("max_iter", 4000));
  const double tol = hp.get_or("tol", 1e-7);
  const auto n = static_cast<double>(X.rows());

  auto model = std::make_unique<LogregModel>();
  model->weights = Vector::Zero(X.cols());
  model->lambda = lambda;
  double& b = model->intercept;
  Vector& w = model->weights;
  Vector yd = y.cast<double>();

  auto loss_at = [&](const Vector& wv, double bv) {
    Vector scores = (X * wv).array() + bv;
    double l = logistic_loss(scores, y);
    return l + 0.5 * lambda * wv.squaredNorm();
  };

  double loss = loss_at(w, b);
  if (!std::isfinite(loss)) throw DataError("train_logreg: non-finite loss");
  model->converged_flag = false;
  for (int it = 0; it < max_iter; ++it) {
    Vector probs = ((X * w).array() + b).unaryExpr([](double s) { return sigmoid(s); });
    Vector resid = probs - yd;
    Vector gw = X.transpose() * resid / n + lambda * w;
    double gb = resid.sum() / n;
    double gnorm = std::max(gw.cwiseAbs().maxCoeff(), std::abs(gb));
    if (gnorm < tol) {
      model->converged_flag = true;
      break;
    }
    double gsq = gw.squaredNorm() + gb * gb;
    double step = 1.0;
    double new_loss = loss;
    Vector w_try;
    double b_try = b;
    for (int ls = 0; ls < 60; ++ls) {
      w_try = w - step * gw;
      b_try = b - step * gb;
      new_loss = loss_at(w_try, b_try);
      if (new_loss <= loss - 1e-4 * step * gsq) break;
      step *= 0.5;
    }
    assert(new_loss <= loss + 1e-12);  // monotone under accepted line-search steps
    if (!std::isfinite(new_loss)) throw DataError("train_logreg: non-finite loss");
    w = w_try;
    b = b_try;
    loss = new_loss;
  }
  return model;
}

namespace {

// Platt's sigmoid fit on decision values (robust Newton per Lin et al.).
std::pair<double, double> fit_platt(const Vector& decision, const IntVector& y) {
  const Eigen::Index n = decision.size();
  double prior1 = static_cast<double>(y.sum());
  double prior0 = static_cast<double>(n) - prior1;
  double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
  double lo_target = 1.0 / (prior0 + 2.0);
  std::vector<double> t(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    t[static_cast<std::size_t>(i)] = y[i] == 1 ? hi_target : lo_target;

  double a = 0.0;
  double bb = std::log((prior0 + 1.0) / (prior1 + 1.0));
  auto objective = [&](double av, double bv) {
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double f = av * decision[i] + bv;
      double ti = t[static_cast<std::size_t>(i)];
      if (f >= 0)
        obj += ti * f + std::log1p(std::exp(-f));
      else
        obj += (ti - 1.0) * f + std::log1p(std::exp(f));
    }
    return obj;
  };
  double fval = objective(a, bb);
  for (int it = 0; it < 100; ++it) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double f = a * decision[i] + bb;
      double p = f >= 0 ? std::exp(-f) / (1.0 + std::exp(-f)) : 1.0 / (1.0 + std::exp(f));
      double q = 1.0 - p;
      double d2 = p * q;
      h11 += decision[i] * decision[i] * d2;
      h22 += d2;
      h21 += decision[i] * d2;
      double d1 = t[static_cast<std::size_t>(i)] - p;
      g1 += decision[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    double det = h11 * h22 - h21 * h21;
    double da = -(h22 * g1 - h21 * g2) / det;
    double db = -(-h21 * g1 + h11 * g2) / det;
    double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= 1e-10) {
      double new_f = objective(a + step * da, bb + step * db);
      if (new_f < fval + 1e-4 * step * gd) {
        a += step * da;
        bb += step * db;
        fval = new_f;
        break;
      }
      step /= 2.0;
    }
    if (step < 1e-10) break;
  }
  return {a, bb};
}

}  // namespace

std::unique_ptr<Model> train_svm_rbf(const Matrix& X, const IntVector& y, const Hyperparams& hp) {
  require_both_classes(y);
  const double C = hp.get("C");
  const double gamma = hp.get("gamma");
  const double tol = hp.get_or("tol", 1e-3);
  const Eigen::Index n = X.rows();

  Vector ys(n);
  for (Eigen::Index i = 0; i < n; ++i) ys[i] = y[i] == 1 ? 1.0 : -1.0;

  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double sq = (X.row(i) - X.row(j)).squaredNorm();
      K(i, j) = K(j, i) = std::exp(-gamma * sq);
    }
  }

  Vector alpha = Vector::Zero(n);
  Vector f = Vector::Zero(n);  // sum_j alpha_j y_j K_ij
  const long max_pair_updates = 200000;
  bool converged = false;
  for (long iter = 0; iter < max_pair_updates; ++iter) {
    // Most-violating pair over -E = y - f.
    double m_up = -1e100, m_low = 1e100;
    Eigen::Index i = -1, j = -1;
    for (Eigen::Index k = 0; k < n; ++k) {
      double v = ys[k] - f[k];
      bool in_up = (ys[k] > 0 && alpha[k] < C) || (ys[k] < 0 && alpha[k] > 0);
      bool in_low = (ys[k] > 0 && alpha[k] > 0) || (ys[k] < 0 && alpha[k] < C);
      if (in_up && v > m_up) {
        m_up = v;
        i = k;
      }
      if (in_low && v < m_low) {
        m_low = v;
        j = k;
      }
    }
    if (i < 0 || j < 0 || m_up - m_low < tol) {
      converged = i >= 0 && j >= 0;
      break;
    }
    double eta = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (eta <= 1e-12) eta = 1e-12;
    double e_i = f[i] - ys[i], e_j = f[j] - ys[j];
    double aj_new = alpha[j] + ys[j] * (e_i - e_j) / eta;
    double lo, hi;
    if (ys[i] != ys[j]) {
      lo = std::max(0.0, alpha[j] - alpha[i]);
      hi = std::min(C, C + alpha[j] - alpha[i]);
    } else {
      lo = std::max(0.0, alpha[i] + alpha[j] - C);
      hi = std::min(C, alpha[i] + alpha[j]);
    }
    aj_new = std::clamp(aj_new, lo, hi);
    double ai_new = alpha[i] + ys[i] * ys[j] * (alpha[j] - aj_new);
    double dai = ai_new - alpha[i], daj = aj_new - alpha[j];
    if (std::abs(daj) < 1e-14 && std::abs(dai) < 1e-14) {
      converged = true;  // numerically stuck at the optimum
      break;
    }
    alpha[i] = ai_new;
    alpha[j] = aj_new;
    f += dai * ys[i] * K.col(i) + daj * ys[j] * K.col(j);
  }

  // Bias from the KKT band midpoint.
  double m_up = -1e100, m_low = 1e100;
  for (Eigen::Index k = 0; k < n; ++k) {
    double v = ys[k] - f[k];
    bool in_up = (ys[k] > 0 && alpha[k] < C) || (ys[k] < 0 && alpha[k] > 0);
    bool in_low = (ys[k] > 0 && alpha[k] > 0) || (ys[k] < 0 && alpha[k] < C);
    if (in_up) m_up = std::max(m_up, v);
    if (in_low) m_low = std::min(m_low, v);
  }
  double bias = 0.5 * (m_up + m_low);

  auto model = std::make_unique<SvmModel>();
  model->gamma = gamma;
  model->bias = bias;
  model->converged_flag = converged;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index k = 0; k < n; ++k)
    if (alpha[k] > 1e-12) sv.push_back(k);
  model->support_vectors.resize(static_cast<Eigen::Index>(sv.size()), X.cols());
  model->dual_coef.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model->support_vectors.row(static_cast<Eigen::Index>(s)) = X.row(sv[s]);
    model->dual_coef[static_cast<Eigen::Index>(s)] = alpha[sv[s]] * ys[sv[s]];
  }

  Vector decision = f.array() + bias;  // training decision values
  auto [pa, pb] = fit_platt(decision, y);
  model->platt_a = pa;
  model->platt_b = pb;
  return model;
}

namespace {

std::unique_ptr<Model> train_forest_like(const Matrix& X, const IntVector& y,
                                         const Hyperparams& hp, std::uint64_t seed, int workers,
                                         bool bootstrap, SplitMode split_mode, Family fam) {
  require_both_classes(y);
  const int n_trees = static_cast<int>(hp.get("n_trees"));
  CartParams params;
  params.max_depth = static_cast<int>(hp.get("max_depth"));
  params.min_samples_leaf = static_cast<int>(hp.get("min_samples_leaf"));
  params.features_per_split = resolve_features_per_split(
      static_cast<FeatureSubset>(static_cast<int>(hp.get_or("features_mode", 0))),
      static_cast<int>(X.cols()));
  params.split_mode = split_mode;
  params.criterion = Criterion::gini;

  Vector targets = y.cast<double>();
  auto model = std::make_unique<ForestModel>();
  model->fam = fam;
  model->d = X.cols();
  model->trees.resize(static_cast<std::size_t>(n_trees));
  const auto n = static_cast<std::uint64_t>(X.rows());

  parallel_for(static_cast<std::size_t>(n_trees), workers, [&](std::size_t tr) {
    Rng rng = derive_rng(seed, 0x7ee5u, tr);
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(n));
    if (bootstrap) {
      for (std::uint64_t i = 0; i < n; ++i)
        rows.push_back(static_cast<Eigen::Index>(rng.uniform_int(n)));
    } else {
      for (std::uint64_t i = 0; i < n; ++i) rows.push_back(static_cast<Eigen::Index>(i));
    }
    model->trees[tr] = train_cart(X, targets, rows, params, rng);
  });
  return model;
}

}  // namespace

std::unique_ptr<Model> train_random_forest(const Matrix& X, const IntVector& y,
                                           const Hyperparams& hp, std::uint64_t seed,
                                           int workers) {
  return train_forest_like(X, y, hp, seed, workers, /*bootstrap=*/true, SplitMode::exhaustive,
                           Family::random_forest);
}

std::unique_ptr<Model> train_extra_trees(const Matrix& X, const IntVector& y,
                                         const Hyperparams& hp, std::uint64_t seed,
                                         int workers) {
  return train_forest_like(X, y, hp, seed, workers, /*bootstrap=*/false,
                           SplitMode::random_threshold, Family::extra_trees);
}

std::unique_ptr<Model> train_gradient_boosting(const Matrix& X, const IntVector& y,
                                               const Hyperparams& hp, std::uint64_t seed) {
  require_both_classes(y);
  const int n_stages = static_cast<int>(hp.get("n_stages"));
  const double learning_rate = hp.get("learning_rate");
  const double subsample = hp.get_or("subsample", 1.0);
  CartParams params;
  params.max_depth = static_cast<int>(hp.get("max_depth"));
  params.min_samples_leaf = static_cast<int>(hp.get("min_samples_leaf"));
  params.split_mode = SplitMode::exhaustive;
  params.criterion = Criterion::mse;

  const Eigen::Index n = X.rows();
  auto model = std::make_unique<GbmModel>();
  model->d = X.cols();
  model->learning_rate = learning_rate;
  double prevalence = static_cast<double>(y.sum()) / static_cast<double>(n);
  model->base_score = std::log(prevalence / (1.0 - prevalence));

  Vector scores = Vector::Constant(n, model->base_score);
  [[maybe_unused]] double prev_loss = logistic_loss(scores, y);
  for (int stage = 0; stage < n_stages; ++stage) {
    Vector probs = scores.unaryExpr([](double s) { return sigmoid(s); });
    Vector resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid[i] = static_cast<double>(y[i]) - probs[i];
    if (resid.cwiseAbs().maxCoeff() == 0.0) {
      model->early_stopped = true;
      break;
    }

    Rng rng = derive_rng(seed, 0x6b00u, static_cast<std::uint64_t>(stage));
    std::vector<Eigen::Index> rows;
    if (subsample < 1.0) {
      auto k = static_cast<std::size_t>(
          std::max(1.0, std::floor(subsample * static_cast<double>(n))));
      std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      for (std::size_t i = 0; i < k; ++i) {
        auto j = i + static_cast<std::size_t>(
                         rng.uniform_int(static_cast<std::uint64_t>(all.size() - i)));
        std::swap(all[i], all[j]);
      }
      all.resize(k);
      std::sort(all.begin(), all.end());
      rows = std::move(all);
    } else {
      rows.resize(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), 0);
    }

    // One Newton step per leaf: sum(residual) / sum(p(1-p)), guarded.
    auto leaf_value = [&](const std::vector<Eigen::Index>& leaf_rows) {
      double num = 0.0, den = 0.0;
      for (Eigen::Index r : leaf_rows) {
        num += resid[r];
        den += probs[r] * (1.0 - probs[r]);
      }
      return num / std::max(den, 1e-12);
    };
    Tree tree = train_cart(X, resid, rows, params, rng, leaf_value);
    for (Eigen::Index i = 0; i < n; ++i)
      scores[i] += learning_rate * tree.predict_row(X, i);
    model->trees.push_back(std::move(tree));

    double loss = logistic_loss(scores, y);
    if (subsample >= 1.0 && learning_rate <= 1.0) {
      assert(loss <= prev_loss + 1e-9);  // Newton-step leaves keep full-sample loss monotone
    }
    prev_loss = loss;
  }
  return model;
}

std::unique_ptr<Model> train_model(const Matrix& X, const IntVector& y, const Hyperparams& hp,
                                   std::uint64_t seed, int workers) {
  switch (hp.family) {
    case Family::logreg: return train_logreg(X, y, hp);
    case Family::svm_rbf: return train_svm_rbf(X, y, hp);
    case Family::random_forest: return train_random_forest(X, y, hp, seed, workers);
    case Family::extra_trees: return train_extra_trees(X, y, hp, seed, workers);
    case Family::gradient_boosting: return train_gradient_boosting(X, y, hp, seed);
  }
  throw ConfigError("train_model: unknown family");
}

std::unique_ptr<Model> model_from_json(const json& j) {
  Family fam = family_from_name(j.at("family").get<std::string>());
  if (fam == Family::logreg) {
    auto m = std::make_unique<LogregModel>();
    auto w = j.at("weights").get<std::vector<double>>();
    m->weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    m->intercept = j.at("intercept").get<double>();
    m->lambda = j.at("lambda").get<double>();
    m->converged_flag = j.at("converged").get<bool>();
    return m;
  }
  if (fam == Family::svm_rbf) {
    auto m = std::make_unique<SvmModel>();
    const auto& sv = j.at("support_vectors");
    auto dim = j.at("dim").get<Eigen::Index>();
    m->support_vectors.resize(static_cast<Eigen::Index>(sv.size()), dim);
    for (std::size_t i = 0; i < sv.size(); ++i) {
      auto row = sv[i].get<std::vector<double>>();
      m->support_vectors.row(static_cast<Eigen::Index>(i)) =
          Eigen::Map<Vector>(row.data(), dim);
    }
    auto dc = j.at("dual_coef").get<std::vector<double>>();
    m->dual_coef = Eigen::Map<Vector>(dc.data(), static_cast<Eigen::Index>(dc.size()));
    m->bias = j.at("bias").get<double>();
    m->gamma = j.at("gamma").get<double>();
    m->platt_a = j.at("platt_a").get<double>();
    m->platt_b = j.at("platt_b").get<double>();
    m->converged_flag = j.at("converged").get<bool>();
    return m;
  }
  if (fam == Family::gradient_boosting) {
    auto m = std::make_unique<GbmModel>();
    m->d = j.at("dim").get<Eigen::Index>();
    m->base_score = j.at("base_score").get<double>();
    m->learning_rate = j.at("learning_rate").get<double>();
    m->early_stopped = j.at("early_stopped").get<bool>();
    for (const auto& tj : j.at("trees")) m->trees.push_back(tree_from_json(tj));
    return m;
  }
  auto m = std::make_unique<ForestModel>();
  m->fam = fam;
  m->d = j.at("dim").get<Eigen::Index>();
  for (const auto& tj : j.at("trees")) m->trees.push_back(tree_from_json(tj));
  return m;
}

}  // namespace labrisk::models
