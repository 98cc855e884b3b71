#pragma once

#include "labrisk/common.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace labrisk::models {

enum class Family { logreg, svm_rbf, random_forest, extra_trees, gradient_boosting };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Feature-subset rule for tree ensembles; resolved against d at fit time.
enum class FeatureSubset { sqrt_d, third_d, all_d };

struct Hyperparams {
  Family family = Family::logreg;
  std::map<std::string, double> values;

  double get(const std::string& key) const;
  double get_or(const std::string& key, double fallback) const;
};

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double leaf_value = 0.0;
  double impurity_decrease = 0.0;  // weighted (n-scaled) decrease at this node

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict_row(const Matrix& X, Eigen::Index row) const;
  int depth() const;
};

enum class SplitMode { exhaustive, random_threshold };
enum class Criterion { gini, mse };

struct CartParams {
  int max_depth = 6;
  int min_samples_leaf = 1;
  int features_per_split = 0;  // 0 = all
  SplitMode split_mode = SplitMode::exhaustive;
  Criterion criterion = Criterion::gini;
};

// Optional per-leaf value override (indices of rows landing in the leaf).
using LeafValueFn = std::function<double(const std::vector<Eigen::Index>&)>;

Tree train_cart(const Matrix& X, const Vector& targets, const std::vector<Eigen::Index>& rows,
                const CartParams& params, Rng& rng, const LeafValueFn& leaf_value = nullptr);

class Model {
 public:
  virtual ~Model() = default;
  virtual Family family() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Vector predict_proba(const Matrix& X) const = 0;
  virtual std::optional<Vector> feature_importance() const { return std::nullopt; }
  virtual nlohmann::json to_json() const = 0;
  // Training ran into its iteration cap without meeting the tolerance.
  virtual bool converged() const { return true; }

 protected:
  void check_dim(const Matrix& X) const;
};

std::unique_ptr<Model> train_model(const Matrix& X, const IntVector& y, const Hyperparams& hp,
                                   std::uint64_t seed, int workers = 1);
std::unique_ptr<Model> model_from_json(const nlohmann::json& j);

// Individual trainers (train_model dispatches to these).
std::unique_ptr<Model> train_logreg(const Matrix& X, const IntVector& y, const Hyperparams& hp);
std::unique_ptr<Model> train_svm_rbf(const Matrix& X, const IntVector& y, const Hyperparams& hp);
std::unique_ptr<Model> train_random_forest(const Matrix& X, const IntVector& y,
                                           const Hyperparams& hp, std::uint64_t seed,
                                           int workers);
std::unique_ptr<Model> train_extra_trees(const Matrix& X, const IntVector& y,
                                         const Hyperparams& hp, std::uint64_t seed, int workers);
std::unique_ptr<Model> train_gradient_boosting(const Matrix& X, const IntVector& y,
                                               const Hyperparams& hp, std::uint64_t seed);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Mean binary cross-entropy of scores (log-odds) against 0/1 labels.
double logistic_loss(const Vector& scores, const IntVector& y);

int resolve_features_per_split(FeatureSubset mode, int d);

}  // namespace labrisk::models
