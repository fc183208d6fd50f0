#pragma once

// Comparison localizers: per-kind bug statistics and a random forest over
// simple token features. Both rank leaves, not operation paths.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fixloc/diff.hpp"

namespace fixloc {

struct BugProbTable {
  std::array<double, kNodeKindCount> prob{};

  double of(NodeKind k) const { return prob[static_cast<std::size_t>(k)]; }
  nlohmann::json to_json() const;
  static BugProbTable from_json(const nlohmann::json& j);
};

BugProbTable fit_statistics(std::span<const PatchRecord> train);

/// Leaf ordinals by probability descending, then source position.
std::vector<int> rank_statistical(const MethodAst& method, const BugProbTable& table);

struct TokenFeatures {
  int token_rank = 0;
  NodeKind statement_type = NodeKind::MethodDeclaration;  // MethodDeclaration outside any statement
  int token_length = 0;
  int num_subtokens = 1;
};

inline constexpr int kFeatureCount = 4;
inline constexpr int kStatementTypeFeature = 1;

std::vector<TokenFeatures> token_features(const MethodAst& method);
double feature_value(const TokenFeatures& f, int feature);

struct LabeledToken {
  TokenFeatures features;
  int label = 0;
};

/// Every leaf of every buggy method, labelled 1 when an oracle path targets it.
std::vector<LabeledToken> labeled_tokens(std::span<const PatchRecord> records);

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 8;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  int max_features = 0;  // 0 selects floor(sqrt(kFeatureCount))
  int min_samples_split = 2;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // numeric: go left when value <= threshold
  int category = -1;       // categorical: go left when value == category
  int left = -1;
  int right = -1;
  double prob = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const TokenFeatures& f) const;
};

class Forest {
 public:
  ForestOptions options;
  std::vector<Tree> trees;

  double predict(const TokenFeatures& f) const;
  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);
};

/// Throws DegenerateLabels when every sample carries the same label.
Forest fit_forest(std::span<const LabeledToken> samples, const ForestOptions& options);
Forest fit_forest(std::span<const PatchRecord> train, const ForestOptions& options);

std::vector<int> rank_forest(const MethodAst& method, const Forest& forest);

/// Weighted Gini impurity of a binary split given positive counts and sizes.
double split_gini(double pos_left, double n_left, double pos_right, double n_right);

}  // namespace fixloc
