#include "fixloc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fixloc/error.hpp"
#include "fixloc/rng.hpp"

namespace fixloc {

namespace {

constexpr int kStatFormatVersion = 1;
constexpr int kForestFormatVersion = 1;

std::vector<int> rank_by_score(const std::vector<double>& score) {
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
  });
  return order;
}

std::set<int> oracle_leaves(const PatchRecord& r) {
  std::set<int> s;
  for (const auto& o : r.oracle) s.insert(o.path.leaf_index);
  return s;
}

double gini(double pos, double n) {
  if (n <= 0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

}  // namespace

// ---------------------------------------------------------------------------
// Statistical baseline

nlohmann::json BugProbTable::to_json() const {
  nlohmann::json probs = nlohmann::json::object();
  for (int k = 0; k < kNodeKindCount; ++k)
    if (is_leaf_kind(static_cast<NodeKind>(k)))
      probs[std::string(fixloc::to_string(static_cast<NodeKind>(k)))] = prob[static_cast<std::size_t>(k)];
  return {{"format", "fixloc-stat-baseline"}, {"version", kStatFormatVersion}, {"prob", probs}};
}

BugProbTable BugProbTable::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "fixloc-stat-baseline" || j.value("version", 0) != kStatFormatVersion)
    throw FormatError("not a statistical baseline document");
  BugProbTable t;
  for (const auto& [name, p] : j.at("prob").items()) {
    const auto kind = node_kind_from_string(name);
    if (!kind) throw FormatError("unknown node kind '" + name + "'");
    t.prob[static_cast<std::size_t>(*kind)] = p.get<double>();
  }
  return t;
}

BugProbTable fit_statistics(std::span<const PatchRecord> train) {
  if (train.empty()) throw EmptyDataset("no training records for the statistical baseline");
  std::array<double, kNodeKindCount> buggy{}, total{};
  for (const auto& r : train) {
    const auto ast = parse(r.buggy_src);
    for (std::size_t i = 0; i < ast.leaf_count(); ++i) total[static_cast<std::size_t>(ast.leaf(i).kind)] += 1;
    for (const int leaf : oracle_leaves(r))
      buggy[static_cast<std::size_t>(ast.leaf(static_cast<std::size_t>(leaf)).kind)] += 1;
  }
  BugProbTable t;
  for (std::size_t k = 0; k < t.prob.size(); ++k) t.prob[k] = total[k] > 0 ? buggy[k] / total[k] : 0.0;
  return t;
}

std::vector<int> rank_statistical(const MethodAst& method, const BugProbTable& table) {
  std::vector<double> score;
  for (std::size_t i = 0; i < method.leaf_count(); ++i) score.push_back(table.of(method.leaf(i).kind));
  return rank_by_score(score);
}

// ---------------------------------------------------------------------------
// Features

std::vector<TokenFeatures> token_features(const MethodAst& method) {
  std::vector<TokenFeatures> out;
  for (std::size_t i = 0; i < method.leaf_count(); ++i) {
    const Node& leaf = method.leaf(i);
    TokenFeatures f;
    f.token_rank = static_cast<int>(i);
    for (int p = leaf.parent; p >= 0; p = method.node(p).parent) {
      if (is_statement_kind(method.node(p).kind)) {
        f.statement_type = method.node(p).kind;
        break;
      }
    }
    f.token_length = static_cast<int>(leaf.token.size());
    f.num_subtokens = std::max<int>(1, static_cast<int>(split_subtokens(leaf.token).size()));
    out.push_back(f);
  }
  return out;
}

double feature_value(const TokenFeatures& f, int feature) {
  switch (feature) {
    case 0:
      return f.token_rank;
    case 1:
      return static_cast<double>(static_cast<int>(f.statement_type));
    case 2:
      return f.token_length;
    case 3:
      return f.num_subtokens;
  }
  throw FormatError("feature index " + std::to_string(feature) + " out of range");
}

std::vector<LabeledToken> labeled_tokens(std::span<const PatchRecord> records) {
  std::vector<LabeledToken> out;
  for (const auto& r : records) {
    const auto ast = parse(r.buggy_src);
    const auto feats = token_features(ast);
    const auto buggy = oracle_leaves(r);
    for (std::size_t i = 0; i < feats.size(); ++i)
      out.push_back({feats[i], buggy.contains(static_cast<int>(i)) ? 1 : 0});
  }
  return out;
}

double split_gini(double pos_left, double n_left, double pos_right, double n_right) {
  const double n = n_left + n_right;
  return (n_left * gini(pos_left, n_left) + n_right * gini(pos_right, n_right)) / n;
}

// ---------------------------------------------------------------------------
// Random forest

double Tree::predict(const TokenFeatures& f) const {
  int id = 0;
  while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    const double v = feature_value(f, n.feature);
    const bool left = n.feature == kStatementTypeFeature ? static_cast<int>(v) == n.category : v <= n.threshold;
    id = left ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(id)].prob;
}

double Forest::predict(const TokenFeatures& f) const {
  if (trees.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(f);
  return s / static_cast<double>(trees.size());
}

namespace {

struct Builder {
  std::span<const LabeledToken> samples;
  const ForestOptions& opts;
  Rng& rng;
  Tree tree;

  struct Split {
    double impurity = 0.0;
    int feature = -1;
    double threshold = 0.0;
    int category = -1;
  };

  double value(int idx, int feature) const {
    return feature_value(samples[static_cast<std::size_t>(idx)].features, feature);
  }

  void consider_numeric(const std::vector<int>& idx, int feature, double total_pos, Split& best) const {
    std::vector<std::pair<double, int>> vals;
    vals.reserve(idx.size());
    for (const int i : idx) vals.emplace_back(value(i, feature), samples[static_cast<std::size_t>(i)].label);
    std::sort(vals.begin(), vals.end());
    const double n = static_cast<double>(vals.size());
    double pos_left = 0.0;
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      pos_left += vals[k].second;
      if (vals[k].first == vals[k + 1].first) continue;
      const double nl = static_cast<double>(k + 1);
      const double imp = split_gini(pos_left, nl, total_pos - pos_left, n - nl);
      if (imp < best.impurity) best = {imp, feature, 0.5 * (vals[k].first + vals[k + 1].first), -1};
    }
  }

  void consider_categorical(const std::vector<int>& idx, int feature, double total_pos, Split& best) const {
    std::array<double, kNodeKindCount> count{}, pos{};
    for (const int i : idx) {
      const auto c = static_cast<std::size_t>(value(i, feature));
      count[c] += 1;
      pos[c] += samples[static_cast<std::size_t>(i)].label;
    }
    const double n = static_cast<double>(idx.size());
    for (int c = 0; c < kNodeKindCount; ++c) {
      const double nl = count[static_cast<std::size_t>(c)];
      if (nl == 0 || nl == n) continue;
      const double pl = pos[static_cast<std::size_t>(c)];
      const double imp = split_gini(pl, nl, total_pos - pl, n - nl);
      if (imp < best.impurity) best = {imp, feature, 0.0, c};
    }
  }

  int build(std::vector<int> idx, int depth) {
    double total_pos = 0.0;
    for (const int i : idx) total_pos += samples[static_cast<std::size_t>(i)].label;
    const double n = static_cast<double>(idx.size());
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{});
    tree.nodes.back().prob = n > 0 ? total_pos / n : 0.0;

    const double parent = gini(total_pos, n);
    if (depth >= opts.max_depth || idx.size() < static_cast<std::size_t>(opts.min_samples_split) || parent == 0.0)
      return id;

    const int mtry = opts.max_features > 0 ? std::min(opts.max_features, kFeatureCount)
                                           : static_cast<int>(std::floor(std::sqrt(double(kFeatureCount))));
    std::vector<int> feats(kFeatureCount);
    std::iota(feats.begin(), feats.end(), 0);
    for (int k = 0; k < mtry; ++k)
      std::swap(feats[static_cast<std::size_t>(k)],
                feats[static_cast<std::size_t>(k) + uniform_index(rng, static_cast<std::size_t>(kFeatureCount - k))]);
    feats.resize(static_cast<std::size_t>(mtry));
    std::sort(feats.begin(), feats.end());

    Split best{parent - 1e-12, -1, 0.0, -1};
    for (const int f : feats) {
      if (f == kStatementTypeFeature)
        consider_categorical(idx, f, total_pos, best);
      else
        consider_numeric(idx, f, total_pos, best);
    }
    if (best.feature < 0) return id;

    std::vector<int> left, right;
    for (const int i : idx) {
      const double v = value(i, best.feature);
      const bool go_left = best.feature == kStatementTypeFeature ? static_cast<int>(v) == best.category
                                                                  : v <= best.threshold;
      (go_left ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.category = best.category;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

Forest fit_forest(std::span<const LabeledToken> samples, const ForestOptions& options) {
  if (options.n_trees < 1 || options.max_depth < 0) throw FormatError("forest needs n_trees >= 1 and max_depth >= 0");
  const bool has_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; });
  const bool has_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 0; });
  if (!has_pos || !has_neg) throw DegenerateLabels("training tokens carry a single label");

  Forest forest;
  forest.options = options;
  Rng rng(derive_seed(options.seed, "forest"));
  for (int t = 0; t < options.n_trees; ++t) {
    std::vector<int> idx(samples.size());
    if (options.bootstrap) {
      for (auto& i : idx) i = static_cast<int>(uniform_index(rng, samples.size()));
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    Builder b{samples, options, rng, {}};
    b.build(std::move(idx), 0);
    forest.trees.push_back(std::move(b.tree));
  }
  return forest;
}

Forest fit_forest(std::span<const PatchRecord> train, const ForestOptions& options) {
  if (train.empty()) throw EmptyDataset("no training records for the forest baseline");
  const auto samples = labeled_tokens(train);
  return fit_forest(samples, options);
}

std::vector<int> rank_forest(const MethodAst& method, const Forest& forest) {
  std::vector<double> score;
  for (const auto& f : token_features(method)) score.push_back(forest.predict(f));
  return rank_by_score(score);
}

nlohmann::json Forest::to_json() const {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
      nodes.push_back({n.feature, n.threshold, n.category, n.left, n.right, n.prob});
    ts.push_back(std::move(nodes));
  }
  return {{"format", "fixloc-forest"},
          {"version", kForestFormatVersion},
          {"n_trees", options.n_trees},
          {"max_depth", options.max_depth},
          {"seed", options.seed},
          {"bootstrap", options.bootstrap},
          {"max_features", options.max_features},
          {"trees", std::move(ts)}};
}

Forest Forest::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "fixloc-forest" || j.value("version", 0) != kForestFormatVersion)
    throw FormatError("not a forest document");
  Forest f;
  try {
    f.options.n_trees = j.at("n_trees").get<int>();
    f.options.max_depth = j.at("max_depth").get<int>();
    f.options.seed = j.at("seed").get<std::uint64_t>();
    f.options.bootstrap = j.at("bootstrap").get<bool>();
    f.options.max_features = j.at("max_features").get<int>();
    for (const auto& t : j.at("trees")) {
      Tree tree;
      for (const auto& n : t)
        tree.nodes.push_back(TreeNode{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                      n.at(3).get<int>(), n.at(4).get<int>(), n.at(5).get<double>()});
      f.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("forest: ") + e.what());
  }
  return f;
}

}  // namespace fixloc
