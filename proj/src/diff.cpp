#include "fixloc/diff.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>

#include "fixloc/error.hpp"

namespace fixloc {

namespace {

std::vector<NodeKind> internal_kinds(const MethodAst& ast) {
  std::vector<NodeKind> out;
  std::vector<int> stack{ast.root()};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& n = ast.node(id);
    if (is_leaf_kind(n.kind)) continue;
    out.push_back(n.kind);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

OperationPath make_op(const MethodAst& ast, const std::vector<AstPath>& paths, std::size_t leaf,
                      ChangeOperator op) {
  return OperationPath{ast.token_of(leaf), paths[leaf], op};
}

}  // namespace

std::string_view to_string(ChangeOperator op) {
  switch (op) {
    case ChangeOperator::Update:
      return "UPDATE";
    case ChangeOperator::Delete:
      return "DELETE";
    case ChangeOperator::Insert:
      return "INSERT";
  }
  return "?";
}

ChangeOperator change_operator_from_string(std::string_view name) {
  if (name == "UPDATE") return ChangeOperator::Update;
  if (name == "DELETE") return ChangeOperator::Delete;
  if (name == "INSERT") return ChangeOperator::Insert;
  throw FormatError("unknown change operator '" + std::string(name) + "'");
}

std::vector<OperationPath> enumerate_operation_paths(const MethodAst& ast) {
  const auto paths = ast_paths(ast);
  std::vector<OperationPath> out;
  out.reserve(paths.size() * 3);
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (const auto op : kAllOperators) out.push_back(make_op(ast, paths, i, op));
  return out;
}

std::vector<OperationPath> extract_oracle(const MethodAst& buggy, const MethodAst& fixed) {
  if (internal_kinds(buggy) != internal_kinds(fixed))
    throw UnsupportedPatch("structural (non-leaf) rewrite");

  const auto bp = ast_paths(buggy);
  const auto fp = ast_paths(fixed);
  const std::size_t n = bp.size();
  const std::size_t m = fp.size();
  auto same_kinds = [&](std::size_t i, std::size_t j) { return bp[i].kinds == fp[j].kinds; };
  auto same_key = [&](std::size_t i, std::size_t j) {
    return same_kinds(i, j) && buggy.token_of(i) == fixed.token_of(j);
  };

  // cost[i][j]: minimum edits aligning buggy[i..] with fixed[j..].
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = n + 1; i-- > 0;) {
    for (std::size_t j = m + 1; j-- > 0;) {
      if (i == n || j == m) {
        cost[i][j] = static_cast<int>((n - i) + (m - j));
        continue;
      }
      int best = std::min(cost[i + 1][j], cost[i][j + 1]) + 1;
      if (same_key(i, j))
        best = std::min(best, cost[i + 1][j + 1]);
      else if (same_kinds(i, j))
        best = std::min(best, cost[i + 1][j + 1] + 1);
      cost[i][j] = best;
    }
  }
  if (cost[0][0] == 0) throw UnsupportedPatch("buggy and fixed methods are identical");
  if (cost[0][0] > 2)
    throw UnsupportedPatch("alignment needs " + std::to_string(cost[0][0]) + " leaf edits");

  // Forward traceback preferring match, then update, then delete, then insert.
  std::vector<OperationPath> edits;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n || j < m) {
    const int here = cost[i][j];
    if (i < n && j < m && same_key(i, j) && cost[i + 1][j + 1] == here) {
      ++i, ++j;
    } else if (i < n && j < m && same_kinds(i, j) && cost[i + 1][j + 1] + 1 == here) {
      edits.push_back(make_op(buggy, bp, i, ChangeOperator::Update));
      ++i, ++j;
    } else if (i < n && cost[i + 1][j] + 1 == here) {
      edits.push_back(make_op(buggy, bp, i, ChangeOperator::Delete));
      ++i;
    } else {
      if (n == 0) throw UnsupportedPatch("insertion into a method without leaves");
      edits.push_back(make_op(buggy, bp, i == 0 ? 0 : i - 1, ChangeOperator::Insert));
      ++j;
    }
  }
  return edits;
}

std::vector<int> label_paths(std::span<const OperationPath> candidates,
                             std::span<const OperationPath> oracle) {
  std::vector<int> labels(candidates.size(), 0);
  for (const auto& o : oracle) {
    bool found = false;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i] == o) {
        labels[i] = 1;
        found = true;
      }
    }
    if (!found)
      throw OracleMissing("oracle path <" + o.token + ", leaf " + std::to_string(o.path.leaf_index) +
                          ", " + std::string(to_string(o.op)) + "> is not a candidate");
  }
  return labels;
}

void validate_record(const PatchRecord& record) {
  const auto candidates = enumerate_operation_paths(parse(record.buggy_src));
  if (record.oracle.empty()) throw OracleMissing("record '" + record.id + "' has no oracle path");
  label_paths(candidates, record.oracle);
}

nlohmann::json to_json(const OperationPath& op) {
  nlohmann::json kinds = nlohmann::json::array();
  for (const auto k : op.path.kinds) kinds.push_back(std::string(to_string(k)));
  return {{"token", op.token},
          {"kinds", std::move(kinds)},
          {"leaf_index", op.path.leaf_index},
          {"operator", std::string(to_string(op.op))}};
}

OperationPath operation_path_from_json(const nlohmann::json& j) {
  OperationPath op;
  op.token = j.at("token").get<std::string>();
  for (const auto& k : j.at("kinds")) {
    const auto kind = node_kind_from_string(k.get<std::string>());
    if (!kind) throw FormatError("unknown node kind '" + k.get<std::string>() + "'");
    op.path.kinds.push_back(*kind);
  }
  op.path.leaf_index = j.at("leaf_index").get<int>();
  op.op = change_operator_from_string(j.at("operator").get<std::string>());
  return op;
}

nlohmann::json to_json(const PatchRecord& record) {
  nlohmann::json oracle = nlohmann::json::array();
  for (const auto& o : record.oracle) oracle.push_back(to_json(o));
  return {{"id", record.id},
          {"buggy_src", record.buggy_src},
          {"fixed_src", record.fixed_src},
          {"oracle", std::move(oracle)}};
}

PatchRecord patch_record_from_json(const nlohmann::json& j) {
  PatchRecord r;
  r.id = j.at("id").get<std::string>();
  r.buggy_src = j.at("buggy_src").get<std::string>();
  r.fixed_src = j.at("fixed_src").get<std::string>();
  if (j.contains("oracle"))
    for (const auto& o : j.at("oracle")) r.oracle.push_back(operation_path_from_json(o));
  return r;
}

std::vector<PatchRecord> read_patch_records(std::istream& in) {
  std::vector<PatchRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(patch_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_patch_records(std::ostream& out, std::span<const PatchRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace fixloc
