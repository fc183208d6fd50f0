#pragma once

// Operation paths, oracle extraction from (buggy, fixed) method pairs, and
// candidate enumeration with true-negative labelling.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fixloc/lang.hpp"

namespace fixloc {

/// Canonical order UPDATE < DELETE < INSERT.
enum class ChangeOperator : std::uint8_t { Update = 0, Delete = 1, Insert = 2 };

inline constexpr ChangeOperator kAllOperators[] = {ChangeOperator::Update, ChangeOperator::Delete,
                                                   ChangeOperator::Insert};

std::string_view to_string(ChangeOperator op);
ChangeOperator change_operator_from_string(std::string_view name);

struct OperationPath {
  std::string token;
  AstPath path;
  ChangeOperator op = ChangeOperator::Update;

  friend bool operator==(const OperationPath&, const OperationPath&) = default;
};

struct PatchRecord {
  std::string id;
  std::string buggy_src;
  std::string fixed_src;
  std::vector<OperationPath> oracle;
};

/// 3 x |leaves| paths ordered by (leaf_index, operator).
std::vector<OperationPath> enumerate_operation_paths(const MethodAst& ast);

/// Minimum-edit alignment of the two pre-order leaf sequences keyed on
/// (kind chain, token). A substitution is only allowed between leaves with
/// identical kind chains and becomes an UPDATE; unmatched buggy leaves become
/// DELETEs; unmatched fixed leaves become INSERTs anchored on the buggy leaf
/// immediately preceding the insertion point (the first leaf when inserting
/// at the front).
///
/// Throws UnsupportedPatch for zero edits, more than two edits, or when the
/// internal (non-leaf) structure differs.
std::vector<OperationPath> extract_oracle(const MethodAst& buggy, const MethodAst& fixed);

/// 1 for candidates equal to an oracle path, 0 otherwise. Throws OracleMissing
/// if an oracle path is absent from the candidates.
std::vector<int> label_paths(std::span<const OperationPath> candidates,
                             std::span<const OperationPath> oracle);

/// Throws OracleMissing unless every oracle path belongs to the enumeration
/// of the buggy method.
void validate_record(const PatchRecord& record);

nlohmann::json to_json(const OperationPath& op);
OperationPath operation_path_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PatchRecord& record);
PatchRecord patch_record_from_json(const nlohmann::json& j);

std::vector<PatchRecord> read_patch_records(std::istream& in);
void write_patch_records(std::ostream& out, std::span<const PatchRecord> records);

}  // namespace fixloc
