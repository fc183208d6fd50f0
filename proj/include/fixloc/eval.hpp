#pragma once

// Ranking metrics, k-fold planning, dataset deduplication, token-count
// statistics and the cross-validation driver comparing all localizers.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fixloc/baselines.hpp"
#include "fixloc/diff.hpp"
#include "fixloc/model.hpp"

namespace fixloc {

enum class MatchMode {
  TokenOnly,         // leaf and token must match; the operator is ignored
  TokenAndOperator,  // the full operation path must match
};

enum class Scenario { Method, Line };

std::string_view to_string(MatchMode m);
std::string_view to_string(Scenario s);
MatchMode match_mode_from_string(std::string_view s);
Scenario scenario_from_string(std::string_view s);

struct FirstRank {
  int rank = 0;  // 1-based; |ranking| + 1 when not found
  bool found = false;

  friend bool operator==(const FirstRank&, const FirstRank&) = default;
};

/// Under TokenOnly, repeated entries for an already-ranked leaf do not
/// advance the rank, so the result counts distinct leaves. Throws NotFound on
/// an empty prediction.
FirstRank first_rank(const RankedPrediction& pred, std::span<const OperationPath> oracle, MatchMode mode);

/// Rank of the first oracle leaf in a leaf-ordinal ranking (baselines).
FirstRank first_rank_leaves(std::span<const int> ranking, std::span<const OperationPath> oracle);

/// Fraction of bugs found at rank <= k. Unfound bugs miss at every k.
double recall_at_k(std::span<const FirstRank> ranks, int k);

struct MfrResult {
  double mfr = 0.0;  // NaN when nothing was found
  std::size_t not_found = 0;
};

/// Mean over found bugs. Throws EmptyDataset on an empty list.
MfrResult mfr(std::span<const FirstRank> ranks);

inline constexpr int kReportCutoffs[] = {1, 3, 5, 10, 20};

struct EvalReport {
  std::string localizer;
  Scenario scenario = Scenario::Method;
  MatchMode mode = MatchMode::TokenOnly;
  std::map<int, double> recall_at;
  double mfr = 0.0;
  std::size_t n_bugs = 0;
  std::size_t not_found = 0;
  std::vector<int> per_bug_first_rank;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport make_report(std::string localizer, Scenario scenario, MatchMode mode, std::span<const FirstRank> ranks);

/// Aligned plain-text table, one row per report.
std::string format_table(std::span<const EvalReport> reports);

/// Drops "#test" records and later duplicates of a (buggy, fixed) pair
/// compared on lexer tokens; keeps first-occurrence order.
std::vector<PatchRecord> dedup(std::span<const PatchRecord> records);

struct FoldPlan {
  int k = 10;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // record index -> fold

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

/// Seeded shuffle, then round-robin assignment. Throws TooFewRecords.
FoldPlan kfold(std::size_t n_records, int k, std::uint64_t seed);

struct Distribution {
  std::size_t count = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;

  nlohmann::json to_json() const;
};

/// Quartiles by linear interpolation between order statistics.
Distribution describe(std::vector<double> values);

struct EffortStats {
  Distribution method_tokens;
  Distribution line_tokens;

  nlohmann::json to_json() const;
};

/// Non-keyword leaf tokens per buggy method and per buggy line (every
/// distinct line holding an oracle leaf).
EffortStats effort_stats(std::span<const PatchRecord> records);

/// Source line of every oracle leaf in the buggy method, ascending, unique.
std::vector<int> buggy_lines(const PatchRecord& record);

struct CvOptions {
  int k = 10;
  std::uint64_t seed = 0;
  HyperParams hp;
  ForestOptions forest;
  std::vector<Scenario> scenarios = {Scenario::Method, Scenario::Line};
  MatchMode mode = MatchMode::TokenOnly;
  bool baselines = true;
  std::string beep_name = "beep";
  /// Progress hook: (fold, localizer).
  std::function<void(int, std::string_view)> on_progress;
};

struct CvResult {
  FoldPlan plan;
  std::vector<EvalReport> reports;  // localizer-major, then scenario

  const EvalReport& find(std::string_view localizer, Scenario scenario) const;
};

/// k-fold cross-validation of BEEP and (optionally) both baselines. Every
/// record is tested exactly once; per-bug ranks follow record order.
CvResult cross_validate(std::span<const PatchRecord> records, const CvOptions& opts);

}  // namespace fixloc
