#pragma once

// Generate-and-validate repair driven by a ranked prediction: candidate
// tokens per operation path, a singles-then-pairs schedule, and pluggable
// validators.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fixloc/diff.hpp"
#include "fixloc/model.hpp"

namespace fixloc {

/// Replacement tokens for an UPDATE, or tokens to insert for an INSERT.
/// Throws NoCandidates when the heuristics have nothing to offer, including
/// for every DELETE.
std::vector<std::string> candidate_tokens(const OperationPath& op, const MethodAst& ast);

/// Tuples of 0-based ranks: singles 0..width-1, then pairs (i, j) with i < j
/// in lexicographic order. Width is clipped to the prediction size.
std::vector<std::vector<std::size_t>> schedule(std::size_t pred_size, std::size_t width = 20);

struct AppliedEdit {
  OperationPath path;
  std::optional<std::string> token;  // none for DELETE

  friend bool operator==(const AppliedEdit&, const AppliedEdit&) = default;
};

struct CandidatePatch {
  std::string patched_src;
  std::vector<AppliedEdit> edits;
  std::vector<int> origin_ranks;  // 1-based
};

class Validator {
 public:
  virtual ~Validator() = default;
  virtual bool validate(const std::string& patched_src) = 0;
  /// True when a pass also proves the patch correct.
  virtual bool assesses_correctness() const { return false; }
};

/// Passes iff the patch has the same lexer token sequence as the fixed method.
class OracleValidator final : public Validator {
 public:
  explicit OracleValidator(std::string_view fixed_src);
  bool validate(const std::string& patched_src) override;
  bool assesses_correctness() const override { return true; }

 private:
  std::vector<std::string> expected_;
};

/// Runs a shell command with "{patched}" replaced by a temp file holding the
/// candidate; exit status 0 passes. Throws ValidatorFailure when the command
/// cannot be run at all.
class CommandValidator final : public Validator {
 public:
  explicit CommandValidator(std::string command_template);
  bool validate(const std::string& patched_src) override;

 private:
  std::string template_;
};

enum class RepairStatus { Plausible, Exhausted };
enum class Correctness { Correct, Overfitting, Unassessed };

struct RepairOutcome {
  RepairStatus status = RepairStatus::Exhausted;
  std::size_t npc = 0;
  std::optional<CandidatePatch> patch;
  Correctness correctness = Correctness::Unassessed;

  nlohmann::json to_json() const;
};

struct RepairOptions {
  std::size_t width = 20;
  bool pairs = true;
};

/// Walks the schedule and stops at the first candidate the validator
/// accepts. Candidates that fail to parse are skipped without validation.
RepairOutcome generate_and_validate(std::string_view method_src, const RankedPrediction& pred, Validator& validator,
                                    const RepairOptions& options = {});

/// Correct over plausible; nullopt when nothing is plausible. Throws
/// UnassessedOutcome if a plausible outcome carries no assessment.
std::optional<double> correctness_ratio(std::span<const RepairOutcome> outcomes);

}  // namespace fixloc
