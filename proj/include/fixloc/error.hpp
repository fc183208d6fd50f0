#pragma once

#include <stdexcept>
#include <string>

namespace fixloc {

/// Base of every domain error raised by the toolkit. `kind()` is the stable
/// error name surfaced by the CLI (e.g. "SyntaxError", "UnsupportedPatch").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, const std::string& msg)
      : Error("SyntaxError", std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

#define FIXLOC_DEFINE_ERROR(Name)                                          \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}           \
  }

FIXLOC_DEFINE_ERROR(UnsupportedPatch);
FIXLOC_DEFINE_ERROR(OracleMissing);
FIXLOC_DEFINE_ERROR(ShapeMismatch);
FIXLOC_DEFINE_ERROR(NonScalarLoss);
FIXLOC_DEFINE_ERROR(NonFiniteGradient);
FIXLOC_DEFINE_ERROR(NonFiniteValue);
FIXLOC_DEFINE_ERROR(TooManyPaths);
FIXLOC_DEFINE_ERROR(LengthMismatch);
FIXLOC_DEFINE_ERROR(EmptyDataset);
FIXLOC_DEFINE_ERROR(EmptyScope);
FIXLOC_DEFINE_ERROR(DegenerateLabels);
FIXLOC_DEFINE_ERROR(NotFound);
FIXLOC_DEFINE_ERROR(TooFewRecords);
FIXLOC_DEFINE_ERROR(NoEligibleLeaf);
FIXLOC_DEFINE_ERROR(InfeasibleMix);
FIXLOC_DEFINE_ERROR(NoCandidates);
FIXLOC_DEFINE_ERROR(ValidatorFailure);
FIXLOC_DEFINE_ERROR(UnassessedOutcome);
FIXLOC_DEFINE_ERROR(FormatError);

#undef FIXLOC_DEFINE_ERROR

}  // namespace fixloc
