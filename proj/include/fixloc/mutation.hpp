#pragma once

// Single-token bug injection into correct methods, and a synthesizer of
// correct seed methods.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fixloc/diff.hpp"

namespace fixloc {

enum class MutationKind : std::uint8_t {
  OperatorSwap,
  BooleanFlip,
  TypeSwap,
  IdentifierSwap,
  TokenDelete,  // fixed by INSERT
  TokenInsert,  // fixed by DELETE
};

inline constexpr std::array<MutationKind, 6> kAllMutationKinds = {
    MutationKind::OperatorSwap,   MutationKind::BooleanFlip, MutationKind::TypeSwap,
    MutationKind::IdentifierSwap, MutationKind::TokenDelete, MutationKind::TokenInsert};

std::string_view to_string(MutationKind kind);
MutationKind mutation_kind_from_string(std::string_view name);
ChangeOperator fix_operator(MutationKind kind);

struct MutantRecord {
  PatchRecord record;
  MutationKind kind = MutationKind::OperatorSwap;
  std::uint64_t seed = 0;
};

/// Number of leaves a mutation of `kind` could target in `method`.
std::size_t eligible_site_count(const MethodAst& method, MutationKind kind);

/// Mutates a seeded-random eligible site. `fixed_src` of the result is the
/// canonical rendering of `method_src`. Throws NoEligibleLeaf.
MutantRecord mutate(std::string_view method_src, std::optional<MutationKind> kind, std::uint64_t seed);

/// Relative weight per kind, indexed like kAllMutationKinds.
using KindMix = std::array<double, kAllMutationKinds.size()>;
inline constexpr KindMix kUniformMix = {1, 1, 1, 1, 1, 1};

/// Exactly `n` records with per-kind counts apportioned from `mix`; no two
/// records share a (buggy_src, fixed_src) pair. Throws InfeasibleMix.
std::vector<MutantRecord> generate_corpus(std::span<const std::string> seed_methods, std::size_t n,
                                          const KindMix& mix, std::uint64_t seed);

/// `count` distinct, parseable seed methods built from a fixed set of
/// idiomatic templates with randomized names and constants.
std::vector<std::string> synthesize_methods(std::size_t count, std::uint64_t seed);

nlohmann::json to_json(const MutantRecord& m);
MutantRecord mutant_record_from_json(const nlohmann::json& j);
void write_mutant_records(std::ostream& out, std::span<const MutantRecord> records);
std::vector<MutantRecord> read_mutant_records(std::istream& in);

}  // namespace fixloc
