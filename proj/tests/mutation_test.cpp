#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "fixloc/error.hpp"
#include "fixloc/mutation.hpp"
#include "test_sources.hpp"

using namespace fixloc;

namespace {

std::vector<std::pair<std::vector<NodeKind>, std::string>> keyed_leaves(const MethodAst& ast) {
  std::vector<std::pair<std::vector<NodeKind>, std::string>> out;
  for (std::size_t i = 0; i < ast.leaf_count(); ++i) out.emplace_back(path_of_leaf(ast, i).kinds, ast.token_of(i));
  return out;
}

// Applies the single oracle edit to the buggy leaf sequence, drawing the
// replacement or inserted token from the fixed method at the same spot.
std::vector<std::pair<std::vector<NodeKind>, std::string>> apply_fix(const MutantRecord& m) {
  const auto buggy = parse(m.record.buggy_src);
  const auto fixed = parse(m.record.fixed_src);
  auto seq = keyed_leaves(buggy);
  const auto want = keyed_leaves(fixed);
  const auto& op = m.record.oracle.at(0);
  const auto i = static_cast<std::size_t>(op.path.leaf_index);
  switch (op.op) {
    case ChangeOperator::Update:
      seq[i].second = want[i].second;
      break;
    case ChangeOperator::Delete:
      seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    case ChangeOperator::Insert:
      seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(i + 1), want[i + 1]);
      break;
  }
  return seq;
}

}  // namespace

TEST_CASE("kind names and fix operators") {
  for (const auto k : kAllMutationKinds) CHECK(mutation_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(mutation_kind_from_string("Nope"), FormatError);
  CHECK(fix_operator(MutationKind::TokenDelete) == ChangeOperator::Insert);
  CHECK(fix_operator(MutationKind::TokenInsert) == ChangeOperator::Delete);
  CHECK(fix_operator(MutationKind::BooleanFlip) == ChangeOperator::Update);
}

TEST_CASE("BooleanFlip on a single literal") {
  const auto m = mutate("boolean f() { return true; }", MutationKind::BooleanFlip, 1);
  CHECK(m.record.buggy_src.find("return false;") != std::string::npos);
  REQUIRE(m.record.oracle.size() == 1);
  CHECK(m.record.oracle[0].token == "false");
  CHECK(m.record.oracle[0].op == ChangeOperator::Update);
  CHECK(m.record.oracle[0].path.kinds.back() == NodeKind::BooleanLiteral);
  CHECK_THROWS_AS(mutate("int f() { return 0; }", MutationKind::BooleanFlip, 1), NoEligibleLeaf);
}

TEST_CASE("OperatorSwap can turn >= into >") {
  const std::string src = "boolean f(int a) { return a >= 0; }";
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 60; ++s) {
    const auto m = mutate(src, MutationKind::OperatorSwap, s);
    seen.insert(m.record.oracle[0].token);
    CHECK(m.record.oracle[0].token != ">=");
  }
  CHECK(seen.count(">") == 1);
  CHECK(seen.size() == 5);
}

TEST_CASE("mutate is deterministic per seed") {
  const std::string src = test_sources::kMath79Fixed;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = mutate(src, std::nullopt, s);
    const auto b = mutate(src, std::nullopt, s);
    CHECK(a.record.buggy_src == b.record.buggy_src);
    CHECK(a.kind == b.kind);
  }
}

TEST_CASE("synthesized seed methods are distinct and parse") {
  const auto methods = synthesize_methods(300, 7);
  CHECK(std::set<std::string>(methods.begin(), methods.end()).size() == 300);
  for (const auto& m : methods) CHECK(render(parse(m)) == m);
  CHECK(synthesize_methods(300, 7) == methods);
  for (const auto k : kAllMutationKinds) {
    std::size_t eligible = 0;
    for (const auto& m : methods) eligible += eligible_site_count(parse(m), k) > 0 ? 1 : 0;
    CHECK_MESSAGE(eligible > 0, to_string(k));
  }
}

TEST_CASE("round trip: extract_oracle recovers every injected fix") {
  const auto seeds = synthesize_methods(200, 3);
  const auto corpus = generate_corpus(seeds, 1000, kUniformMix, 11);
  REQUIRE(corpus.size() == 1000);
  int mismatches = 0;
  for (const auto& m : corpus) {
    CHECK(m.record.buggy_src != m.record.fixed_src);
    REQUIRE(m.record.oracle.size() == 1);
    CHECK(m.record.oracle[0].op == fix_operator(m.kind));
    const auto buggy = parse(m.record.buggy_src);
    const auto fixed = parse(m.record.fixed_src);
    std::vector<OperationPath> got;
    try {
      got = extract_oracle(buggy, fixed);
    } catch (const UnsupportedPatch&) {
    }
    if (got != m.record.oracle) {
      ++mismatches;
      MESSAGE(to_string(m.kind) << "\n" << m.record.buggy_src << "---\n" << m.record.fixed_src);
    }
    CHECK_NOTHROW(validate_record(m.record));
    CHECK(apply_fix(m) == keyed_leaves(fixed));
  }
  CHECK(mismatches == 0);
}

TEST_CASE("generate_corpus: counts, uniqueness, determinism, serialization") {
  const auto seeds = synthesize_methods(200, 5);
  KindMix mix = {3, 1, 1, 2, 1, 2};
  const auto corpus = generate_corpus(seeds, 2000, mix, 9);
  REQUIRE(corpus.size() == 2000);
  std::map<MutationKind, int> counts;
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& m : corpus) {
    ++counts[m.kind];
    pairs.emplace(m.record.buggy_src, m.record.fixed_src);
  }
  CHECK(pairs.size() == corpus.size());
  for (std::size_t k = 0; k < mix.size(); ++k) {
    const double share = counts[kAllMutationKinds[k]] / 2000.0;
    CHECK(std::abs(share - mix[k] / 10.0) <= 0.02);
  }

  std::ostringstream a, b;
  write_mutant_records(a, corpus);
  write_mutant_records(b, generate_corpus(seeds, 2000, mix, 9));
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  const auto back = read_mutant_records(in);
  REQUIRE(back.size() == corpus.size());
  CHECK(back[17].record.oracle == corpus[17].record.oracle);
  CHECK(back[17].kind == corpus[17].kind);
  CHECK(back[17].seed == corpus[17].seed);
}

TEST_CASE("generate_corpus: single kind and infeasible requests") {
  const auto seeds = synthesize_methods(120, 1);
  KindMix only_bool{};
  only_bool[1] = 1;
  const auto corpus = generate_corpus(seeds, 100, only_bool, 2);
  REQUIRE(corpus.size() == 100);
  for (const auto& m : corpus) {
    CHECK(m.kind == MutationKind::BooleanFlip);
    CHECK(m.record.oracle[0].op == ChangeOperator::Update);
  }

  const std::vector<std::string> no_bool = {"int f(int a) { return a + 1; }"};
  CHECK_THROWS_AS(generate_corpus(no_bool, 5, only_bool, 0), InfeasibleMix);
  CHECK_THROWS_AS(generate_corpus(seeds, 0, kUniformMix, 0), InfeasibleMix);
  CHECK_THROWS_AS(generate_corpus(seeds, 5, KindMix{}, 0), InfeasibleMix);
  // One literal admits exactly one distinct BooleanFlip mutant.
  const std::vector<std::string> one = {"boolean f() { return true; }"};
  CHECK(generate_corpus(one, 1, only_bool, 0).size() == 1);
  CHECK_THROWS_AS(generate_corpus(one, 2, only_bool, 0), InfeasibleMix);
}
