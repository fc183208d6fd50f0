#include <doctest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "fixloc/diff.hpp"
#include "fixloc/error.hpp"
#include "test_sources.hpp"

using namespace fixloc;

TEST_CASE("enumerate_operation_paths: three per leaf in canonical order") {
  const auto ast = parse("int f(){return 0;}");
  const auto ops = enumerate_operation_paths(ast);
  REQUIRE(ops.size() == 3 * ast.leaf_count());
  CHECK(ops[0].token == "int");
  CHECK(ops[0].op == ChangeOperator::Update);
  CHECK(ops[1].token == "int");
  CHECK(ops[1].op == ChangeOperator::Delete);
  CHECK(ops[2].token == "int");
  CHECK(ops[2].op == ChangeOperator::Insert);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    CHECK(ops[i].path.leaf_index == static_cast<int>(i / 3));
    for (std::size_t k = i + 1; k < ops.size(); ++k) CHECK_FALSE(ops[i] == ops[k]);
  }
}

TEST_CASE("extract_oracle on the nested-guard pair") {
  const auto buggy = parse(test_sources::kNestedGuardBuggy);
  const auto fixed = parse(test_sources::kNestedGuardFixed);
  const auto oracle = extract_oracle(buggy, fixed);
  REQUIRE(oracle.size() == 1);
  CHECK(oracle[0].token == "<");
  CHECK(oracle[0].op == ChangeOperator::Update);
  CHECK(oracle[0].path.kinds.back() == NodeKind::Operator);
  CHECK(oracle[0].path.kinds.size() == 8);
}

TEST_CASE("extract_oracle on the Math-79 pair finds both type updates") {
  const auto buggy = parse(test_sources::kMath79Buggy);
  const auto oracle = extract_oracle(buggy, parse(test_sources::kMath79Fixed));
  REQUIRE(oracle.size() == 2);
  // Hand count: public static double distance Point p1 Point p2 | int(8) sum 0 |
  // int i 0 i < p1 size i = i + 1 | int(23) dp ...
  CHECK(oracle[0].path.leaf_index == 8);
  CHECK(oracle[1].path.leaf_index == 23);
  for (const auto& o : oracle) {
    CHECK(o.token == "int");
    CHECK(o.op == ChangeOperator::Update);
    CHECK(o.path.kinds.back() == NodeKind::TypeName);
  }
}

TEST_CASE("extract_oracle rejects unsupported patches") {
  const auto a = parse("int f(int x) { return x; }");
  CHECK_THROWS_AS(extract_oracle(a, a), UnsupportedPatch);
  // Structural rewrite: a prefix expression appears.
  CHECK_THROWS_AS(extract_oracle(a, parse("int f(int x) { return -x; }")), UnsupportedPatch);
  // Three leaf edits.
  CHECK_THROWS_AS(extract_oracle(parse("int f(int x) { return g(x, y, z); }"),
                                 parse("int f(int x) { return g(a, b, c); }")),
                  UnsupportedPatch);
}

TEST_CASE("delete and insert mirror each other") {
  const auto longer = parse("void f(int a, int b) { call(a, b, c); }");
  const auto shorter = parse("void f(int a, int b) { call(a, c); }");
  const auto del = extract_oracle(longer, shorter);
  REQUIRE(del.size() == 1);
  CHECK(del[0].op == ChangeOperator::Delete);
  CHECK(del[0].token == "b");

  const auto ins = extract_oracle(shorter, longer);
  REQUIRE(ins.size() == 1);
  CHECK(ins[0].op == ChangeOperator::Insert);
  // Anchored on the leaf preceding the insertion point in the shorter method.
  CHECK(ins[0].path.leaf_index == del[0].path.leaf_index - 1);
  CHECK(ins[0].token == "a");

  // Insertion at the very front anchors on the first leaf.
  const auto front = extract_oracle(parse("void f() { }"), parse("static void f() { }"));
  REQUIRE(front.size() == 1);
  CHECK(front[0].op == ChangeOperator::Insert);
  CHECK(front[0].path.leaf_index == 0);
}

TEST_CASE("label_paths") {
  const auto ast = parse(test_sources::kMath79Buggy);
  const auto candidates = enumerate_operation_paths(ast);
  const auto oracle = extract_oracle(ast, parse(test_sources::kMath79Fixed));

  const auto one = label_paths(candidates, std::span(oracle).first(1));
  CHECK(std::accumulate(one.begin(), one.end(), 0) == 1);
  const auto two = label_paths(candidates, oracle);
  CHECK(std::accumulate(two.begin(), two.end(), 0) == 2);

  const auto small = enumerate_operation_paths(parse("int f(){return 0;}"));
  CHECK_THROWS_AS(label_paths(small, oracle), OracleMissing);

  // Relabelling a shuffled candidate list gives the same (candidate, label) pairs.
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> perm(candidates.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<OperationPath> shuffled;
    for (const auto p : perm) shuffled.push_back(candidates[p]);
    const auto relabeled = label_paths(shuffled, oracle);
    for (std::size_t k = 0; k < perm.size(); ++k) CHECK(relabeled[k] == two[perm[k]]);
  }
}

TEST_CASE("patch records survive a JSONL round trip") {
  PatchRecord r;
  r.id = "closure-62";
  r.buggy_src = test_sources::kNestedGuardBuggy;
  r.fixed_src = test_sources::kNestedGuardFixed;
  r.oracle = extract_oracle(parse(r.buggy_src), parse(r.fixed_src));
  validate_record(r);

  std::stringstream ss;
  write_patch_records(ss, std::span(&r, 1));
  const auto back = read_patch_records(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].id == r.id);
  CHECK(back[0].buggy_src == r.buggy_src);
  CHECK(back[0].oracle == r.oracle);

  std::stringstream bad("{\"id\": 1}\n");
  CHECK_THROWS_AS(read_patch_records(bad), FormatError);
}
