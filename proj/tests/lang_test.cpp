#include <doctest.h>

#include <functional>

#include "fixloc/error.hpp"
#include "fixloc/lang.hpp"
#include "test_sources.hpp"

using namespace fixloc;

namespace {

std::vector<std::string> leaf_tokens(const MethodAst& ast) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ast.leaf_count(); ++i) out.push_back(ast.token_of(i));
  return out;
}

// Independent pre-order walk used to cross-check the parser's leaf list.
void walk_leaves(const MethodAst& ast, int id, std::vector<int>& out) {
  const Node& n = ast.node(id);
  if (n.children.empty() && is_leaf_kind(n.kind)) out.push_back(id);
  for (const int c : n.children) walk_leaves(ast, c, out);
}

}  // namespace

TEST_CASE("smallest legal method") {
  const auto ast = parse("int f() { return 0; }");
  CHECK(ast.leaf_count() == 3);
  const Node& root = ast.node(ast.root());
  CHECK(root.kind == NodeKind::MethodDeclaration);
  REQUIRE(root.children.size() == 3);
  CHECK(ast.node(root.children[0]).kind == NodeKind::TypeName);
  CHECK(ast.node(root.children[1]).kind == NodeKind::SimpleName);
  const Node& block = ast.node(root.children[2]);
  CHECK(block.kind == NodeKind::Block);
  REQUIRE(block.children.size() == 1);
  const Node& ret = ast.node(block.children[0]);
  CHECK(ret.kind == NodeKind::ReturnStatement);
  CHECK(ast.node(ret.children.at(0)).kind == NodeKind::NumberLiteral);
  CHECK(ast.node(ret.children.at(0)).token == "0");
}

TEST_CASE("leaves come out in pre-order") {
  const auto ast = parse("void g(int x) { if (x < 0) { x = 0; } }");
  CHECK(leaf_tokens(ast) ==
        std::vector<std::string>{"void", "g", "int", "x", "x", "<", "0", "x", "=", "0"});
}

TEST_CASE("missing return expression is a syntax error at the semicolon") {
  try {
    parse("int f() { return ; }");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 18);
  }
}

TEST_CASE("other syntax errors") {
  CHECK_THROWS_AS(parse("int f() { x + 1; }"), SyntaxError);
  CHECK_THROWS_AS(parse("int f() { return 0; } extra"), SyntaxError);
  CHECK_THROWS_AS(parse("int f( { }"), SyntaxError);
  CHECK_THROWS_AS(parse("int f() { return 0 }"), SyntaxError);
  CHECK_THROWS_AS(parse("int f() { return \"abc; }"), SyntaxError);
  CHECK_THROWS_AS(parse("int f() { return #; }"), SyntaxError);
  CHECK_THROWS_AS(parse("int f() { 1 = x; }"), SyntaxError);
}

TEST_CASE("path of the buggy relational operator in the nested-guard method") {
  const auto ast = parse(test_sources::kNestedGuardBuggy);
  int lt = -1;
  for (std::size_t i = 0; i < ast.leaf_count(); ++i)
    if (ast.token_of(i) == "<") lt = static_cast<int>(i);
  REQUIRE(lt >= 0);
  const auto path = path_of_leaf(ast, static_cast<std::size_t>(lt));
  const std::vector<NodeKind> expected = {
      NodeKind::MethodDeclaration, NodeKind::Block,           NodeKind::IfStatement,
      NodeKind::IfStatement,       NodeKind::InfixExpression, NodeKind::InfixExpression,
      NodeKind::InfixExpression,   NodeKind::Operator};
  CHECK(path.kinds == expected);

  // The twelve tokens of the suspicious condition, in source order.
  std::vector<std::string> cond;
  const auto toks = leaf_tokens(ast);
  const auto first = std::find(toks.begin(), toks.end(), "equals") - 1;
  cond.assign(first, first + 12);
  CHECK(cond == std::vector<std::string>{"excerpt", "equals", "LINE", "&&", "0", "<=", "charno",
                                         "&&", "charno", "<", "sourceExcerpt", "length"});
}

TEST_CASE("ast_paths yields one path per leaf") {
  const auto ast = parse("int f() { return 0; }");
  const auto paths = ast_paths(ast);
  REQUIRE(paths.size() == 3);
  CHECK(paths[2].kinds == std::vector<NodeKind>{NodeKind::MethodDeclaration, NodeKind::Block,
                                                NodeKind::ReturnStatement, NodeKind::NumberLiteral});
  for (std::size_t i = 0; i < paths.size(); ++i) {
    CHECK(paths[i].leaf_index == static_cast<int>(i));
    CHECK(paths[i].kinds.front() == NodeKind::MethodDeclaration);
    CHECK(is_leaf_kind(paths[i].kinds.back()));
    CHECK(paths[i].kinds.size() >= 2);
  }
}

TEST_CASE("round trip, leaf order and parent links over the sample corpus") {
  for (const auto& src : test_sources::corpus()) {
    CAPTURE(src);
    const auto ast = parse(src);
    const auto again = parse(render(ast));
    CHECK(structurally_equal(ast, again));
    CHECK(render(again) == render(ast));

    std::vector<int> walked;
    walk_leaves(ast, ast.root(), walked);
    CHECK(std::vector<int>(ast.leaves().begin(), ast.leaves().end()) == walked);

    // Pre-order equals source order.
    for (std::size_t i = 1; i < ast.leaf_count(); ++i) {
      const Node& a = ast.leaf(i - 1);
      const Node& b = ast.leaf(i);
      CHECK((a.line < b.line || (a.line == b.line && a.column < b.column)));
    }
    for (std::size_t id = 1; id < ast.node_count(); ++id) {
      const Node& n = ast.node(static_cast<int>(id));
      REQUIRE(n.parent >= 0);
      const auto& siblings = ast.node(n.parent).children;
      CHECK(std::count(siblings.begin(), siblings.end(), static_cast<int>(id)) == 1);
    }
    CHECK(ast_paths(ast).size() == ast.leaf_count());
  }
}

TEST_CASE("logical connectives nest to the right, arithmetic to the left") {
  const auto a = parse("boolean f() { return a && b && c; }");
  const Node& ret = a.node(a.node(a.node(a.root()).children.back()).children[0]);
  const Node& top = a.node(ret.children[0]);
  CHECK(a.node(top.children[0]).kind == NodeKind::SimpleName);
  CHECK(a.node(top.children[2]).kind == NodeKind::InfixExpression);

  const auto b = parse("int f() { return a - b - c; }");
  const Node& ret2 = b.node(b.node(b.node(b.root()).children.back()).children[0]);
  const Node& top2 = b.node(ret2.children[0]);
  CHECK(b.node(top2.children[0]).kind == NodeKind::InfixExpression);
  CHECK(b.node(top2.children[2]).kind == NodeKind::SimpleName);
}

TEST_CASE("split_subtokens") {
  CHECK(split_subtokens("getFooBar") == SubTokenSeq{"get", "foo", "bar"});
  CHECK(split_subtokens("max_value") == SubTokenSeq{"max", "value"});
  CHECK(split_subtokens("sourceExcerpt") == SubTokenSeq{"source", "excerpt"});
  CHECK(split_subtokens("utf8Name") == SubTokenSeq{"utf8", "name"});
  CHECK(split_subtokens("LINE") == SubTokenSeq{"line"});
  CHECK(split_subtokens("<=") == SubTokenSeq{"<="});
  CHECK(split_subtokens("__x__y") == SubTokenSeq{"x", "y"});
}

TEST_CASE("split_subtokens is idempotent on its joined output") {
  for (const auto& src : test_sources::corpus()) {
    const auto ast = parse(src);
    for (std::size_t i = 0; i < ast.leaf_count(); ++i) {
      const auto parts = split_subtokens(ast.token_of(i));
      REQUIRE_FALSE(parts.empty());
      std::string joined;
      for (std::size_t k = 0; k < parts.size(); ++k) joined += (k ? "_" : "") + parts[k];
      CHECK(split_subtokens(joined) == parts);
      for (const auto& p : parts) {
        CHECK(p.find('_') == std::string::npos);
        CHECK(std::none_of(p.begin(), p.end(), [](unsigned char c) { return std::isupper(c); }));
      }
    }
  }
}

TEST_CASE("is_language_keyword") {
  CHECK(is_language_keyword("if"));
  CHECK(is_language_keyword("int"));
  CHECK_FALSE(is_language_keyword("counter"));
  CHECK_FALSE(is_language_keyword("Int"));
}

TEST_CASE("symbol table resolves scoped declarations") {
  const auto ast = parse(
      "int f(int n) {\n"
      "  int total = 0;\n"
      "  for (int i = 0; i < n; i = i + 1) {\n"
      "    total = total + i;\n"
      "  }\n"
      "  return total;\n"
      "}\n");
  const SymbolTable symbols(ast);
  CHECK(symbols.declarations().size() == 3);
  // The final `total` sees n and total but not the loop variable.
  const int last = static_cast<int>(ast.leaf_count()) - 1;
  const auto visible = symbols.visible_at(last);
  std::vector<std::string> names;
  for (const auto* d : visible) names.push_back(d->name);
  CHECK(names == std::vector<std::string>{"n", "total"});
  const auto* d = symbols.resolve(ast, last);
  REQUIRE(d != nullptr);
  CHECK(d->type == "int");
  CHECK(name_role(ast, 1) == NameRole::MethodName);
  CHECK(name_role(ast, 3) == NameRole::Declaration);
}
