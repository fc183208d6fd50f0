#pragma once

// Mini-language front end: lexer, recursive-descent parser, canonical
// renderer, AST paths and identifier sub-token splitting.
//
// The language is a Java-like subset with exactly one method per source
// unit. The grammar lives in docs/grammar.md.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fixloc {

enum class NodeKind : std::uint8_t {
  MethodDeclaration,
  Modifier,
  TypeName,
  SimpleName,
  Parameter,
  Block,
  IfStatement,
  WhileStatement,
  ForStatement,
  ReturnStatement,
  VariableDeclarationStatement,
  ExpressionStatement,
  Assignment,
  InfixExpression,
  PrefixExpression,
  MethodInvocation,
  FieldAccess,
  ParenthesizedExpression,
  Operator,
  NumberLiteral,
  BooleanLiteral,
  StringLiteral,
  CharLiteral,
  NullLiteral,
};

inline constexpr int kNodeKindCount = 24;

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(std::string_view name);
bool is_leaf_kind(NodeKind kind);
bool is_statement_kind(NodeKind kind);

struct Node {
  NodeKind kind = NodeKind::MethodDeclaration;
  int parent = -1;
  std::vector<int> children;
  std::string token;  // leaves only
  int line = 0;       // 1-based source position of a leaf token
  int column = 0;
  bool has_receiver = false;  // MethodInvocation: first child is the receiver
};

/// Parsed method. Node 0 is the MethodDeclaration root; nodes are addressed by
/// stable integer ids so that edits (used by the mutator and the repair
/// search) can add or drop nodes without invalidating other handles.
class MethodAst {
 public:
  int root() const noexcept { return 0; }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Leaf node ids in pre-order.
  std::span<const int> leaves() const noexcept { return leaves_; }
  std::size_t leaf_count() const noexcept { return leaves_.size(); }
  const Node& leaf(std::size_t ordinal) const { return node(leaves_.at(ordinal)); }
  const std::string& token_of(std::size_t ordinal) const { return leaf(ordinal).token; }

  /// Ordinal of a leaf node id, or -1 when the id is not a reachable leaf.
  int leaf_ordinal(int node_id) const;

  int add_node(NodeKind kind, int parent, std::string token = {});
  /// Recomputes the pre-order leaf list after structural edits.
  void rebuild_leaves();

 private:
  std::vector<Node> nodes_;
  std::vector<int> leaves_;
};

struct LexToken {
  enum class Type { Identifier, Keyword, Number, String, Char, Punct, End };
  Type type = Type::End;
  std::string text;
  int line = 1;
  int column = 1;
};

/// Tokenizes mini-language source; comments and whitespace are dropped.
/// Throws SyntaxError on unknown characters or unterminated literals.
std::vector<LexToken> lex(std::string_view source);

/// Throws SyntaxError (with line and column) on any grammar violation.
MethodAst parse(std::string_view source);

/// Canonical rendering: one statement per line, two-space indentation.
/// `parse(render(ast))` is structurally equal to `ast`.
std::string render(const MethodAst& ast);

/// Compares kinds, tokens and shape; ignores source positions.
bool structurally_equal(const MethodAst& a, const MethodAst& b);

struct AstPath {
  std::vector<NodeKind> kinds;  // root to leaf inclusive
  int leaf_index = 0;           // pre-order leaf ordinal

  friend bool operator==(const AstPath&, const AstPath&) = default;
};

std::vector<AstPath> ast_paths(const MethodAst& ast);
AstPath path_of_leaf(const MethodAst& ast, std::size_t leaf_index);
std::string path_to_string(std::span<const NodeKind> kinds);

using SubTokenSeq = std::vector<std::string>;

/// Splits on underscores and lower/digit-to-upper boundaries, lowercasing
/// every part. Digits stay attached to their run ("utf8Name" -> utf8, name).
SubTokenSeq split_subtokens(std::string_view token);

bool is_language_keyword(std::string_view token);

inline constexpr std::string_view kPrimitiveTypes[] = {"int",    "long",    "float",
                                                       "double", "boolean", "char"};
bool is_primitive_type(std::string_view token);

// ---------------------------------------------------------------------------
// Scope-aware symbol information for SimpleName leaves.

enum class NameRole { Declaration, Variable, MethodName, FieldName };

NameRole name_role(const MethodAst& ast, std::size_t leaf_index);

struct Declaration {
  std::string name;
  std::string type;
  int name_leaf = 0;  // leaf ordinal of the declaring SimpleName
  int scope_end = 0;  // last leaf ordinal where the name is visible
};

class SymbolTable {
 public:
  explicit SymbolTable(const MethodAst& ast);

  std::span<const Declaration> declarations() const noexcept { return decls_; }
  /// Declarations whose scope covers `leaf_index` and whose name precedes it.
  std::vector<const Declaration*> visible_at(int leaf_index) const;
  /// Declaration a variable reference resolves to, if any.
  const Declaration* resolve(const MethodAst& ast, int leaf_index) const;

 private:
  std::vector<Declaration> decls_;
};

}  // namespace fixloc
