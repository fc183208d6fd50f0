#include "fixloc/lang.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>

#include "fixloc/error.hpp"

namespace fixloc {

namespace {

constexpr std::array<std::string_view, kNodeKindCount> kKindNames = {
    "MethodDeclaration",
    "Modifier",
    "TypeName",
    "SimpleName",
    "Parameter",
    "Block",
    "IfStatement",
    "WhileStatement",
    "ForStatement",
    "ReturnStatement",
    "VariableDeclarationStatement",
    "ExpressionStatement",
    "Assignment",
    "InfixExpression",
    "PrefixExpression",
    "MethodInvocation",
    "FieldAccess",
    "ParenthesizedExpression",
    "Operator",
    "NumberLiteral",
    "BooleanLiteral",
    "StringLiteral",
    "CharLiteral",
    "NullLiteral",
};

constexpr std::array<std::string_view, 18> kKeywords = {
    "if",     "else",    "while", "for",  "return", "int",   "long",  "float",   "double",
    "boolean", "char",   "void",  "true", "false",  "null",  "public", "private", "static",
};

constexpr std::array<std::string_view, 10> kTwoCharPuncts = {"==", "!=", "<=", ">=", "&&",
                                                             "||", "+=", "-=", "*=", "/="};
constexpr std::string_view kOneCharPuncts = "<>+-*/%!&|=,;(){}.";

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

struct BinaryOp {
  std::string_view text;
  int precedence;
  bool right_assoc;
};

// Logical connectives associate to the right so that `a && b && c` nests as
// a && (b && c); every other binary operator is left-associative.
constexpr std::array<BinaryOp, 15> kBinaryOps = {{
    {"||", 1, true},
    {"&&", 2, true},
    {"|", 3, false},
    {"&", 4, false},
    {"==", 5, false},
    {"!=", 5, false},
    {"<", 6, false},
    {"<=", 6, false},
    {">", 6, false},
    {">=", 6, false},
    {"+", 7, false},
    {"-", 7, false},
    {"*", 8, false},
    {"/", 8, false},
    {"%", 8, false},
}};

const BinaryOp* find_binary(const LexToken& tok) {
  if (tok.type != LexToken::Type::Punct) return nullptr;
  for (const auto& op : kBinaryOps)
    if (op.text == tok.text) return &op;
  return nullptr;
}

bool is_assign_op(const LexToken& tok) {
  return tok.type == LexToken::Type::Punct &&
         (tok.text == "=" || tok.text == "+=" || tok.text == "-=" || tok.text == "*=" ||
          tok.text == "/=");
}

bool is_modifier(const LexToken& tok) {
  return tok.type == LexToken::Type::Keyword &&
         (tok.text == "public" || tok.text == "private" || tok.text == "static");
}

bool is_type_keyword(const LexToken& tok) {
  return tok.type == LexToken::Type::Keyword && (is_primitive_type(tok.text) || tok.text == "void");
}

class Parser {
 public:
  explicit Parser(std::string_view source) : toks_(lex(source)) {}

  MethodAst run() {
    ast_.add_node(NodeKind::MethodDeclaration, -1);
    while (is_modifier(peek())) leaf(NodeKind::Modifier, 0, next());
    parse_type(0, /*allow_void=*/true);
    leaf(NodeKind::SimpleName, 0, expect_identifier("method name"));
    expect("(");
    if (!check(")")) {
      do {
        const int param = ast_.add_node(NodeKind::Parameter, 0);
        parse_type(param, /*allow_void=*/false);
        leaf(NodeKind::SimpleName, param, expect_identifier("parameter name"));
      } while (accept(","));
    }
    expect(")");
    parse_block(0);
    if (peek().type != LexToken::Type::End) fail(peek(), "unexpected token after method body");
    ast_.rebuild_leaves();
    return std::move(ast_);
  }

 private:
  const LexToken& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const LexToken& next() {
    const LexToken& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool check(std::string_view punct) const {
    return peek().type == LexToken::Type::Punct && peek().text == punct;
  }
  bool check_keyword(std::string_view kw) const {
    return peek().type == LexToken::Type::Keyword && peek().text == kw;
  }
  bool accept(std::string_view punct) {
    if (!check(punct)) return false;
    next();
    return true;
  }
  void expect(std::string_view punct) {
    if (!accept(punct)) fail(peek(), "expected '" + std::string(punct) + "'");
  }
  const LexToken& expect_identifier(const char* what) {
    if (peek().type != LexToken::Type::Identifier) fail(peek(), std::string("expected ") + what);
    return next();
  }
  [[noreturn]] static void fail(const LexToken& at, const std::string& msg) {
    const std::string shown = at.type == LexToken::Type::End ? "end of input" : "'" + at.text + "'";
    throw SyntaxError(at.line, at.column, msg + " at " + shown);
  }

  int leaf(NodeKind kind, int parent, const LexToken& tok) {
    const int id = ast_.add_node(kind, parent, tok.text);
    ast_.node(id).line = tok.line;
    ast_.node(id).column = tok.column;
    return id;
  }
  void attach(int parent, int child) {
    ast_.node(child).parent = parent;
    ast_.node(parent).children.push_back(child);
  }

  bool starts_declaration() const {
    if (is_type_keyword(peek())) return true;
    return peek().type == LexToken::Type::Identifier &&
           peek(1).type == LexToken::Type::Identifier;
  }

  void parse_type(int parent, bool allow_void) {
    const LexToken& t = peek();
    if (t.type == LexToken::Type::Identifier ||
        (is_type_keyword(t) && (allow_void || t.text != "void"))) {
      leaf(NodeKind::TypeName, parent, next());
      return;
    }
    fail(t, "expected a type");
  }

  void parse_block(int parent) {
    expect("{");
    const int block = ast_.add_node(NodeKind::Block, parent);
    while (!check("}")) {
      if (peek().type == LexToken::Type::End) fail(peek(), "unterminated block");
      parse_statement(block);
    }
    next();
  }

  void parse_statement(int parent) {
    if (check("{")) {
      parse_block(parent);
    } else if (check_keyword("if")) {
      next();
      const int node = ast_.add_node(NodeKind::IfStatement, parent);
      expect("(");
      attach(node, parse_expression(1));
      expect(")");
      parse_statement(node);
      if (check_keyword("else")) {
        next();
        parse_statement(node);
      }
    } else if (check_keyword("while")) {
      next();
      const int node = ast_.add_node(NodeKind::WhileStatement, parent);
      expect("(");
      attach(node, parse_expression(1));
      expect(")");
      parse_statement(node);
    } else if (check_keyword("for")) {
      next();
      const int node = ast_.add_node(NodeKind::ForStatement, parent);
      expect("(");
      if (starts_declaration())
        parse_declaration(node);
      else
        parse_expression_statement(node);
      expect(";");
      attach(node, parse_expression(1));
      expect(";");
      parse_expression_statement(node);
      expect(")");
      parse_statement(node);
    } else if (check_keyword("return")) {
      next();
      const int node = ast_.add_node(NodeKind::ReturnStatement, parent);
      attach(node, parse_expression(1));
      expect(";");
    } else if (starts_declaration()) {
      parse_declaration(parent);
      expect(";");
    } else {
      parse_expression_statement(parent);
      expect(";");
    }
  }

  void parse_declaration(int parent) {
    const int node = ast_.add_node(NodeKind::VariableDeclarationStatement, parent);
    parse_type(node, /*allow_void=*/false);
    leaf(NodeKind::SimpleName, node, expect_identifier("variable name"));
    if (accept("=")) attach(node, parse_expression(1));
  }

  // Call or assignment, without the trailing ';'.
  void parse_expression_statement(int parent) {
    const LexToken start = peek();
    const int expr = parse_expression(1);
    const int node = ast_.add_node(NodeKind::ExpressionStatement, parent);
    if (is_assign_op(peek())) {
      const NodeKind lhs = ast_.node(expr).kind;
      if (lhs != NodeKind::SimpleName && lhs != NodeKind::FieldAccess)
        fail(peek(), "invalid assignment target");
      const int assign = ast_.add_node(NodeKind::Assignment, node);
      attach(assign, expr);
      leaf(NodeKind::Operator, assign, next());
      attach(assign, parse_expression(1));
      return;
    }
    if (ast_.node(expr).kind != NodeKind::MethodInvocation) fail(start, "not a statement");
    attach(node, expr);
  }

  int parse_expression(int min_precedence) {
    int lhs = parse_unary();
    while (const BinaryOp* op = find_binary(peek())) {
      if (op->precedence < min_precedence) break;
      const int infix = ast_.add_node(NodeKind::InfixExpression, -1);
      attach(infix, lhs);
      leaf(NodeKind::Operator, infix, next());
      attach(infix, parse_expression(op->right_assoc ? op->precedence : op->precedence + 1));
      lhs = infix;
    }
    return lhs;
  }

  int parse_unary() {
    if (check("!") || check("-")) {
      const int node = ast_.add_node(NodeKind::PrefixExpression, -1);
      leaf(NodeKind::Operator, node, next());
      attach(node, parse_unary());
      return node;
    }
    return parse_postfix(parse_primary());
  }

  int parse_arguments(int call) {
    expect("(");
    if (!check(")")) {
      do attach(call, parse_expression(1));
      while (accept(","));
    }
    expect(")");
    return call;
  }

  int parse_primary() {
    const LexToken& t = peek();
    switch (t.type) {
      case LexToken::Type::Number:
        return leaf(NodeKind::NumberLiteral, -1, next());
      case LexToken::Type::String:
        return leaf(NodeKind::StringLiteral, -1, next());
      case LexToken::Type::Char:
        return leaf(NodeKind::CharLiteral, -1, next());
      case LexToken::Type::Keyword:
        if (t.text == "true" || t.text == "false") return leaf(NodeKind::BooleanLiteral, -1, next());
        if (t.text == "null") return leaf(NodeKind::NullLiteral, -1, next());
        break;
      case LexToken::Type::Identifier: {
        if (peek(1).type == LexToken::Type::Punct && peek(1).text == "(") {
          const int call = ast_.add_node(NodeKind::MethodInvocation, -1);
          leaf(NodeKind::SimpleName, call, next());
          return parse_arguments(call);
        }
        return leaf(NodeKind::SimpleName, -1, next());
      }
      case LexToken::Type::Punct:
        if (t.text == "(") {
          next();
          const int node = ast_.add_node(NodeKind::ParenthesizedExpression, -1);
          attach(node, parse_expression(1));
          expect(")");
          return node;
        }
        break;
      default:
        break;
    }
    fail(t, "expected an expression");
  }

  int parse_postfix(int expr) {
    while (accept(".")) {
      const LexToken& name = expect_identifier("member name");
      if (check("(")) {
        const int call = ast_.add_node(NodeKind::MethodInvocation, -1);
        ast_.node(call).has_receiver = true;
        attach(call, expr);
        leaf(NodeKind::SimpleName, call, name);
        expr = parse_arguments(call);
      } else {
        const int access = ast_.add_node(NodeKind::FieldAccess, -1);
        attach(access, expr);
        leaf(NodeKind::SimpleName, access, name);
        expr = access;
      }
    }
    return expr;
  }

  std::vector<LexToken> toks_;
  std::size_t pos_ = 0;
  MethodAst ast_;
};

// ---------------------------------------------------------------------------
// Rendering

class Renderer {
 public:
  explicit Renderer(const MethodAst& ast) : ast_(ast) {}

  std::string method() {
    const Node& root = ast_.node(ast_.root());
    std::string out;
    std::vector<std::string> params;
    int block = -1;
    for (const int c : root.children) {
      const Node& n = ast_.node(c);
      switch (n.kind) {
        case NodeKind::Modifier:
        case NodeKind::TypeName:
          out += n.token + " ";
          break;
        case NodeKind::SimpleName:
          out += n.token;
          break;
        case NodeKind::Parameter:
          params.push_back(join_leaves(n, " "));
          break;
        case NodeKind::Block:
          block = c;
          break;
        default:
          break;
      }
    }
    out += "(";
    for (std::size_t i = 0; i < params.size(); ++i) out += (i ? ", " : "") + params[i];
    out += ")";
    if (block >= 0) out += " " + this->block(block, 0);
    return out + "\n";
  }

 private:
  static std::string indent(int level) { return std::string(static_cast<std::size_t>(level) * 2, ' '); }

  std::string join_leaves(const Node& n, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < n.children.size(); ++i)
      out += (i ? sep : "") + expr(n.children[i]);
    return out;
  }

  std::string block(int id, int level) {
    std::string out = "{\n";
    for (const int s : ast_.node(id).children) out += indent(level + 1) + stmt(s, level + 1) + "\n";
    return out + indent(level) + "}";
  }

  std::string body(int id, int level) {
    if (ast_.node(id).kind == NodeKind::Block) return " " + block(id, level);
    return "\n" + indent(level + 1) + stmt(id, level + 1);
  }

  // Statement text without leading indentation.
  std::string stmt(int id, int level) {
    const Node& n = ast_.node(id);
    const auto& ch = n.children;
    switch (n.kind) {
      case NodeKind::Block:
        return block(id, level);
      case NodeKind::IfStatement: {
        std::string out = "if (" + expr(ch.at(0)) + ")" + body(ch.at(1), level);
        if (ch.size() > 2) {
          out += ast_.node(ch[1]).kind == NodeKind::Block ? " else" : "\n" + indent(level) + "else";
          const NodeKind ek = ast_.node(ch[2]).kind;
          out += ek == NodeKind::IfStatement ? " " + stmt(ch[2], level) : body(ch[2], level);
        }
        return out;
      }
      case NodeKind::WhileStatement:
        return "while (" + expr(ch.at(0)) + ")" + body(ch.at(1), level);
      case NodeKind::ForStatement:
        return "for (" + simple(ch.at(0)) + "; " + expr(ch.at(1)) + "; " + simple(ch.at(2)) + ")" +
               body(ch.at(3), level);
      case NodeKind::ReturnStatement:
        return "return " + expr(ch.at(0)) + ";";
      default:
        return simple(id) + ";";
    }
  }

  // Declaration or expression statement without the trailing ';'.
  std::string simple(int id) {
    const Node& n = ast_.node(id);
    if (n.kind == NodeKind::VariableDeclarationStatement) {
      std::string out;
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i == 1) out += " ";
        if (i == 2) out += " = ";
        out += expr(n.children[i]);
      }
      return out;
    }
    if (n.kind == NodeKind::ExpressionStatement) return n.children.empty() ? "" : expr(n.children[0]);
    return expr(id);
  }

  std::string expr(int id) {
    const Node& n = ast_.node(id);
    if (is_leaf_kind(n.kind)) return n.token;
    const auto& ch = n.children;
    switch (n.kind) {
      case NodeKind::Assignment:
      case NodeKind::InfixExpression:
        return join_leaves(n, " ");
      case NodeKind::PrefixExpression:
        return join_leaves(n, "");
      case NodeKind::ParenthesizedExpression:
        return "(" + join_leaves(n, " ") + ")";
      case NodeKind::FieldAccess:
        return join_leaves(n, ".");
      case NodeKind::MethodInvocation: {
        std::size_t i = 0;
        std::string out;
        if (n.has_receiver && i < ch.size()) out += expr(ch[i++]) + ".";
        if (i < ch.size()) out += expr(ch[i++]);
        out += "(";
        for (std::size_t a = i; a < ch.size(); ++a) out += (a > i ? ", " : "") + expr(ch[a]);
        return out + ")";
      }
      default:
        return join_leaves(n, " ");
    }
  }

  const MethodAst& ast_;
};

bool equal_subtrees(const MethodAst& a, int ia, const MethodAst& b, int ib) {
  const Node& x = a.node(ia);
  const Node& y = b.node(ib);
  if (x.kind != y.kind || x.token != y.token || x.has_receiver != y.has_receiver ||
      x.children.size() != y.children.size())
    return false;
  for (std::size_t i = 0; i < x.children.size(); ++i)
    if (!equal_subtrees(a, x.children[i], b, y.children[i])) return false;
  return true;
}

int last_leaf_in(const MethodAst& ast, int id) {
  const Node& n = ast.node(id);
  if (n.children.empty()) return ast.leaf_ordinal(id);
  for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
    const int r = last_leaf_in(ast, *it);
    if (r >= 0) return r;
  }
  return -1;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(NodeKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<NodeKind> node_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<NodeKind>(i);
  return std::nullopt;
}

bool is_leaf_kind(NodeKind kind) {
  switch (kind) {
    case NodeKind::Modifier:
    case NodeKind::TypeName:
    case NodeKind::SimpleName:
    case NodeKind::Operator:
    case NodeKind::NumberLiteral:
    case NodeKind::BooleanLiteral:
    case NodeKind::StringLiteral:
    case NodeKind::CharLiteral:
    case NodeKind::NullLiteral:
      return true;
    default:
      return false;
  }
}

bool is_statement_kind(NodeKind kind) {
  switch (kind) {
    case NodeKind::IfStatement:
    case NodeKind::WhileStatement:
    case NodeKind::ForStatement:
    case NodeKind::ReturnStatement:
    case NodeKind::VariableDeclarationStatement:
    case NodeKind::ExpressionStatement:
      return true;
    default:
      return false;
  }
}

int MethodAst::add_node(NodeKind kind, int parent, std::string token) {
  const int id = static_cast<int>(nodes_.size());
  Node n;
  n.kind = kind;
  n.parent = parent;
  n.token = std::move(token);
  nodes_.push_back(std::move(n));
  if (parent >= 0) nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
  return id;
}

void MethodAst::rebuild_leaves() {
  leaves_.clear();
  std::vector<int> stack{root()};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (is_leaf_kind(n.kind)) {
      leaves_.push_back(id);
      continue;
    }
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
}

int MethodAst::leaf_ordinal(int node_id) const {
  const auto it = std::find(leaves_.begin(), leaves_.end(), node_id);
  return it == leaves_.end() ? -1 : static_cast<int>(it - leaves_.begin());
}

std::vector<LexToken> lex(std::string_view src) {
  std::vector<LexToken> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (src.substr(i, 2) == "//") {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (src.substr(i, 2) == "/*") {
      const auto end = src.find("*/", i + 2);
      if (end == std::string_view::npos) throw SyntaxError(line, col, "unterminated comment");
      advance(end + 2 - i);
      continue;
    }
    LexToken tok;
    tok.line = line;
    tok.column = col;
    std::size_t len = 0;
    if (is_ident_start(c)) {
      while (i + len < src.size() && is_ident_char(src[i + len])) ++len;
      tok.text = std::string(src.substr(i, len));
      tok.type = is_language_keyword(tok.text) ? LexToken::Type::Keyword : LexToken::Type::Identifier;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i + len < src.size() && std::isdigit(static_cast<unsigned char>(src[i + len]))) ++len;
      if (i + len + 1 < src.size() && src[i + len] == '.' &&
          std::isdigit(static_cast<unsigned char>(src[i + len + 1]))) {
        ++len;
        while (i + len < src.size() && std::isdigit(static_cast<unsigned char>(src[i + len]))) ++len;
      }
      if (i + len < src.size() && std::string_view("lLfFdD").find(src[i + len]) != std::string_view::npos)
        ++len;
      tok.type = LexToken::Type::Number;
      tok.text = std::string(src.substr(i, len));
    } else if (c == '"' || c == '\'') {
      len = 1;
      while (i + len < src.size() && src[i + len] != c && src[i + len] != '\n') {
        len += src[i + len] == '\\' ? 2 : 1;
      }
      if (i + len >= src.size() || src[i + len] != c)
        throw SyntaxError(line, col, "unterminated literal");
      ++len;
      tok.type = c == '"' ? LexToken::Type::String : LexToken::Type::Char;
      tok.text = std::string(src.substr(i, len));
    } else {
      for (const auto p : kTwoCharPuncts)
        if (src.substr(i, 2) == p) len = 2;
      if (len == 0 && kOneCharPuncts.find(c) != std::string_view::npos) len = 1;
      if (len == 0) throw SyntaxError(line, col, std::string("unexpected character '") + c + "'");
      tok.type = LexToken::Type::Punct;
      tok.text = std::string(src.substr(i, len));
    }
    advance(len);
    out.push_back(std::move(tok));
  }
  LexToken end;
  end.type = LexToken::Type::End;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

MethodAst parse(std::string_view source) { return Parser(source).run(); }

std::string render(const MethodAst& ast) { return Renderer(ast).method(); }

bool structurally_equal(const MethodAst& a, const MethodAst& b) {
  return equal_subtrees(a, a.root(), b, b.root());
}

AstPath path_of_leaf(const MethodAst& ast, std::size_t leaf_index) {
  AstPath path;
  path.leaf_index = static_cast<int>(leaf_index);
  for (int id = ast.leaves()[leaf_index]; id >= 0; id = ast.node(id).parent)
    path.kinds.push_back(ast.node(id).kind);
  std::reverse(path.kinds.begin(), path.kinds.end());
  return path;
}

std::vector<AstPath> ast_paths(const MethodAst& ast) {
  std::vector<AstPath> out;
  out.reserve(ast.leaf_count());
  for (std::size_t i = 0; i < ast.leaf_count(); ++i) out.push_back(path_of_leaf(ast, i));
  return out;
}

std::string path_to_string(std::span<const NodeKind> kinds) {
  std::string out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ">";
    out += to_string(kinds[i]);
  }
  return out;
}

SubTokenSeq split_subtokens(std::string_view token) {
  SubTokenSeq parts;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) parts.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < token.size(); ++i) {
    const auto c = static_cast<unsigned char>(token[i]);
    if (c == '_') {
      flush();
      continue;
    }
    if (std::isupper(c) && i > 0) {
      const auto prev = static_cast<unsigned char>(token[i - 1]);
      if (std::islower(prev) || std::isdigit(prev)) flush();
    }
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  // All-underscore tokens have no parts; keep them whole.
  if (parts.empty()) parts.emplace_back(token);
  return parts;
}

bool is_language_keyword(std::string_view token) {
  return std::find(kKeywords.begin(), kKeywords.end(), token) != kKeywords.end();
}

bool is_primitive_type(std::string_view token) {
  return std::find(std::begin(kPrimitiveTypes), std::end(kPrimitiveTypes), token) !=
         std::end(kPrimitiveTypes);
}

NameRole name_role(const MethodAst& ast, std::size_t leaf_index) {
  const int id = ast.leaves()[leaf_index];
  const Node& n = ast.node(id);
  if (n.parent < 0) return NameRole::Variable;
  const Node& p = ast.node(n.parent);
  const auto slot = static_cast<std::size_t>(
      std::find(p.children.begin(), p.children.end(), id) - p.children.begin());
  switch (p.kind) {
    case NodeKind::MethodDeclaration:
      return NameRole::MethodName;
    case NodeKind::Parameter:
    case NodeKind::VariableDeclarationStatement:
      return NameRole::Declaration;
    case NodeKind::MethodInvocation:
      return slot == (p.has_receiver ? 1u : 0u) ? NameRole::MethodName : NameRole::Variable;
    case NodeKind::FieldAccess:
      return slot == 1 ? NameRole::FieldName : NameRole::Variable;
    default:
      return NameRole::Variable;
  }
}

SymbolTable::SymbolTable(const MethodAst& ast) {
  if (ast.leaf_count() == 0) return;
  const int method_end = static_cast<int>(ast.leaf_count()) - 1;
  auto declare = [&](int decl_node, int scope_end) {
    const Node& d = ast.node(decl_node);
    if (d.children.size() < 2) return;
    Declaration decl;
    decl.type = ast.node(d.children[0]).token;
    decl.name = ast.node(d.children[1]).token;
    decl.name_leaf = ast.leaf_ordinal(d.children[1]);
    decl.scope_end = scope_end;
    decls_.push_back(std::move(decl));
  };
  std::function<void(int)> walk = [&](int id) {
    const Node& n = ast.node(id);
    for (const int c : n.children) {
      const Node& child = ast.node(c);
      if (child.kind == NodeKind::Parameter) {
        declare(c, method_end);
      } else if (child.kind == NodeKind::VariableDeclarationStatement) {
        declare(c, last_leaf_in(ast, id));
      }
      walk(c);
    }
  };
  walk(ast.root());
  std::stable_sort(decls_.begin(), decls_.end(),
                   [](const Declaration& a, const Declaration& b) { return a.name_leaf < b.name_leaf; });
}

std::vector<const Declaration*> SymbolTable::visible_at(int leaf_index) const {
  std::vector<const Declaration*> out;
  for (const auto& d : decls_)
    if (d.name_leaf < leaf_index && leaf_index <= d.scope_end) out.push_back(&d);
  return out;
}

const Declaration* SymbolTable::resolve(const MethodAst& ast, int leaf_index) const {
  const auto& token = ast.token_of(static_cast<std::size_t>(leaf_index));
  const Declaration* best = nullptr;
  for (const auto& d : decls_) {
    if (d.name != token) continue;
    if (d.name_leaf == leaf_index) return &d;
    if (d.name_leaf < leaf_index && leaf_index <= d.scope_end) best = &d;
  }
  return best;
}

}  // namespace fixloc
