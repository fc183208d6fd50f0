#include "fixloc/mutation.hpp"

#include <algorithm>
#include <functional>
#include <istream>
#include <ostream>
#include <set>

#include "fixloc/error.hpp"
#include "fixloc/rng.hpp"

namespace fixloc {

namespace {

const std::vector<std::vector<std::string>>& operator_classes() {
  static const std::vector<std::vector<std::string>> classes = {
      {"==", "!=", "<", "<=", ">", ">="},
      {"+", "-", "*", "/", "%"},
      {"&&", "||"},
      {"&", "|"},
  };
  return classes;
}

const std::vector<std::string>* class_of(std::string_view op) {
  for (const auto& c : operator_classes())
    if (std::find(c.begin(), c.end(), op) != c.end()) return &c;
  return nullptr;
}

using Key = std::pair<std::vector<NodeKind>, std::string>;

Key leaf_key(const MethodAst& ast, std::size_t leaf) {
  return {path_of_leaf(ast, leaf).kinds, ast.token_of(leaf)};
}

bool is_infix_operator(const MethodAst& ast, std::size_t leaf) {
  const Node& n = ast.leaf(leaf);
  return n.kind == NodeKind::Operator && ast.node(n.parent).kind == NodeKind::InfixExpression &&
         class_of(n.token) != nullptr;
}

bool is_primitive_type_leaf(const MethodAst& ast, std::size_t leaf) {
  const Node& n = ast.leaf(leaf);
  return n.kind == NodeKind::TypeName && is_primitive_type(n.token);
}

// Position of the first argument among a call's children.
std::size_t first_arg_slot(const Node& call) { return call.has_receiver ? 2 : 1; }

bool is_call_argument_leaf(const MethodAst& ast, std::size_t leaf) {
  const int id = ast.leaves()[leaf];
  const Node& n = ast.node(id);
  if (n.parent < 0) return false;
  const Node& p = ast.node(n.parent);
  if (p.kind != NodeKind::MethodInvocation) return false;
  const auto slot = static_cast<std::size_t>(std::find(p.children.begin(), p.children.end(), id) - p.children.begin());
  return slot >= first_arg_slot(p);
}

bool is_resolved_variable(const MethodAst& ast, const SymbolTable& symbols, std::size_t leaf) {
  if (ast.leaf(leaf).kind != NodeKind::SimpleName) return false;
  if (name_role(ast, leaf) != NameRole::Variable) return false;
  return symbols.resolve(ast, static_cast<int>(leaf)) != nullptr;
}

// Identifiers that may replace the variable use at `leaf`, same type first.
std::vector<std::string> swap_targets(const MethodAst& ast, const SymbolTable& symbols, std::size_t leaf) {
  const auto& token = ast.token_of(leaf);
  const Declaration* own = symbols.resolve(ast, static_cast<int>(leaf));
  std::vector<std::string> same, other;
  for (const Declaration* d : symbols.visible_at(static_cast<int>(leaf))) {
    if (d->name == token) continue;
    auto& bucket = own && d->type == own->type ? same : other;
    if (std::find(bucket.begin(), bucket.end(), d->name) == bucket.end()) bucket.push_back(d->name);
  }
  return same.empty() ? other : same;
}

struct Attempt {
  MethodAst buggy;
  std::size_t oracle_leaf = 0;
};

// Tries one concrete edit; returns nothing if the rendered mutant does not
// reparse to the edited tree or if the fix would be ambiguous to extract.
std::optional<PatchRecord> finish(const MethodAst& fixed, const Attempt& a, ChangeOperator fix) {
  const std::string buggy_src = render(a.buggy);
  MethodAst reparsed;
  try {
    reparsed = parse(buggy_src);
  } catch (const SyntaxError&) {
    return std::nullopt;
  }
  if (!structurally_equal(reparsed, a.buggy)) return std::nullopt;
  PatchRecord r;
  r.buggy_src = buggy_src;
  r.fixed_src = render(fixed);
  if (r.buggy_src == r.fixed_src) return std::nullopt;
  r.oracle.push_back(OperationPath{reparsed.token_of(a.oracle_leaf), path_of_leaf(reparsed, a.oracle_leaf), fix});
  return r;
}

std::vector<std::size_t> sites(const MethodAst& ast, MutationKind kind) {
  const SymbolTable symbols(ast);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ast.leaf_count(); ++i) {
    bool ok = false;
    switch (kind) {
      case MutationKind::OperatorSwap:
        ok = is_infix_operator(ast, i);
        break;
      case MutationKind::BooleanFlip:
        ok = ast.leaf(i).kind == NodeKind::BooleanLiteral;
        break;
      case MutationKind::TypeSwap:
        ok = is_primitive_type_leaf(ast, i);
        break;
      case MutationKind::IdentifierSwap:
        ok = is_resolved_variable(ast, symbols, i) && !swap_targets(ast, symbols, i).empty();
        break;
      case MutationKind::TokenDelete:
        // The removed argument must differ from the leaf that follows it so
        // the insertion point is unambiguous.
        ok = is_call_argument_leaf(ast, i) &&
             (i + 1 == ast.leaf_count() || leaf_key(ast, i) != leaf_key(ast, i + 1));
        break;
      case MutationKind::TokenInsert: {
        // Sites are call-name leaves; the argument goes somewhere in the list.
        const Node& n = ast.leaf(i);
        ok = n.parent >= 0 && ast.node(n.parent).kind == NodeKind::MethodInvocation &&
             name_role(ast, i) == NameRole::MethodName && !symbols.visible_at(static_cast<int>(i)).empty();
        break;
      }
    }
    if (ok) out.push_back(i);
  }
  return out;
}

std::optional<PatchRecord> try_site(const MethodAst& fixed, MutationKind kind, std::size_t leaf, Rng& rng) {
  const int id = fixed.leaves()[leaf];
  switch (kind) {
    case MutationKind::OperatorSwap: {
      auto choices = *class_of(fixed.token_of(leaf));
      std::erase(choices, fixed.token_of(leaf));
      shuffle(choices, rng);
      for (const auto& c : choices) {
        Attempt a{fixed, leaf};
        a.buggy.node(id).token = c;
        if (auto r = finish(fixed, a, ChangeOperator::Update)) return r;
      }
      return std::nullopt;
    }
    case MutationKind::BooleanFlip: {
      Attempt a{fixed, leaf};
      a.buggy.node(id).token = fixed.token_of(leaf) == "true" ? "false" : "true";
      return finish(fixed, a, ChangeOperator::Update);
    }
    case MutationKind::TypeSwap: {
      std::vector<std::string> choices(std::begin(kPrimitiveTypes), std::end(kPrimitiveTypes));
      std::erase(choices, fixed.token_of(leaf));
      Attempt a{fixed, leaf};
      a.buggy.node(id).token = choices[uniform_index(rng, choices.size())];
      return finish(fixed, a, ChangeOperator::Update);
    }
    case MutationKind::IdentifierSwap: {
      const SymbolTable symbols(fixed);
      const auto targets = swap_targets(fixed, symbols, leaf);
      Attempt a{fixed, leaf};
      a.buggy.node(id).token = targets[uniform_index(rng, targets.size())];
      return finish(fixed, a, ChangeOperator::Update);
    }
    case MutationKind::TokenDelete: {
      Attempt a{fixed, leaf - 1};
      Node& parent = a.buggy.node(fixed.node(id).parent);
      std::erase(parent.children, id);
      a.buggy.node(id).parent = -1;
      a.buggy.rebuild_leaves();
      return finish(fixed, a, ChangeOperator::Insert);
    }
    case MutationKind::TokenInsert: {
      const int call = fixed.node(id).parent;
      const Node& call_node = fixed.node(call);
      const std::size_t first = first_arg_slot(call_node);
      const std::size_t nargs = call_node.children.size() - first;
      const SymbolTable symbols(fixed);
      std::vector<std::string> names;
      for (const Declaration* d : symbols.visible_at(static_cast<int>(leaf)))
        if (std::find(names.begin(), names.end(), d->name) == names.end()) names.push_back(d->name);
      const std::size_t slot = first + uniform_index(rng, nargs + 1);
      shuffle(names, rng);
      for (const auto& name : names) {
        Attempt a{fixed, 0};
        const int fresh = a.buggy.add_node(NodeKind::SimpleName, call, name);
        auto& kids = a.buggy.node(call).children;
        kids.pop_back();
        kids.insert(kids.begin() + static_cast<std::ptrdiff_t>(slot), fresh);
        a.buggy.rebuild_leaves();
        const auto j = static_cast<std::size_t>(a.buggy.leaf_ordinal(fresh));
        if (j + 1 < a.buggy.leaf_count() && leaf_key(a.buggy, j) == leaf_key(a.buggy, j + 1)) continue;
        a.oracle_leaf = j;
        if (auto r = finish(fixed, a, ChangeOperator::Delete)) return r;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(MutationKind kind) {
  switch (kind) {
    case MutationKind::OperatorSwap:
      return "OperatorSwap";
    case MutationKind::BooleanFlip:
      return "BooleanFlip";
    case MutationKind::TypeSwap:
      return "TypeSwap";
    case MutationKind::IdentifierSwap:
      return "IdentifierSwap";
    case MutationKind::TokenDelete:
      return "TokenDelete";
    case MutationKind::TokenInsert:
      return "TokenInsert";
  }
  return "?";
}

MutationKind mutation_kind_from_string(std::string_view name) {
  for (const auto k : kAllMutationKinds)
    if (to_string(k) == name) return k;
  throw FormatError("unknown mutation kind '" + std::string(name) + "'");
}

ChangeOperator fix_operator(MutationKind kind) {
  switch (kind) {
    case MutationKind::TokenDelete:
      return ChangeOperator::Insert;
    case MutationKind::TokenInsert:
      return ChangeOperator::Delete;
    default:
      return ChangeOperator::Update;
  }
}

std::size_t eligible_site_count(const MethodAst& method, MutationKind kind) { return sites(method, kind).size(); }

MutantRecord mutate(std::string_view method_src, std::optional<MutationKind> kind, std::uint64_t seed) {
  const auto fixed = parse(method_src);
  Rng rng(derive_seed(seed, "mutate"));
  std::vector<MutationKind> kinds;
  if (kind) {
    kinds.push_back(*kind);
  } else {
    for (const auto k : kAllMutationKinds)
      if (eligible_site_count(fixed, k) > 0) kinds.push_back(k);
    shuffle(kinds, rng);
  }
  for (const auto k : kinds) {
    auto candidates = sites(fixed, k);
    shuffle(candidates, rng);
    for (const auto leaf : candidates) {
      if (auto r = try_site(fixed, k, leaf, rng)) return MutantRecord{std::move(*r), k, seed};
    }
  }
  throw NoEligibleLeaf(kind ? "no site for " + std::string(to_string(*kind)) : std::string("no mutable site"));
}

std::vector<MutantRecord> generate_corpus(std::span<const std::string> seed_methods, std::size_t n,
                                          const KindMix& mix, std::uint64_t seed) {
  if (n == 0) throw InfeasibleMix("corpus size must be positive");
  double total = 0.0;
  for (const double w : mix) {
    if (w < 0) throw InfeasibleMix("negative kind weight");
    total += w;
  }
  if (total <= 0) throw InfeasibleMix("all kind weights are zero");

  // Largest-remainder apportionment of n over the weights.
  std::array<std::size_t, kAllMutationKinds.size()> counts{};
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    const double exact = static_cast<double>(n) * mix[k] / total;
    counts[k] = static_cast<std::size_t>(exact);
    assigned += counts[k];
    remainders.emplace_back(-(exact - static_cast<double>(counts[k])), k);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];

  std::vector<MethodAst> asts;
  for (const auto& s : seed_methods) asts.push_back(parse(s));
  std::array<std::vector<std::size_t>, kAllMutationKinds.size()> eligible;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (counts[k] == 0) continue;
    for (std::size_t s = 0; s < asts.size(); ++s)
      if (eligible_site_count(asts[s], kAllMutationKinds[k]) > 0) eligible[k].push_back(s);
    if (eligible[k].empty())
      throw InfeasibleMix("no seed method admits " + std::string(to_string(kAllMutationKinds[k])));
  }

  std::vector<std::size_t> plan;
  for (std::size_t k = 0; k < counts.size(); ++k) plan.insert(plan.end(), counts[k], k);
  Rng rng(derive_seed(seed, "corpus"));
  shuffle(plan, rng);

  std::set<std::pair<std::string, std::string>> seen;
  std::vector<MutantRecord> out;
  out.reserve(n);
  constexpr int kMaxAttempts = 200;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto kind = kAllMutationKinds[plan[i]];
    const auto& pool = eligible[plan[i]];
    bool done = false;
    for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
      const auto s = pool[uniform_index(rng, pool.size())];
      const std::uint64_t rec_seed = rng();
      try {
        auto m = mutate(seed_methods[s], kind, rec_seed);
        if (!seen.emplace(m.record.buggy_src, m.record.fixed_src).second) continue;
        char id[32];
        std::snprintf(id, sizeof id, "mut-%06zu", i);
        m.record.id = id;
        out.push_back(std::move(m));
        done = true;
      } catch (const NoEligibleLeaf&) {
      }
    }
    if (!done)
      throw InfeasibleMix("could not produce a fresh " + std::string(to_string(kind)) + " mutant after " +
                          std::to_string(kMaxAttempts) + " attempts");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seed-method synthesis

namespace {

class Names {
 public:
  explicit Names(Rng& rng) : rng_(rng) {}

  const std::string& pick(const std::vector<std::string>& pool) { return pool[uniform_index(rng_, pool.size())]; }

  /// A fresh camelCase name "<prefix><Noun>" not yet used in this method.
  std::string fresh(const std::vector<std::string>& prefixes, const std::vector<std::string>& nouns) {
    for (;;) {
      std::string name = pick(prefixes) + pick(nouns);
      if (used_.insert(name).second) return name;
    }
  }
  std::string fresh_plain(const std::vector<std::string>& pool) {
    for (;;) {
      std::string name = pick(pool);
      if (used_.insert(name).second) return name;
    }
  }
  bool coin(double p = 0.5) { return uniform01(rng_) < p; }
  int number(int lo, int hi) { return lo + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(hi - lo + 1))); }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

const std::vector<std::string> kPrefixes = {"max", "min", "total", "item", "line", "page", "node", "user",
                                            "row", "col", "file", "word", "byte", "char", "task", "order"};
const std::vector<std::string> kNouns = {"Count", "Size", "Value", "Index", "Limit", "Score", "Offset",
                                         "Length", "Width", "Total", "Weight", "Level", "Step", "Sum"};
const std::vector<std::string> kCollections = {"items", "values", "entries", "records", "elements", "nodes",
                                               "scores", "samples", "tasks", "orders"};
const std::vector<std::string> kSubjects = {"Price", "Score", "Weight", "Distance", "Balance", "Height",
                                            "Speed", "Budget", "Volume", "Margin", "Offset", "Rating",
                                            "Delay", "Load", "Cost", "Area", "Depth", "Range"};
const std::vector<std::string> kModifiers = {"", "public ", "private ", "static ", "public static "};

using Template = std::function<std::string(Names&)>;

std::vector<Template> templates() {
  std::vector<Template> t;
  // Filtered accumulation over a list.
  t.push_back([](Names& n) {
    const auto items = n.fresh_plain(kCollections);
    const auto limit = n.fresh(kPrefixes, {"Limit", "Bound", "Threshold"});
    const auto total = n.fresh({"total", "sum", "acc"}, kNouns);
    const auto rel = n.pick({">", ">=", "<", "<="});
    return n.pick(kModifiers) + "int sum" + n.pick(kSubjects) + "(List " + items + ", int " + limit + ") {\n" +
           "  int " + total + " = 0;\n" +
           "  for (int i = 0; i < " + items + ".size(); i = i + 1) {\n" +
           "    if (" + items + ".get(i) " + rel + " " + limit + ") {\n" +
           "      " + total + " = " + total + " + " + items + ".get(i);\n" +
           "    }\n" +
           "  }\n" +
           "  return " + total + ";\n}\n";
  });
  // Linear search with a flag.
  t.push_back([](Names& n) {
    const auto items = n.fresh_plain(kCollections);
    const auto target = n.fresh({"target", "wanted", "key"}, kNouns);
    const auto found = n.fresh({"found", "seen", "matched"}, {"", "It", "Target"});
    const auto index = n.fresh({"index", "pos", "cursor"}, {"", "Now", "At"});
    return n.pick(kModifiers) + "boolean has" + n.pick(kSubjects) + "(List " + items + ", int " + target + ") {\n" +
           "  boolean " + found + " = false;\n" +
           "  int " + index + " = 0;\n" +
           "  while (" + index + " < " + items + ".size() && !" + found + ") {\n" +
           "    if (" + items + ".get(" + index + ") == " + target + ") {\n" +
           "      " + found + " = true;\n" +
           "    }\n" +
           "    " + index + " = " + index + " + 1;\n" +
           "  }\n" +
           "  return " + found + ";\n}\n";
  });
  // Clamp into a range.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto value = n.fresh({"raw", "input", "given"}, {subj});
    const auto low = n.fresh({"low", "min", "floor"}, {subj, ""});
    const auto high = n.fresh({"high", "max", "ceil"}, {subj, ""});
    const auto type = n.pick({"double", "int", "long"});
    return n.pick(kModifiers) + type + " clamp" + subj + "(" + type + " " + value + ", " + type + " " + low + ", " +
           type + " " + high + ") {\n" +
           "  if (" + value + " < " + low + ") {\n" +
           "    return " + low + ";\n" +
           "  }\n" +
           "  if (" + value + " > " + high + ") {\n" +
           "    return " + high + ";\n" +
           "  }\n" +
           "  return " + value + ";\n}\n";
  });
  // Average with a zero guard.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto stats = n.fresh({"stats", "data", "summary"}, {"", "Table"});
    const auto count = n.fresh({"sample", "item", "entry"}, {"Count", "Total", "Size"});
    const auto total = n.fresh({"total", "sum"}, {subj});
    return n.pick(kModifiers) + "double average" + subj + "(Stats " + stats + ", int " + count + ") {\n" +
           "  double " + total + " = " + stats + ".sum();\n" +
           "  if (" + count + " == 0) {\n" +
           "    return 0.0;\n" +
           "  }\n" +
           "  return " + total + " / " + count + ";\n}\n";
  });
  // Maximum of three through Math.max.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto a = n.fresh({"first", "left", "old"}, {subj});
    const auto b = n.fresh({"second", "right", "new"}, {subj});
    const auto c = n.fresh({"third", "extra", "base"}, {subj});
    const auto best = n.fresh({"best", "top", "peak"}, {subj, ""});
    const auto fn = n.pick({"max", "min"});
    return n.pick(kModifiers) + "int " + fn + subj + "(int " + a + ", int " + b + ", int " + c + ") {\n" +
           "  int " + best + " = Math." + fn + "(" + a + ", " + b + ");\n" +
           "  " + best + " = Math." + fn + "(" + best + ", " + c + ");\n" +
           "  return " + best + ";\n}\n";
  });
  // Update a table and log.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto table = n.fresh({"table", "cache", "index"}, {"", "Map"});
    const auto key = n.fresh({"key", "name", "label"}, {"", "Text"});
    const auto amount = n.fresh({"amount", "delta", "extra"}, {subj, ""});
    const auto old = n.fresh({"old", "prev", "current"}, {subj});
    const auto logger = n.fresh({"logger", "log", "audit"}, {"", "Sink"});
    return n.pick(kModifiers) + "void record" + subj + "(Map " + table + ", String " + key + ", int " + amount +
           ", Logger " + logger + ") {\n" +
           "  int " + old + " = " + table + ".get(" + key + ");\n" +
           "  " + table + ".put(" + key + ", " + old + " + " + amount + ");\n" +
           "  " + logger + ".info(" + key + ", " + amount + ");\n}\n";
  });
  // Stepped product.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto limit = n.fresh({"limit", "upper", "last"}, {"", subj});
    const auto step = n.fresh({"step", "stride", "jump"}, {"", "Size"});
    const auto result = n.fresh({"result", "product", "acc"}, {"", subj});
    return n.pick(kModifiers) + "long product" + subj + "(int " + limit + ", int " + step + ") {\n" +
           "  long " + result + " = 1;\n" +
           "  for (int i = 1; i <= " + limit + "; i = i + " + step + ") {\n" +
           "    " + result + " = " + result + " * i;\n" +
           "  }\n" +
           "  return " + result + ";\n}\n";
  });
  // Range validation.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto value = n.fresh({"value", "given", "probe"}, {"", subj});
    const auto low = n.fresh({"min", "lower", "least"}, {subj});
    const auto high = n.fresh({"max", "upper", "most"}, {subj});
    const auto strict = n.fresh({"strict", "exclusive", "closed"}, {"", "Mode"});
    return n.pick(kModifiers) + "boolean is" + subj + "Valid(int " + value + ", int " + low + ", int " + high +
           ", boolean " + strict + ") {\n" +
           "  if (" + strict + " && " + value + " == " + low + ") {\n" +
           "    return false;\n" +
           "  }\n" +
           "  return " + value + " >= " + low + " && " + value + " <= " + high + ";\n}\n";
  });
  // Join with a separator.
  t.push_back([](Names& n) {
    const auto parts = n.fresh_plain(kCollections);
    const auto sep = n.fresh({"sep", "glue", "delim"}, {"", "Text"});
    const auto buffer = n.fresh({"buffer", "out", "builder"}, {"", "Text"});
    return n.pick(kModifiers) + "String join" + n.pick(kSubjects) + "(List " + parts + ", String " + sep +
           ", Buffer " + buffer + ") {\n" +
           "  for (int i = 0; i < " + parts + ".size(); i = i + 1) {\n" +
           "    if (i > 0) {\n" +
           "      " + buffer + ".append(" + sep + ");\n" +
           "    }\n" +
           "    " + buffer + ".append(" + parts + ".get(i));\n" +
           "  }\n" +
           "  return " + buffer + ".toString();\n}\n";
  });
  // Manhattan distance.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto x1 = n.fresh({"x"}, {"1", "A", "From"});
    const auto y1 = "y" + x1.substr(1);
    const auto x2 = n.fresh({"x"}, {"2", "B", "To"});
    const auto y2 = "y" + x2.substr(1);
    const auto dx = n.fresh({"dx"}, {"", subj});
    const auto dy = "dy" + dx.substr(2);
    const auto fn = n.pick({"abs", "square"});
    return n.pick(kModifiers) + "int distance" + subj + "(int " + x1 + ", int " + y1 + ", int " + x2 + ", int " +
           y2 + ") {\n" +
           "  int " + dx + " = Math." + fn + "(" + x1 + " - " + x2 + ");\n" +
           "  int " + dy + " = Math." + fn + "(" + y1 + " - " + y2 + ");\n" +
           "  return " + dx + " + " + dy + ";\n}\n";
  });
  // Countdown with a scaled step.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto remaining = n.fresh({"remaining", "left", "pending"}, {"", subj});
    const auto rate = n.fresh({"rate", "factor", "scale"}, {"", subj});
    const auto rounds = n.fresh({"rounds", "steps", "ticks"}, {"", "Taken"});
    const int stop = n.number(0, 3);
    return n.pick(kModifiers) + "int drain" + subj + "(int " + remaining + ", int " + rate + ") {\n" +
           "  int " + rounds + " = 0;\n" +
           "  while (" + remaining + " > " + std::to_string(stop) + ") {\n" +
           "    " + remaining + " = " + remaining + " - " + rate + " * 2;\n" +
           "    " + rounds + " = " + rounds + " + 1;\n" +
           "  }\n" +
           "  return " + rounds + ";\n}\n";
  });
  // Weighted score with a flag.
  t.push_back([](Names& n) {
    const auto subj = n.pick(kSubjects);
    const auto base = n.fresh({"base", "raw", "plain"}, {subj});
    const auto weight = n.fresh({"weight", "factor", "ratio"}, {"", subj});
    const auto bonus = n.fresh({"bonus", "extra", "boost"}, {"", subj});
    const auto enabled = n.fresh({"enabled", "active", "premium"}, {"", "Flag"});
    const auto score = n.fresh({"score", "result", "value"}, {"", subj});
    return n.pick(kModifiers) + "double weighted" + subj + "(double " + base + ", double " + weight + ", double " +
           bonus + ", boolean " + enabled + ") {\n" +
           "  double " + score + " = " + base + " * " + weight + ";\n" +
           "  if (" + enabled + " || " + score + " > " + bonus + ") {\n" +
           "    " + score + " = " + score + " + " + bonus + ";\n" +
           "  }\n" +
           "  return " + score + ";\n}\n";
  });
  return t;
}

// Optional flag checks spliced in after the method header.
std::string guard(Names& n) {
  std::string out;
  if (n.coin(0.7)) {
    const auto flag = n.fresh({"trace", "verbose", "strict", "cached", "dirty", "ready"}, {"", "Mode", "Flag"});
    const auto lit = n.coin() ? "true" : "false";
    out += "  boolean " + flag + " = " + lit + ";\n";
    out += "  if (" + flag + " && Debug.enabled(" + (n.coin() ? "true" : "false") + ")) {\n";
    out += "    Debug.note(" + flag + ", " + std::to_string(n.number(1, 9)) + ");\n";
    out += "  }\n";
  }
  if (n.coin(0.3)) {
    out += "  Stats.touch(" + std::string(n.coin() ? "true" : "false") + ");\n";
  }
  return out;
}

}  // namespace

std::vector<std::string> synthesize_methods(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synthesize"));
  const auto tpl = templates();
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t misses = 0;
  while (out.size() < count) {
    Names names(rng);
    const auto& make = tpl[out.size() % tpl.size()];
    std::string body = make(names);
    body.insert(body.find("{\n") + 2, guard(names));
    std::string src = render(parse(body));
    if (seen.insert(src).second) {
      out.push_back(std::move(src));
      misses = 0;
    } else if (++misses > 10000) {
      throw InfeasibleMix("template space exhausted after " + std::to_string(out.size()) + " methods");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const MutantRecord& m) {
  auto j = to_json(m.record);
  j["mutation_kind"] = std::string(to_string(m.kind));
  j["seed"] = m.seed;
  return j;
}

MutantRecord mutant_record_from_json(const nlohmann::json& j) {
  MutantRecord m;
  m.record = patch_record_from_json(j);
  m.kind = mutation_kind_from_string(j.at("mutation_kind").get<std::string>());
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

void write_mutant_records(std::ostream& out, std::span<const MutantRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<MutantRecord> read_mutant_records(std::istream& in) {
  std::vector<MutantRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(mutant_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fixloc
