#include "fixloc/repair.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sys/wait.h>
#include <unistd.h>

#include "fixloc/error.hpp"

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

constexpr std::size_t kIdentifierCap = 5;

// Names ordered by their nearest occurrence to `leaf`, then by position.
std::vector<std::string> nearest(const MethodAst& ast, std::size_t leaf, const std::set<std::string>& names) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> best;  // name -> (distance, position)
  for (std::size_t j = 0; j < ast.leaf_count(); ++j) {
    const auto& tok = ast.token_of(j);
    if (ast.leaf(j).kind != NodeKind::SimpleName || !names.contains(tok)) continue;
    const std::size_t d = j > leaf ? j - leaf : leaf - j;
    const auto key = std::make_pair(d, j);
    auto it = best.find(tok);
    if (it == best.end() || key < it->second) best[tok] = key;
  }
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::string>> order;
  for (const auto& [name, key] : best) order.emplace_back(key, name);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  for (const auto& [key, name] : order) {
    if (out.size() == kIdentifierCap) break;
    out.push_back(name);
  }
  return out;
}

std::vector<std::string> identifier_candidates(const MethodAst& ast, std::size_t leaf) {
  const auto& token = ast.token_of(leaf);
  const auto role = name_role(ast, leaf);
  if (role == NameRole::Declaration) return {};
  const SymbolTable symbols(ast);
  std::set<std::string> names;
  if (const Declaration* own = symbols.resolve(ast, static_cast<int>(leaf)); own && role == NameRole::Variable) {
    for (const Declaration* d : symbols.visible_at(static_cast<int>(leaf)))
      if (d->type == own->type && d->name != token) names.insert(d->name);
  } else {
    for (std::size_t j = 0; j < ast.leaf_count(); ++j)
      if (ast.leaf(j).kind == NodeKind::SimpleName && ast.token_of(j) != token && name_role(ast, j) == role &&
          !(role == NameRole::Variable && symbols.resolve(ast, static_cast<int>(j))))
        names.insert(ast.token_of(j));
  }
  return nearest(ast, leaf, names);
}

std::vector<std::string> insertion_candidates(const MethodAst& ast, std::size_t anchor) {
  const SymbolTable symbols(ast);
  std::set<std::string> names;
  for (const Declaration* d : symbols.visible_at(static_cast<int>(anchor))) names.insert(d->name);
  return nearest(ast, anchor, names);
}

// Token-level edit: replacements, removals and insertions keyed on lexer
// token indices of the original method.
struct TokenEdit {
  std::map<std::size_t, std::string> replace;
  std::set<std::size_t> erase;
  std::map<std::size_t, std::vector<std::string>> insert_before;

  void merge(const TokenEdit& o) {
    replace.insert(o.replace.begin(), o.replace.end());
    erase.insert(o.erase.begin(), o.erase.end());
    for (const auto& [i, toks] : o.insert_before) {
      auto& dst = insert_before[i];
      dst.insert(dst.end(), toks.begin(), toks.end());
    }
  }
};

struct Option {
  AppliedEdit applied;
  TokenEdit edit;
};

class Workspace {
 public:
  explicit Workspace(std::string_view src) : ast_(parse(src)), tokens_(lex(src)) {
    tokens_.pop_back();  // End marker
    std::map<std::pair<int, int>, std::size_t> at;
    for (std::size_t i = 0; i < tokens_.size(); ++i) at[{tokens_[i].line, tokens_[i].column}] = i;
    for (std::size_t l = 0; l < ast_.leaf_count(); ++l) lex_of_leaf_.push_back(at.at({ast_.leaf(l).line, ast_.leaf(l).column}));
  }

  const MethodAst& ast() const { return ast_; }

  std::vector<Option> options(const OperationPath& op) const {
    if (op.path.leaf_index < 0 || static_cast<std::size_t>(op.path.leaf_index) >= ast_.leaf_count()) return {};
    const auto leaf = static_cast<std::size_t>(op.path.leaf_index);
    if (ast_.token_of(leaf) != op.token) return {};
    std::vector<Option> out;
    switch (op.op) {
      case ChangeOperator::Delete:
        out.push_back({{op, std::nullopt}, deletion(leaf)});
        break;
      case ChangeOperator::Update: {
        std::vector<std::string> toks;
        try {
          toks = candidate_tokens(op, ast_);
        } catch (const NoCandidates&) {
        }
        for (auto& t : toks) {
          TokenEdit e;
          e.replace[lex_of_leaf_[leaf]] = t;
          out.push_back({{op, std::move(t)}, std::move(e)});
        }
        break;
      }
      case ChangeOperator::Insert: {
        const auto sites = insertion_sites(leaf);
        if (sites.empty()) break;
        const auto toks = insertion_candidates(ast_, leaf);
        for (const auto& [at, first_arg, empty_list] : sites) {
          for (const auto& t : toks) {
            TokenEdit e;
            if (first_arg)
              e.insert_before[at] = empty_list ? std::vector<std::string>{t} : std::vector<std::string>{t, ","};
            else
              e.insert_before[at] = {",", t};
            out.push_back({{op, t}, std::move(e)});
          }
        }
        break;
      }
    }
    return out;
  }

  std::string apply(const TokenEdit& e) const {
    std::string out;
    auto emit = [&](const std::string& s) {
      if (!out.empty()) out += ' ';
      out += s;
    };
    for (std::size_t i = 0; i <= tokens_.size(); ++i) {
      if (auto it = e.insert_before.find(i); it != e.insert_before.end())
        for (const auto& s : it->second) emit(s);
      if (i == tokens_.size()) break;
      if (e.erase.contains(i)) continue;
      const auto r = e.replace.find(i);
      emit(r == e.replace.end() ? tokens_[i].text : r->second);
    }
    return out;
  }

 private:
  struct Site {
    std::size_t at;
    bool first_arg;
    bool empty_list;
  };

  int slot_of(const Node& parent, int child) const {
    return static_cast<int>(std::find(parent.children.begin(), parent.children.end(), child) - parent.children.begin());
  }

  std::size_t last_leaf_of(int id) const {
    while (!ast_.node(id).children.empty()) id = ast_.node(id).children.back();
    return static_cast<std::size_t>(ast_.leaf_ordinal(id));
  }

  std::size_t first_leaf_of(int id) const {
    while (!ast_.node(id).children.empty()) id = ast_.node(id).children.front();
    return static_cast<std::size_t>(ast_.leaf_ordinal(id));
  }

  std::size_t matching_paren(std::size_t open) const {
    int depth = 0;
    for (std::size_t i = open; i < tokens_.size(); ++i) {
      if (tokens_[i].text == "(") ++depth;
      if (tokens_[i].text == ")" && --depth == 0) return i;
    }
    throw FormatError("unbalanced parentheses");
  }

  TokenEdit deletion(std::size_t leaf) const {
    TokenEdit e;
    const std::size_t idx = lex_of_leaf_[leaf];
    e.erase.insert(idx);
    const int id = ast_.leaves()[leaf];
    const Node& n = ast_.node(id);
    if (n.parent >= 0 && ast_.node(n.parent).kind == NodeKind::MethodInvocation) {
      const Node& call = ast_.node(n.parent);
      const int slot = slot_of(call, id);
      const int first = call.has_receiver ? 2 : 1;
      if (slot >= first) {
        if (idx + 1 < tokens_.size() && tokens_[idx + 1].text == ",")
          e.erase.insert(idx + 1);
        else if (slot > first && tokens_[idx - 1].text == ",")
          e.erase.insert(idx - 1);
      }
    }
    return e;
  }

  // Argument-list positions directly after the anchor leaf, innermost first.
  std::vector<Site> insertion_sites(std::size_t anchor) const {
    std::vector<Site> out;
    int cur = ast_.leaves()[anchor];
    while (ast_.node(cur).parent >= 0) {
      const int pid = ast_.node(cur).parent;
      const Node& p = ast_.node(pid);
      if (p.kind == NodeKind::MethodInvocation) {
        const int slot = slot_of(p, cur);
        const int name_slot = p.has_receiver ? 1 : 0;
        if (slot == name_slot) {
          const std::size_t open = lex_of_leaf_[anchor] + 1;
          out.push_back({open + 1, true, tokens_[open + 1].text == ")"});
        } else if (slot > name_slot) {
          std::size_t at;
          if (static_cast<std::size_t>(slot) + 1 < p.children.size()) {
            at = lex_of_leaf_[first_leaf_of(p.children[static_cast<std::size_t>(slot) + 1])];
            while (tokens_[at].text != ",") --at;
          } else {
            const std::size_t name = lex_of_leaf_[first_leaf_of(p.children[static_cast<std::size_t>(name_slot)])];
            at = matching_paren(name + 1);
          }
          out.push_back({at, false, false});
        }
      }
      if (last_leaf_of(pid) != anchor) break;
      cur = pid;
    }
    return out;
  }

  MethodAst ast_;
  std::vector<LexToken> tokens_;
  std::vector<std::size_t> lex_of_leaf_;
};

std::vector<std::string> token_texts(std::string_view src) {
  std::vector<std::string> out;
  for (auto& t : lex(src))
    if (t.type != LexToken::Type::End) out.push_back(std::move(t.text));
  return out;
}

}  // namespace

std::vector<std::string> candidate_tokens(const OperationPath& op, const MethodAst& ast) {
  if (op.op == ChangeOperator::Delete) throw NoCandidates("DELETE takes no replacement token");
  if (op.path.leaf_index < 0 || static_cast<std::size_t>(op.path.leaf_index) >= ast.leaf_count())
    throw NoCandidates("leaf " + std::to_string(op.path.leaf_index) + " out of range");
  const auto leaf = static_cast<std::size_t>(op.path.leaf_index);
  std::vector<std::string> out;
  if (op.op == ChangeOperator::Insert) {
    out = insertion_candidates(ast, leaf);
  } else {
    const Node& n = ast.leaf(leaf);
    switch (n.kind) {
      case NodeKind::Operator:
        for (const auto& cls : operator_classes())
          if (std::find(cls.begin(), cls.end(), n.token) != cls.end())
            for (const auto& o : cls)
              if (o != n.token) out.push_back(o);
        break;
      case NodeKind::BooleanLiteral:
        out.push_back(n.token == "true" ? "false" : "true");
        break;
      case NodeKind::TypeName:
        if (is_primitive_type(n.token))
          for (const auto t : kPrimitiveTypes)
            if (t != n.token) out.emplace_back(t);
        break;
      case NodeKind::SimpleName:
        out = identifier_candidates(ast, leaf);
        break;
      default:
        break;
    }
  }
  if (out.empty())
    throw NoCandidates("no " + std::string(to_string(op.op)) + " candidates for '" + ast.token_of(leaf) + "' (" +
                       std::string(to_string(ast.leaf(leaf).kind)) + ")");
  return out;
}

std::vector<std::vector<std::size_t>> schedule(std::size_t pred_size, std::size_t width) {
  const std::size_t w = std::min(pred_size, width);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < w; ++i) out.push_back({i});
  for (std::size_t i = 0; i < w; ++i)
    for (std::size_t j = i + 1; j < w; ++j) out.push_back({i, j});
  return out;
}

OracleValidator::OracleValidator(std::string_view fixed_src) : expected_(token_texts(fixed_src)) {}

bool OracleValidator::validate(const std::string& patched_src) { return token_texts(patched_src) == expected_; }

CommandValidator::CommandValidator(std::string command_template) : template_(std::move(command_template)) {}

bool CommandValidator::validate(const std::string& patched_src) {
  namespace fs = std::filesystem;
  std::string path = (fs::temp_directory_path() / "fixloc-patch-XXXXXX").string();
  const int fd = mkstemp(path.data());
  if (fd < 0) throw ValidatorFailure("cannot create a temp file");
  close(fd);
  {
    std::ofstream out(path);
    out << patched_src;
  }
  std::string cmd = template_;
  for (std::size_t pos; (pos = cmd.find("{patched}")) != std::string::npos;) cmd.replace(pos, 9, path);
  const int status = std::system(cmd.c_str());
  fs::remove(path);
  if (status == -1 || !WIFEXITED(status)) throw ValidatorFailure("could not run: " + cmd);
  const int code = WEXITSTATUS(status);
  if (code == 126 || code == 127) throw ValidatorFailure("command not runnable (exit " + std::to_string(code) + "): " + cmd);
  return code == 0;
}

RepairOutcome generate_and_validate(std::string_view method_src, const RankedPrediction& pred, Validator& validator,
                                    const RepairOptions& options) {
  const Workspace ws(method_src);
  RepairOutcome outcome;
  std::vector<std::vector<Option>> opts;  // per rank, built lazily
  auto options_at = [&](std::size_t r) -> const std::vector<Option>& {
    while (opts.size() <= r) opts.push_back(ws.options(pred.entries[opts.size()].path));
    return opts[r];
  };

  auto attempt = [&](const std::vector<const Option*>& chosen, const std::vector<std::size_t>& ranks) {
    TokenEdit e;
    for (const Option* o : chosen) e.merge(o->edit);
    std::string src;
    try {
      src = render(parse(ws.apply(e)));
    } catch (const SyntaxError&) {
      return false;
    }
    ++outcome.npc;
    if (!validator.validate(src)) return false;
    CandidatePatch patch;
    patch.patched_src = std::move(src);
    for (const Option* o : chosen) patch.edits.push_back(o->applied);
    for (const auto r : ranks) patch.origin_ranks.push_back(static_cast<int>(r) + 1);
    outcome.patch = std::move(patch);
    outcome.status = RepairStatus::Plausible;
    outcome.correctness = validator.assesses_correctness() ? Correctness::Correct : Correctness::Unassessed;
    return true;
  };

  for (const auto& tuple : schedule(pred.entries.size(), options.width)) {
    if (tuple.size() == 1) {
      for (const auto& o : options_at(tuple[0]))
        if (attempt({&o}, tuple)) return outcome;
      continue;
    }
    if (!options.pairs) break;
    const auto& a = options_at(tuple[0]);
    const auto& b = options_at(tuple[1]);
    if (pred.entries[tuple[0]].path.path.leaf_index == pred.entries[tuple[1]].path.path.leaf_index) continue;
    for (const auto& x : a)
      for (const auto& y : b)
        if (attempt({&x, &y}, tuple)) return outcome;
  }
  return outcome;
}

std::optional<double> correctness_ratio(std::span<const RepairOutcome> outcomes) {
  std::size_t plausible = 0, correct = 0;
  for (const auto& o : outcomes) {
    if (o.status != RepairStatus::Plausible) continue;
    if (o.correctness == Correctness::Unassessed) throw UnassessedOutcome("plausible patch without a correctness label");
    ++plausible;
    correct += o.correctness == Correctness::Correct ? 1 : 0;
  }
  if (plausible == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(plausible);
}

nlohmann::json RepairOutcome::to_json() const {
  nlohmann::json j;
  j["status"] = status == RepairStatus::Plausible ? "Plausible" : "Exhausted";
  j["npc"] = npc;
  j["correctness"] = correctness == Correctness::Correct       ? "Correct"
                     : correctness == Correctness::Overfitting ? "Overfitting"
                                                               : "Unassessed";
  if (patch) {
    nlohmann::json edits = nlohmann::json::array();
    for (const auto& e : patch->edits) {
      auto ej = fixloc::to_json(e.path);
      ej["replacement"] = e.token ? nlohmann::json(*e.token) : nlohmann::json(nullptr);
      edits.push_back(ej);
    }
    j["patch"] = {{"patched_src", patch->patched_src}, {"edits", edits}, {"origin_ranks", patch->origin_ranks}};
  } else {
    j["patch"] = nullptr;
  }
  return j;
}

}  // namespace fixloc
