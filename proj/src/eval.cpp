#include "fixloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "fixloc/error.hpp"
#include "fixloc/rng.hpp"

namespace fixloc {

std::string_view to_string(MatchMode m) { return m == MatchMode::TokenOnly ? "token_only" : "token_and_operator"; }
std::string_view to_string(Scenario s) { return s == Scenario::Method ? "method" : "line"; }

MatchMode match_mode_from_string(std::string_view s) {
  if (s == "token_only") return MatchMode::TokenOnly;
  if (s == "token_and_operator") return MatchMode::TokenAndOperator;
  throw FormatError("unknown match mode '" + std::string(s) + "'");
}

Scenario scenario_from_string(std::string_view s) {
  if (s == "method") return Scenario::Method;
  if (s == "line") return Scenario::Line;
  throw FormatError("unknown scenario '" + std::string(s) + "'");
}

FirstRank first_rank(const RankedPrediction& pred, std::span<const OperationPath> oracle, MatchMode mode) {
  if (pred.entries.empty()) throw NotFound("empty prediction");
  if (mode == MatchMode::TokenAndOperator) {
    for (std::size_t i = 0; i < pred.entries.size(); ++i)
      for (const auto& o : oracle)
        if (pred.entries[i].path == o) return {static_cast<int>(i) + 1, true};
    return {static_cast<int>(pred.entries.size()) + 1, false};
  }
  std::set<int> seen;
  for (const auto& e : pred.entries) {
    const int leaf = e.path.path.leaf_index;
    seen.insert(leaf);
    for (const auto& o : oracle)
      if (o.path.leaf_index == leaf && o.token == e.path.token) return {static_cast<int>(seen.size()), true};
  }
  return {static_cast<int>(seen.size()) + 1, false};
}

FirstRank first_rank_leaves(std::span<const int> ranking, std::span<const OperationPath> oracle) {
  if (ranking.empty()) throw NotFound("empty ranking");
  for (std::size_t i = 0; i < ranking.size(); ++i)
    for (const auto& o : oracle)
      if (o.path.leaf_index == ranking[i]) return {static_cast<int>(i) + 1, true};
  return {static_cast<int>(ranking.size()) + 1, false};
}

double recall_at_k(std::span<const FirstRank> ranks, int k) {
  if (k < 1) throw FormatError("k must be at least 1");
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : ranks) hits += r.found && r.rank <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

MfrResult mfr(std::span<const FirstRank> ranks) {
  if (ranks.empty()) throw EmptyDataset("no ranks");
  MfrResult out;
  double sum = 0.0;
  std::size_t found = 0;
  for (const auto& r : ranks) {
    if (r.found) {
      sum += r.rank;
      ++found;
    } else {
      ++out.not_found;
    }
  }
  out.mfr = found ? sum / static_cast<double>(found) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

EvalReport make_report(std::string localizer, Scenario scenario, MatchMode mode, std::span<const FirstRank> ranks) {
  EvalReport r;
  r.localizer = std::move(localizer);
  r.scenario = scenario;
  r.mode = mode;
  for (const int k : kReportCutoffs) r.recall_at[k] = recall_at_k(ranks, k);
  const auto m = mfr(ranks);
  r.mfr = m.mfr;
  r.not_found = m.not_found;
  r.n_bugs = ranks.size();
  for (const auto& fr : ranks) r.per_bug_first_rank.push_back(fr.found ? fr.rank : -1);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [k, v] : recall_at) recall[std::to_string(k)] = v;
  nlohmann::json j;
  j["localizer"] = localizer;
  j["scenario"] = std::string(fixloc::to_string(scenario));
  j["match_mode"] = std::string(fixloc::to_string(mode));
  j["recall_at"] = recall;
  j["mfr"] = std::isnan(mfr) ? nlohmann::json(nullptr) : nlohmann::json(mfr);
  j["n_bugs"] = n_bugs;
  j["not_found"] = not_found;
  j["per_bug_first_rank"] = per_bug_first_rank;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.localizer = j.at("localizer").get<std::string>();
    r.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    r.mode = match_mode_from_string(j.at("match_mode").get<std::string>());
    for (const auto& [k, v] : j.at("recall_at").items()) r.recall_at[std::stoi(k)] = v.get<double>();
    r.mfr = j.at("mfr").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("mfr").get<double>();
    r.n_bugs = j.at("n_bugs").get<std::size_t>();
    r.not_found = j.at("not_found").get<std::size_t>();
    r.per_bug_first_rank = j.at("per_bug_first_rank").get<std::vector<int>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad report: ") + e.what());
  }
}

std::string format_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-7s %7s %7s %7s %7s %7s %7s %6s %6s\n", "localizer", "scope", "Top-1",
                "Top-3", "Top-5", "Top-10", "Top-20", "MFR", "bugs", "miss");
  out << buf;
  for (const auto& r : reports) {
    auto pct = [&](int k) {
      const auto it = r.recall_at.find(k);
      return it == r.recall_at.end() ? 0.0 : 100.0 * it->second;
    };
    char mfr_text[32];
    if (std::isnan(r.mfr))
      std::snprintf(mfr_text, sizeof mfr_text, "n/a");
    else
      std::snprintf(mfr_text, sizeof mfr_text, "%.2f", r.mfr);
    std::snprintf(buf, sizeof buf, "%-24s %-7s %6.1f%% %6.1f%% %6.1f%% %6.1f%% %6.1f%% %7s %6zu %6zu\n",
                  r.localizer.c_str(), std::string(to_string(r.scenario)).c_str(), pct(1), pct(3), pct(5), pct(10),
                  pct(20), mfr_text, r.n_bugs, r.not_found);
    out << buf;
  }
  return out.str();
}

namespace {

std::string normalized(const std::string& src) {
  try {
    std::string out;
    for (const auto& t : lex(src)) {
      if (t.type == LexToken::Type::End) break;
      out += t.text;
      out += ' ';
    }
    return out;
  } catch (const SyntaxError&) {
    std::istringstream in(src);
    std::string word, out;
    while (in >> word) out += word + ' ';
    return out;
  }
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::vector<PatchRecord> dedup(std::span<const PatchRecord> records) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<PatchRecord> out;
  for (const auto& r : records) {
    if (ends_with(r.id, "#test")) continue;
    if (seen.emplace(normalized(r.buggy_src), normalized(r.fixed_src)).second) out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldPlan kfold(std::size_t n_records, int k, std::uint64_t seed) {
  if (k < 2) throw FormatError("k must be at least 2");
  if (n_records < static_cast<std::size_t>(k))
    throw TooFewRecords(std::to_string(n_records) + " records for " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n_records);
  for (std::size_t i = 0; i < n_records; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "kfold"));
  shuffle(order, rng);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of.assign(n_records, 0);
  for (std::size_t i = 0; i < n_records; ++i) plan.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

Distribution describe(std::vector<double> values) {
  Distribution d;
  d.count = values.size();
  if (values.empty()) return d;
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  d.min = values.front();
  d.q1 = q(0.25);
  d.median = q(0.5);
  d.q3 = q(0.75);
  d.max = values.back();
  return d;
}

nlohmann::json Distribution::to_json() const {
  return {{"count", count}, {"min", min}, {"q1", q1}, {"median", median}, {"q3", q3}, {"max", max}};
}

nlohmann::json EffortStats::to_json() const {
  return {{"method_tokens", method_tokens.to_json()}, {"line_tokens", line_tokens.to_json()}};
}

std::vector<int> buggy_lines(const PatchRecord& record) {
  const auto ast = parse(record.buggy_src);
  std::set<int> lines;
  for (const auto& o : record.oracle) {
    if (o.path.leaf_index < 0 || static_cast<std::size_t>(o.path.leaf_index) >= ast.leaf_count())
      throw OracleMissing("oracle leaf " + std::to_string(o.path.leaf_index) + " out of range");
    lines.insert(ast.leaf(static_cast<std::size_t>(o.path.leaf_index)).line);
  }
  return {lines.begin(), lines.end()};
}

EffortStats effort_stats(std::span<const PatchRecord> records) {
  std::vector<double> per_method, per_line;
  for (const auto& r : records) {
    const auto ast = parse(r.buggy_src);
    std::map<int, int> by_line;
    int total = 0;
    for (std::size_t i = 0; i < ast.leaf_count(); ++i) {
      if (is_language_keyword(ast.token_of(i))) continue;
      ++total;
      ++by_line[ast.leaf(i).line];
    }
    per_method.push_back(total);
    for (const int line : buggy_lines(r)) per_line.push_back(by_line[line]);
  }
  return {describe(std::move(per_method)), describe(std::move(per_line))};
}

const EvalReport& CvResult::find(std::string_view localizer, Scenario scenario) const {
  for (const auto& r : reports)
    if (r.localizer == localizer && r.scenario == scenario) return r;
  throw NotFound("no report for " + std::string(localizer) + "/" + std::string(to_string(scenario)));
}

namespace {

std::vector<int> restrict_to_line(const MethodAst& ast, std::span<const int> ranking, int line) {
  std::vector<int> out;
  for (const int leaf : ranking)
    if (ast.leaf(static_cast<std::size_t>(leaf)).line == line) out.push_back(leaf);
  return out;
}

}  // namespace

CvResult cross_validate(std::span<const PatchRecord> records, const CvOptions& opts) {
  CvResult result;
  result.plan = kfold(records.size(), opts.k, opts.seed);
  const std::size_t n = records.size();
  const std::size_t ns = opts.scenarios.size();

  std::vector<std::string> names = {opts.beep_name};
  if (opts.baselines) {
    names.push_back("stat-baseline");
    names.push_back("forest-baseline");
  }
  // ranks[localizer][scenario][record]
  std::vector<std::vector<std::vector<FirstRank>>> ranks(
      names.size(), std::vector<std::vector<FirstRank>>(ns, std::vector<FirstRank>(n)));

  std::vector<int> first_line(n);
  for (std::size_t i = 0; i < n; ++i) first_line[i] = buggy_lines(records[i]).front();

  for (int fold = 0; fold < opts.k; ++fold) {
    std::vector<PatchRecord> train_set;
    for (const auto i : result.plan.train_indices(fold)) train_set.push_back(records[i]);
    const auto test = result.plan.test_indices(fold);
    const std::string tag = "fold-" + std::to_string(fold);

    if (opts.on_progress) opts.on_progress(fold, opts.beep_name);
    BeepModel model(opts.hp, Vocab::build(train_set, opts.hp.no_token_split), derive_seed(opts.seed, tag + "-init"));
    train(model, train_set, TrainOptions{derive_seed(opts.seed, tag + "-train"), {}});
    for (const auto i : test) {
      for (std::size_t s = 0; s < ns; ++s) {
        Scope scope;
        if (opts.scenarios[s] == Scenario::Line) scope.line = first_line[i];
        ranks[0][s][i] = first_rank(model.predict_ranked(records[i].buggy_src, scope), records[i].oracle, opts.mode);
      }
    }
    if (!opts.baselines) continue;

    if (opts.on_progress) opts.on_progress(fold, "baselines");
    const auto table = fit_statistics(train_set);
    ForestOptions fo = opts.forest;
    fo.seed = derive_seed(opts.seed, tag + "-forest");
    const auto forest = fit_forest(train_set, fo);
    for (const auto i : test) {
      const auto ast = parse(records[i].buggy_src);
      const std::vector<int> by_localizer[2] = {rank_statistical(ast, table), rank_forest(ast, forest)};
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t s = 0; s < ns; ++s) {
          const auto ranking = opts.scenarios[s] == Scenario::Line
                                   ? restrict_to_line(ast, by_localizer[b], first_line[i])
                                   : by_localizer[b];
          ranks[b + 1][s][i] = first_rank_leaves(ranking, records[i].oracle);
        }
      }
    }
  }

  for (std::size_t m = 0; m < names.size(); ++m)
    for (std::size_t s = 0; s < ns; ++s)
      result.reports.push_back(make_report(names[m], opts.scenarios[s], opts.mode, ranks[m][s]));
  return result;
}

}  // namespace fixloc
