// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixloc/cli.hpp"
#include "fixloc/eval.hpp"
#include "fixloc/gradcheck.hpp"
#include "fixloc/lang.hpp"
#include "fixloc/model.hpp"
#include "fixloc/mutation.hpp"
#include "fixloc/repair.hpp"
#include "fixloc/rng.hpp"

using namespace fixloc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<std::string, Outcome>> g_results;

void report(const std::string& name, Outcome o) {
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  g_results.emplace_back(name, std::move(o));
}

void guarded(const std::string& name, const std::function<Outcome()>& body) {
  try {
    report(name, body());
  } catch (const std::exception& e) {
    report(name, {false, std::string("threw ") + e.what()});
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

HyperParams dims(int d) {
  HyperParams hp;
  hp.d_t = hp.d_p = hp.d_o = hp.d_hidden = d;
  return hp;
}

std::vector<PatchRecord> records_of(const std::vector<MutantRecord>& ms) {
  std::vector<PatchRecord> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(m.record);
  return out;
}

std::vector<std::string> token_texts(std::string_view src) {
  std::vector<std::string> out;
  for (const auto& t : lex(src)) out.push_back(std::string(t.text));
  return out;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t tensors = 0, largest_set = 0;
  const std::array<std::array<bool, 3>, 4> variants = {{{false, false, false},
                                                        {true, false, false},
                                                        {false, true, false},
                                                        {false, false, true}}};
  for (const auto& v : variants) {
    auto hp = dims(4);
    hp.max_l = 6;
    hp.no_token_split = v[0];
    hp.whole_path_embedding = v[1];
    hp.no_fc_layer = v[2];
    const auto r = check_model_gradients(hp, 11, 6);
    worst = std::max(worst, r.report.max_rel_error);
    tensors += r.report.rel_error.size();
    largest_set = std::max(largest_set, r.max_candidates);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0 && largest_set <= 6,
          fmt("max rel err %.3g over %zu tensors (4 variants), k<=%zu, %.1fs", worst, tensors, largest_set, secs)};
}

// 2 -------------------------------------------------------------------------

Outcome distribution_contract() {
  const auto seeds = synthesize_methods(60, 21);
  const auto corpus = records_of(generate_corpus(seeds, 120, kUniformMix, 22));
  std::mt19937_64 rng(23);
  std::size_t inputs = 0, bad = 0;
  double worst_sum = 0.0, min_p = 1.0;
  auto check = [&](const RankedPrediction& pred) {
    ++inputs;
    double sum = 0.0;
    for (const auto& e : pred.entries) {
      sum += e.probability;
      min_p = std::min(min_p, e.probability);
      if (!(e.probability > 0.0)) ++bad;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    if (!(std::abs(sum - 1.0) <= 1e-6)) ++bad;
  };
  for (int m = 0; m < 20; ++m) {
    HyperParams hp = dims(2 + static_cast<int>(uniform_index(rng, 7)));
    hp.max_l = 3 + static_cast<int>(uniform_index(rng, 10));
    hp.max_k = 4 + static_cast<int>(uniform_index(rng, 40));
    hp.no_token_split = uniform_index(rng, 2) == 1;
    hp.whole_path_embedding = uniform_index(rng, 2) == 1;
    hp.no_fc_layer = uniform_index(rng, 2) == 1;
    const BeepModel model(hp, Vocab::build(std::span(corpus).first(60), hp.no_token_split), rng());
    for (int i = 0; i < 50; ++i) {
      const auto& rec = corpus[uniform_index(rng, corpus.size())];
      if (i % 5 == 0) {
        // Whole method, windowed when it exceeds max_k.
        check(model.predict_ranked(rec.buggy_src));
        continue;
      }
      auto all = enumerate_operation_paths(parse(rec.buggy_src));
      shuffle(all, rng);
      const auto k = 1 + uniform_index(rng, std::min<std::size_t>(all.size(), hp.max_k));
      all.resize(k);
      check(model.forward(all));
    }
  }
  return {bad == 0 && inputs == 1000,
          fmt("%zu inputs, max |sum-1| %.2e, min p %.2e, %zu violations", inputs, worst_sum, min_p, bad)};
}

// 3 -------------------------------------------------------------------------

Outcome oracle_round_trip(const std::vector<MutantRecord>& corpus) {
  std::size_t ok = 0;
  for (const auto& m : corpus) {
    try {
      const auto got = extract_oracle(parse(m.record.buggy_src), parse(m.record.fixed_src));
      if (got == m.record.oracle) ++ok;
    } catch (const std::exception&) {
    }
  }
  return {ok == corpus.size() && corpus.size() == 2000, fmt("%zu/%zu recovered", ok, corpus.size())};
}

// 4 -------------------------------------------------------------------------

double train_recall1(const BeepModel& model, const std::vector<PatchRecord>& data) {
  std::vector<FirstRank> ranks;
  for (const auto& r : data) ranks.push_back(first_rank(model.predict_ranked(r.buggy_src), r.oracle, MatchMode::TokenAndOperator));
  return recall_at_k(ranks, 1);
}

Outcome memorization() {
  const auto seeds = synthesize_methods(50, 41);
  const auto data = records_of(generate_corpus(seeds, 50, kUniformMix, 42));
  auto hp = dims(32);
  hp.epochs = 200;
  hp.batch_size = 8;
  hp.lr = 0.005;
  BeepModel model(hp, Vocab::build(data, hp.no_token_split), 43);
  double recall = 0.0;
  int reached_at = -1;
  TrainOptions opts;
  opts.seed = 44;
  opts.on_epoch = [&](const EpochStats& s) {
    if (s.epoch % 5 != 0 && s.train_recall1 < 0.95) return true;
    recall = train_recall1(model, data);
    if (recall >= 0.95) {
      reached_at = s.epoch;
      return false;
    }
    return true;
  };
  const auto log = train(model, data, opts);
  if (reached_at < 0) recall = train_recall1(model, data);
  const bool loss_down = log.size() >= 2 && log.back().mean_loss < log.front().mean_loss;
  return {recall >= 0.95 && loss_down && static_cast<int>(log.size()) <= 200,
          fmt("Recall@1 %.3f after %zu epochs, loss %.4f -> %.4f", recall, log.size(), log.front().mean_loss,
              log.back().mean_loss)};
}

// 5 and 8 -------------------------------------------------------------------

CvOptions cv_options() {
  CvOptions o;
  o.k = 10;
  o.seed = 3;
  o.hp = dims(16);
  o.hp.epochs = 10;
  o.hp.batch_size = 16;
  o.hp.lr = 0.005;
  o.scenarios = {Scenario::Method};
  o.mode = MatchMode::TokenOnly;
  return o;
}

Outcome superiority(const std::vector<PatchRecord>& corpus, std::size_t distinct_seeds, double* beep_mfr) {
  const auto t0 = Clock::now();
  auto o = cv_options();
  o.on_progress = [&](int fold, std::string_view name) {
    std::fprintf(stderr, "  cv fold %d %.*s %.0fs\n", fold, static_cast<int>(name.size()), name.data(), seconds_since(t0));
  };
  const auto cv = cross_validate(corpus, o);
  const double secs = seconds_since(t0);
  std::cout << format_table(cv.reports);
  const auto& b = cv.find("beep", Scenario::Method);
  const auto& s = cv.find("stat-baseline", Scenario::Method);
  const auto& f = cv.find("forest-baseline", Scenario::Method);
  *beep_mfr = b.mfr;
  const double rb = b.recall_at.at(1), rs = s.recall_at.at(1), rf = f.recall_at.at(1);
  const bool ok = corpus.size() == 2000 && distinct_seeds >= 200 && b.mfr < s.mfr && b.mfr < f.mfr &&
                  rb >= rs + 0.05 && rb >= rf + 0.05 && secs < 7200.0;
  return {ok, fmt("MFR %.2f vs %.2f/%.2f, Recall@1 %.1f%% vs %.1f%%/%.1f%%, %zu seeds, %.0fs", b.mfr, s.mfr, f.mfr,
                  100 * rb, 100 * rs, 100 * rf, distinct_seeds, secs)};
}

Outcome ablation(const std::vector<PatchRecord>& corpus, double full_mfr) {
  const auto t0 = Clock::now();
  auto o = cv_options();
  o.hp.no_token_split = true;
  o.baselines = false;
  o.beep_name = "beep-no-token-split";
  const auto cv = cross_validate(corpus, o);
  const auto& r = cv.find("beep-no-token-split", Scenario::Method);
  return {r.mfr >= full_mfr, fmt("no_token_split MFR %.2f vs full %.2f, %.0fs", r.mfr, full_mfr, seconds_since(t0))};
}

// 6 -------------------------------------------------------------------------

// Brute-force references: scan the ranked list directly.
FirstRank ref_first_rank(const RankedPrediction& pred, const std::vector<OperationPath>& oracle, MatchMode mode) {
  std::vector<int> seen;
  for (const auto& e : pred.entries) {
    if (mode == MatchMode::TokenAndOperator) {
      seen.push_back(0);
      for (const auto& o : oracle)
        if (o == e.path) return {static_cast<int>(seen.size()), true};
      continue;
    }
    if (std::find(seen.begin(), seen.end(), e.path.path.leaf_index) == seen.end()) seen.push_back(e.path.path.leaf_index);
    for (const auto& o : oracle)
      if (o.path.leaf_index == e.path.path.leaf_index) return {static_cast<int>(seen.size()), true};
  }
  return {static_cast<int>(seen.size()) + 1, false};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(61);
  std::size_t mismatches = 0, monotone_breaks = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n_leaves = 1 + uniform_index(rng, 12);
    std::vector<OperationPath> all;
    for (std::size_t leaf = 0; leaf < n_leaves; ++leaf)
      for (auto op : {ChangeOperator::Update, ChangeOperator::Delete, ChangeOperator::Insert}) {
        if (uniform_index(rng, 3) == 0) continue;
        OperationPath p;
        p.path.leaf_index = static_cast<int>(leaf);
        p.path.kinds = {NodeKind::MethodDeclaration};
        p.token = "t" + std::to_string(leaf);
        p.op = op;
        all.push_back(p);
      }
    if (all.empty()) continue;
    shuffle(all, rng);
    const auto keep = 1 + uniform_index(rng, all.size());
    RankedPrediction pred;
    for (std::size_t i = 0; i < keep; ++i)
      pred.entries.push_back({all[i], 1.0 / static_cast<double>(i + 1), 0.0});
    std::vector<OperationPath> oracle;
    const auto n_oracle = 1 + uniform_index(rng, 2);
    for (std::size_t i = 0; i < n_oracle; ++i) oracle.push_back(all[uniform_index(rng, all.size())]);

    std::vector<FirstRank> ranks, refs;
    for (auto mode : {MatchMode::TokenOnly, MatchMode::TokenAndOperator}) {
      const auto got = first_rank(pred, oracle, mode);
      const auto want = ref_first_rank(pred, oracle, mode);
      if (!(got == want)) ++mismatches;
      ranks.push_back(got);
      refs.push_back(want);
    }
    // Extend with a few random ranks so recall and mfr see mixed lists.
    for (int j = 0; j < 6; ++j) {
      const FirstRank r{1 + static_cast<int>(uniform_index(rng, 25)), uniform_index(rng, 4) != 0};
      ranks.push_back(r);
      refs.push_back(r);
    }
    double prev = -1.0;
    for (int k = 1; k <= 30; ++k) {
      std::size_t hit = 0;
      for (const auto& r : refs) hit += (r.found && r.rank <= k) ? 1 : 0;
      const double want = static_cast<double>(hit) / static_cast<double>(refs.size());
      const double got = recall_at_k(ranks, k);
      if (got != want) ++mismatches;
      if (got < prev) ++monotone_breaks;
      prev = got;
    }
    double sum = 0.0;
    std::size_t found = 0;
    for (const auto& r : refs)
      if (r.found) {
        sum += r.rank;
        ++found;
      }
    const auto m = mfr(ranks);
    const bool same = found == 0 ? std::isnan(m.mfr) : m.mfr == sum / static_cast<double>(found);
    if (!same || m.not_found != refs.size() - found) ++mismatches;
  }
  return {mismatches == 0 && monotone_breaks == 0,
          fmt("1000 lists, %zu mismatches, %zu monotonicity breaks", mismatches, monotone_breaks)};
}

// 7 -------------------------------------------------------------------------

RankedPrediction perfect_ranking(const PatchRecord& r) {
  auto all = enumerate_operation_paths(parse(r.buggy_src));
  std::stable_partition(all.begin(), all.end(), [&](const OperationPath& p) {
    return std::find(r.oracle.begin(), r.oracle.end(), p) != r.oracle.end();
  });
  RankedPrediction pred;
  for (std::size_t i = 0; i < all.size(); ++i)
    pred.entries.push_back({all[i], 1.0 / static_cast<double>(all.size()), -static_cast<double>(i)});
  return pred;
}

Outcome repair_soundness() {
  const auto train_seeds = synthesize_methods(120, 71);
  const auto train_set = records_of(generate_corpus(train_seeds, 600, kUniformMix, 72));
  auto hp = dims(16);
  hp.epochs = 10;
  hp.batch_size = 16;
  hp.lr = 0.005;
  BeepModel model(hp, Vocab::build(train_set, false), 73);
  train(model, train_set, {74, {}});

  const auto test_seeds = synthesize_methods(200, 75);
  const KindMix mix = {1, 1, 1, 0, 0, 0};
  const auto tests = records_of(generate_corpus(test_seeds, 500, mix, 76));

  std::vector<RepairOutcome> outcomes;
  std::vector<double> perfect_npc;
  std::size_t plausible = 0, mismatched = 0, perfect_plausible = 0;
  for (const auto& r : tests) {
    OracleValidator v(r.fixed_src);
    auto out = generate_and_validate(r.buggy_src, model.predict_ranked(r.buggy_src), v);
    if (out.status == RepairStatus::Plausible) {
      ++plausible;
      // Independent check: identical token texts and identical tree.
      const auto& src = out.patch->patched_src;
      if (token_texts(src) != token_texts(r.fixed_src) || !structurally_equal(parse(src), parse(r.fixed_src)))
        ++mismatched;
    }
    outcomes.push_back(std::move(out));

    OracleValidator pv(r.fixed_src);
    const auto p = generate_and_validate(r.buggy_src, perfect_ranking(r), pv);
    if (p.status == RepairStatus::Plausible) ++perfect_plausible;
    perfect_npc.push_back(static_cast<double>(p.npc));
  }
  const auto cr = correctness_ratio(outcomes);
  const auto npc = describe(perfect_npc);
  const bool ok = tests.size() == 500 && plausible > 0 && mismatched == 0 && cr && *cr == 1.0 && npc.median <= 2.0;
  return {ok, fmt("model: %zu/500 plausible, CR %.3f; perfect ranking: %zu/500 plausible, median NPC %.1f", plausible,
                  cr ? *cr : std::nan(""), perfect_plausible, npc.median)};
}

// 9 -------------------------------------------------------------------------

struct CliRun {
  int code;
  std::string out;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fixloc");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
  return s;
}

// Every artifact of one pipeline run, with the run directory masked out.
std::vector<std::pair<std::string, std::string>> pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  const auto p = [&](const char* n) { return (dir / n).string(); };
  std::vector<std::pair<std::string, std::string>> art;
  auto must = [](const CliRun& r, const char* what) {
    if (r.code != 0) throw std::runtime_error(std::string(what) + " exited " + std::to_string(r.code));
    return r.out;
  };
  must(cli({"--seed", "9", "gen-corpus", "--n", "80", "--synth", "40", "--out", p("corpus.jsonl")}), "gen-corpus");
  must(cli({"--seed", "9", "train", "--data", p("corpus.jsonl"), "--dims", "8", "--epochs", "2", "--batch-size", "8",
            "--out", p("model.ckpt")}),
       "train");
  {
    std::ifstream in(p("corpus.jsonl"));
    std::string line;
    std::getline(in, line);
    std::ofstream(p("method.mj")) << nlohmann::json::parse(line).at("buggy_src").get<std::string>();
  }
  art.emplace_back("predict stdout", must(cli({"predict", "--model", p("model.ckpt"), "--method", p("method.mj"), "--top", "20"}), "predict"));
  art.emplace_back("evaluate stdout",
                   must(cli({"evaluate", "--model", p("model.ckpt"), "--data", p("corpus.jsonl"), "--scenario", "both"}), "evaluate"));
  art.emplace_back("cv stdout", must(cli({"--seed", "9", "evaluate", "--data", p("corpus.jsonl"), "--folds", "3", "--dims", "4",
                                          "--epochs", "1", "--forest-trees", "4", "--out", p("cv.json")}),
                                     "evaluate --folds"));
  for (const char* f : {"corpus.jsonl", "corpus.jsonl.manifest.json", "model.ckpt", "model.ckpt.manifest.json", "cv.json"})
    art.emplace_back(f, replace_all(slurp(dir / f), dir.string(), "<dir>"));
  return art;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / fmt("fixloc-accept-%d", static_cast<int>(::getpid()));
  fs::remove_all(root);
  const auto a = pipeline(root / "a");
  const auto b = pipeline(root / "b");
  fs::remove_all(root);
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].second != b[i].second || a[i].second.empty()) differing.push_back(a[i].first);
  std::string detail = fmt("%zu artifacts compared", a.size());
  for (const auto& d : differing) detail += ", differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  guarded("1 gradient fidelity", gradient_fidelity);
  guarded("2 distribution contract", distribution_contract);

  const std::size_t n_seeds = 240;
  std::vector<MutantRecord> mutants;
  guarded("3 oracle round-trip", [&] {
    mutants = generate_corpus(synthesize_methods(n_seeds, 1), 2000, kUniformMix, 2);
    return oracle_round_trip(mutants);
  });

  guarded("4 memorization", memorization);

  const auto corpus = records_of(mutants);
  double beep_mfr = std::nan("");
  guarded("5 superiority", [&] {
    std::vector<std::string> distinct;
    for (const auto& r : corpus) distinct.push_back(r.fixed_src);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    return superiority(corpus, distinct.size(), &beep_mfr);
  });
  guarded("6 metric oracles", metric_oracles);
  guarded("7 repair soundness", repair_soundness);
  guarded("8 ablation direction", [&] {
    if (std::isnan(beep_mfr)) return Outcome{false, "full-model MFR unavailable"};
    return ablation(corpus, beep_mfr);
  });
  guarded("9 determinism", determinism);

  std::size_t failed = 0;
  for (const auto& [name, o] : g_results) failed += o.pass ? 0 : 1;
  std::printf("%zu/%zu criteria passed in %.0fs\n", g_results.size() - failed, g_results.size(), seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
