#include "fixloc/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fixloc/error.hpp"
#include "fixloc/eval.hpp"
#include "fixloc/gradcheck.hpp"
#include "fixloc/mutation.hpp"
#include "fixloc/repair.hpp"
#include "fixloc/rng.hpp"

namespace fixloc {

namespace {

constexpr int kGrammarVersion = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw NotFound("cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw NotFound("cannot write '" + path + "'");
  return out;
}

std::string slurp(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<PatchRecord> read_records(const std::string& path) {
  auto in = open_in(path);
  return read_patch_records(in);
}

BeepModel load_model(const std::string& path) {
  auto in = open_in(path, true);
  return BeepModel::load(in);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

/// Flat key=value lines; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  auto in = open_in(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

/// Fills options the command line left unset; flags always win.
void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : read_config(path)) {
    CLI::Option* opt = sub ? sub->get_option_no_throw("--" + key) : nullptr;
    if (!opt) opt = app.get_option_no_throw("--" + key);
    if (!opt) throw UsageError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

nlohmann::json option_values(const CLI::App& app, const CLI::App* sub) {
  nlohmann::json j = nlohmann::json::object();
  auto collect = [&](const CLI::App& a) {
    for (const CLI::Option* o : a.get_options()) {
      const std::string name = o->get_lnames().empty() ? o->get_name() : o->get_lnames().front();
      if (name == "help" || name == "config") continue;
      if (o->count() > 0) {
        const auto& r = o->results();
        j[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
      }
    }
  };
  collect(app);
  if (sub) collect(*sub);
  return j;
}

void write_manifest(const std::string& output, const std::string& subcommand, std::uint64_t seed,
                    const nlohmann::json& options, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json m;
  m["tool"] = "fixloc";
  m["version"] = kToolVersion;
  m["grammar_version"] = kGrammarVersion;
  m["subcommand"] = subcommand;
  m["seed"] = seed;
  m["options"] = options;
  for (const auto& [k, v] : extra.items()) m[k] = v;
  auto out = open_out(output + ".manifest.json");
  out << m.dump(2) << '\n';
}

struct HpFlags {
  int dims = 0;
  HyperParams hp;

  void add(CLI::App* sub) {
    sub->add_option("--dims", dims, "Set d_t, d_p, d_o and d_hidden together");
    sub->add_option("--d-t", hp.d_t, "Token embedding width");
    sub->add_option("--d-p", hp.d_p, "Path LSTM width per direction");
    sub->add_option("--d-o", hp.d_o, "Operator embedding width");
    sub->add_option("--d-hidden", hp.d_hidden, "Projection and recurrent width");
    sub->add_option("--max-l", hp.max_l, "Longest path kept, counted from the leaf");
    sub->add_option("--max-k", hp.max_k, "Candidates per pointer window");
    sub->add_option("--lr", hp.lr, "Adam learning rate");
    sub->add_option("--epochs", hp.epochs, "Training epochs");
    sub->add_option("--batch-size", hp.batch_size, "Methods per update");
    sub->add_flag("--no-token-split", hp.no_token_split, "Embed whole tokens");
    sub->add_flag("--whole-path-embedding", hp.whole_path_embedding, "One embedding per path string");
    sub->add_flag("--no-fc-layer", hp.no_fc_layer, "Feed the concatenation straight to the encoder");
  }

  HyperParams resolved() const {
    HyperParams out = hp;
    if (dims > 0) out.d_t = out.d_p = out.d_o = out.d_hidden = dims;
    out.validate();
    return out;
  }
};

KindMix parse_mix(const std::string& text) {
  KindMix mix{};
  std::stringstream in(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, ',')) {
    if (i >= mix.size()) throw UsageError("--mix takes " + std::to_string(mix.size()) + " weights");
    try {
      mix[i++] = std::stod(part);
    } catch (const std::exception&) {
      throw UsageError("bad weight '" + part + "' in --mix");
    }
  }
  if (i != mix.size()) throw UsageError("--mix takes " + std::to_string(mix.size()) + " weights");
  return mix;
}

std::vector<Scenario> parse_scenarios(const std::string& s) {
  if (s == "both") return {Scenario::Method, Scenario::Line};
  try {
    return {scenario_from_string(s)};
  } catch (const FormatError&) {
    throw UsageError("--scenario must be method, line or both");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fix localization over operation paths: corpus generation, training, ranking, evaluation and repair."};
  app.name("fixloc");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  std::uint64_t seed = 0;
  std::string config;
  app.add_option("--seed", seed, "Root seed for every random choice")->capture_default_str();
  app.add_option("--config", config, "Flat key=value file; command-line flags take precedence");

  // extract
  std::string ex_pairs, ex_out;
  auto* extract = app.add_subcommand("extract", "Derive oracle operation paths from (buggy, fixed) pairs");
  extract->add_option("--pairs", ex_pairs, "JSONL with id, buggy_src and fixed_src");
  extract->add_option("--out", ex_out, "PatchRecord JSONL output");

  // gen-corpus
  std::string gc_seeds, gc_out, gc_mix = "1,1,1,1,1,1";
  std::size_t gc_n = 2000, gc_synth = 240;
  auto* gen = app.add_subcommand("gen-corpus", "Inject single-token bugs into seed methods");
  gen->add_option("--seeds", gc_seeds, "JSON array of seed method sources (default: synthesized)");
  gen->add_option("--synth", gc_synth, "Number of synthesized seed methods when --seeds is absent");
  gen->add_option("--n", gc_n, "Number of mutants");
  gen->add_option("--mix", gc_mix,
                  "Comma-separated weights for OperatorSwap, BooleanFlip, TypeSwap, IdentifierSwap, TokenDelete, "
                  "TokenInsert");
  gen->add_option("--out", gc_out, "Mutant JSONL output");

  // train
  std::string tr_data, tr_out;
  HpFlags tr_hp;
  auto* trn = app.add_subcommand("train", "Train the localizer and write a checkpoint");
  trn->add_option("--data", tr_data, "PatchRecord JSONL");
  trn->add_option("--out", tr_out, "Checkpoint path");
  tr_hp.add(trn);

  // predict
  std::string pr_model, pr_method;
  std::size_t pr_top = 10;
  int pr_line = 0;
  auto* pred = app.add_subcommand("predict", "Rank the operation paths of one method");
  pred->add_option("--model", pr_model, "Checkpoint");
  pred->add_option("--method", pr_method, "Method source file");
  pred->add_option("--top", pr_top, "Number of lines to print");
  pred->add_option("--line", pr_line, "Restrict candidates to one source line");

  // evaluate
  std::string ev_model, ev_data, ev_out, ev_scenario = "method", ev_mode = "token_only";
  int ev_folds = 0, ev_trees = 100;
  bool ev_no_baselines = false;
  HpFlags ev_hp;
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint, or cross-validate all localizers with --folds");
  eval->add_option("--model", ev_model, "Checkpoint to score on --data");
  eval->add_option("--data", ev_data, "PatchRecord JSONL");
  eval->add_option("--scenario", ev_scenario, "method, line or both");
  eval->add_option("--mode", ev_mode, "token_only or token_and_operator");
  eval->add_option("--folds", ev_folds, "Cross-validate with this many folds instead of scoring --model");
  eval->add_option("--forest-trees", ev_trees, "Trees in the forest baseline");
  eval->add_flag("--no-baselines", ev_no_baselines, "Cross-validate the localizer alone");
  eval->add_option("--out", ev_out, "Write the JSON report here and print the table");
  ev_hp.add(eval);

  // repair
  std::string rp_data, rp_model, rp_cmd, rp_out;
  bool rp_perfect = false, rp_no_pairs = false;
  std::size_t rp_width = 20;
  auto* rep = app.add_subcommand("repair", "Generate and validate patches from ranked predictions");
  rep->add_option("--data", rp_data, "PatchRecord JSONL");
  rep->add_option("--model", rp_model, "Checkpoint providing the ranking");
  rep->add_flag("--perfect", rp_perfect, "Rank the oracle paths first instead of using a model");
  rep->add_option("--test-cmd", rp_cmd, "Validation command; {patched} becomes the candidate file");
  rep->add_option("--width", rp_width, "Ranked paths considered");
  rep->add_flag("--no-pairs", rp_no_pairs, "Skip pairwise combinations");
  rep->add_option("--out", rp_out, "Outcome JSONL output");

  // gradcheck
  HpFlags gc_hp;
  gc_hp.dims = 4;
  gc_hp.hp.max_l = 6;
  std::size_t gk_k = 6;
  double gk_tol = 1e-4;
  auto* grad = app.add_subcommand("gradcheck", "Compare backprop with central differences at small dimensions");
  gc_hp.add(grad);
  grad->add_option("--candidates", gk_k, "Candidates per checked set");
  grad->add_option("--tolerance", gk_tol, "Largest accepted relative error");

  // effort-stats
  std::string es_data;
  auto* effort = app.add_subcommand("effort-stats", "Non-keyword token counts per buggy method and line");
  effort->add_option("--data", es_data, "PatchRecord JSONL");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    CLI::App* sub = app.get_subcommands().front();
    if (!config.empty()) apply_config(app, sub, config);
    const auto options = option_values(app, sub);
    const std::string name = sub->get_name();

    if (sub == extract) {
      require(ex_pairs, "--pairs");
      require(ex_out, "--out");
      auto in = open_in(ex_pairs);
      std::vector<PatchRecord> records;
      std::size_t skipped = 0;
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
        }
        PatchRecord r;
        r.id = j.value("id", "pair-" + std::to_string(lineno));
        r.buggy_src = j.at("buggy_src").get<std::string>();
        r.fixed_src = j.at("fixed_src").get<std::string>();
        try {
          r.oracle = extract_oracle(parse(r.buggy_src), parse(r.fixed_src));
          records.push_back(std::move(r));
        } catch (const Error& e) {
          ++skipped;
          err << "skip " << r.id << ": " << e.what() << '\n';
        }
      }
      auto o = open_out(ex_out);
      write_patch_records(o, records);
      write_manifest(ex_out, name, seed, options, {{"records", records.size()}, {"skipped", skipped}});
      out << records.size() << " records, " << skipped << " skipped\n";
      return 0;
    }

    if (sub == gen) {
      require(gc_out, "--out");
      std::vector<std::string> seeds;
      if (!gc_seeds.empty()) {
        try {
          seeds = nlohmann::json::parse(slurp(gc_seeds)).get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
          throw FormatError(gc_seeds + ": " + e.what());
        }
      } else {
        seeds = synthesize_methods(gc_synth, derive_seed(seed, "seed-methods"));
      }
      const auto mix = parse_mix(gc_mix);
      const auto corpus = generate_corpus(seeds, gc_n, mix, derive_seed(seed, "corpus"));
      auto o = open_out(gc_out);
      write_mutant_records(o, corpus);
      write_manifest(gc_out, name, seed, options,
                     {{"n", gc_n}, {"mix", std::vector<double>(mix.begin(), mix.end())}, {"seed_methods", seeds.size()}});
      out << corpus.size() << " mutants from " << seeds.size() << " seed methods\n";
      return 0;
    }

    if (sub == trn) {
      require(tr_data, "--data");
      require(tr_out, "--out");
      const auto hp = tr_hp.resolved();
      const auto records = read_records(tr_data);
      BeepModel model(hp, Vocab::build(records, hp.no_token_split), derive_seed(seed, "init"));
      TrainOptions opts;
      opts.seed = derive_seed(seed, "train");
      opts.on_epoch = [&](const EpochStats& s) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "epoch %3d  loss %.6f  train recall@1 %.4f\n", s.epoch, s.mean_loss,
                      s.train_recall1);
        err << buf;
        return true;
      };
      const auto log = train(model, records, opts);
      auto o = open_out(tr_out, true);
      model.save(o, {{"seed", seed}, {"records", records.size()}});
      nlohmann::json epochs = nlohmann::json::array();
      for (const auto& s : log) epochs.push_back({{"epoch", s.epoch}, {"mean_loss", s.mean_loss}, {"train_recall1", s.train_recall1}});
      write_manifest(tr_out, name, seed, options, {{"hyper_params", to_json(hp)}, {"epochs", epochs}});
      return 0;
    }

    if (sub == pred) {
      require(pr_model, "--model");
      require(pr_method, "--method");
      const auto model = load_model(pr_model);
      const std::string src = slurp(pr_method);
      const auto ast = parse(src);
      Scope scope;
      if (pr_line > 0) scope.line = pr_line;
      const auto ranking = model.predict_ranked(src, scope);
      for (std::size_t i = 0; i < ranking.entries.size() && i < pr_top; ++i) {
        const auto& e = ranking.entries[i];
        const Node& leaf = ast.leaf(static_cast<std::size_t>(e.path.path.leaf_index));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu %.6f ", i + 1, e.probability);
        out << buf << to_string(e.path.op) << ' ' << e.path.token << " @" << leaf.line << ':' << leaf.column << ' '
            << path_to_string(e.path.path.kinds) << '\n';
      }
      return 0;
    }

    if (sub == eval) {
      require(ev_data, "--data");
      const auto scenarios = parse_scenarios(ev_scenario);
      MatchMode mode;
      try {
        mode = match_mode_from_string(ev_mode);
      } catch (const FormatError&) {
        throw UsageError("--mode must be token_only or token_and_operator");
      }
      const auto records = read_records(ev_data);
      std::vector<EvalReport> reports;
      nlohmann::json body;
      if (ev_folds > 0) {
        CvOptions o;
        o.k = ev_folds;
        o.seed = seed;
        o.hp = ev_hp.resolved();
        o.forest.n_trees = ev_trees;
        o.scenarios = scenarios;
        o.mode = mode;
        o.baselines = !ev_no_baselines;
        o.on_progress = [&](int fold, std::string_view who) { err << "fold " << fold << ": " << who << '\n'; };
        auto cv = cross_validate(records, o);
        reports = std::move(cv.reports);
        body["folds"] = ev_folds;
        body["fold_of"] = cv.plan.fold_of;
      } else {
        require(ev_model, "--model or --folds");
        const auto model = load_model(ev_model);
        for (const auto s : scenarios) {
          std::vector<FirstRank> ranks;
          for (const auto& r : records) {
            Scope scope;
            if (s == Scenario::Line) scope.line = buggy_lines(r).front();
            ranks.push_back(first_rank(model.predict_ranked(r.buggy_src, scope), r.oracle, mode));
          }
          reports.push_back(make_report("beep", s, mode, ranks));
        }
      }
      nlohmann::json rj = nlohmann::json::array();
      for (const auto& r : reports) rj.push_back(r.to_json());
      body["reports"] = rj;
      const nlohmann::json doc = reports.size() == 1 && ev_folds == 0 ? reports.front().to_json() : body;
      if (ev_out.empty()) {
        out << doc.dump(2) << '\n';
      } else {
        auto o = open_out(ev_out);
        o << doc.dump(2) << '\n';
        write_manifest(ev_out, name, seed, options);
        out << format_table(reports);
      }
      return 0;
    }

    if (sub == rep) {
      require(rp_data, "--data");
      if (rp_perfect == !rp_model.empty()) throw UsageError("give exactly one of --model and --perfect");
      const auto records = read_records(rp_data);
      std::optional<BeepModel> model;
      if (!rp_model.empty()) model = load_model(rp_model);
      std::vector<RepairOutcome> outcomes;
      std::vector<double> npcs;
      RepairOptions ro{rp_width, !rp_no_pairs};
      std::ofstream log;
      if (!rp_out.empty()) log = open_out(rp_out);
      for (const auto& r : records) {
        RankedPrediction ranking;
        if (model) {
          ranking = model->predict_ranked(r.buggy_src);
        } else {
          auto all = enumerate_operation_paths(parse(r.buggy_src));
          std::stable_partition(all.begin(), all.end(), [&](const OperationPath& p) {
            return std::find(r.oracle.begin(), r.oracle.end(), p) != r.oracle.end();
          });
          for (auto& p : all) ranking.entries.push_back({std::move(p), 0.0, 0.0});
        }
        std::unique_ptr<Validator> v;
        if (rp_cmd.empty())
          v = std::make_unique<OracleValidator>(r.fixed_src);
        else
          v = std::make_unique<CommandValidator>(rp_cmd);
        auto outcome = generate_and_validate(r.buggy_src, ranking, *v, ro);
        if (outcome.status == RepairStatus::Plausible) npcs.push_back(static_cast<double>(outcome.npc));
        if (log) {
          auto j = outcome.to_json();
          j["id"] = r.id;
          log << j.dump() << '\n';
        }
        outcomes.push_back(std::move(outcome));
      }
      nlohmann::json summary;
      summary["bugs"] = outcomes.size();
      summary["plausible"] = npcs.size();
      summary["median_npc"] = npcs.empty() ? nlohmann::json(nullptr) : nlohmann::json(describe(npcs).median);
      if (rp_cmd.empty()) {
        const auto cr = correctness_ratio(outcomes);
        summary["correctness_ratio"] = cr ? nlohmann::json(*cr) : nlohmann::json("n/a");
      } else {
        summary["correctness_ratio"] = "unassessed";
      }
      out << summary.dump(2) << '\n';
      if (!rp_out.empty()) write_manifest(rp_out, name, seed, options, {{"summary", summary}});
      return 0;
    }

    if (sub == grad) {
      const auto hp = gc_hp.resolved();
      const auto result = check_model_gradients(hp, seed, gk_k);
      for (const auto& [tensor, e] : result.report.rel_error) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-20s %.3e\n", tensor.c_str(), e);
        err << buf;
      }
      char buf[96];
      std::snprintf(buf, sizeof buf, "max relative error %.3e\n", result.report.max_rel_error);
      out << buf;
      return result.report.max_rel_error < gk_tol ? 0 : 1;
    }

    if (sub == effort) {
      require(es_data, "--data");
      out << effort_stats(read_records(es_data)).to_json().dump(2) << '\n';
      return 0;
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: FormatError: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fixloc
