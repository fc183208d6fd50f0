#include "fixloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "fixloc/error.hpp"
#include "fixloc/rng.hpp"

namespace fixloc {

using ad::Graph;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kProbFloor = 1e-7;
constexpr int kCheckpointFormat = 1;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

int op_index(ChangeOperator op) { return static_cast<int>(op); }

bool canonical_less(const OperationPath& a, const OperationPath& b) {
  if (a.path.leaf_index != b.path.leaf_index) return a.path.leaf_index < b.path.leaf_index;
  if (a.op != b.op) return a.op < b.op;
  return a.token < b.token;
}

}  // namespace

void sort_canonical(std::vector<OperationPath>& paths) {
  std::stable_sort(paths.begin(), paths.end(), canonical_less);
}

// ---------------------------------------------------------------------------
// HyperParams

void HyperParams::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"d_t", d_t},       {"d_p", d_p},       {"d_o", d_o},       {"d_hidden", d_hidden},
      {"max_l", max_l},   {"max_k", max_k},   {"lr", lr},         {"epochs", epochs},
      {"batch_size", batch_size},
  };
  for (const auto& [name, v] : fields)
    if (!(v > 0)) throw FormatError(std::string("hyper-parameter ") + name + " must be positive");
}

nlohmann::json to_json(const HyperParams& hp) {
  return {{"d_t", hp.d_t},
          {"d_p", hp.d_p},
          {"d_o", hp.d_o},
          {"d_hidden", hp.d_hidden},
          {"max_l", hp.max_l},
          {"max_k", hp.max_k},
          {"lr", hp.lr},
          {"epochs", hp.epochs},
          {"batch_size", hp.batch_size},
          {"no_token_split", hp.no_token_split},
          {"whole_path_embedding", hp.whole_path_embedding},
          {"no_fc_layer", hp.no_fc_layer}};
}

HyperParams hyper_params_from_json(const nlohmann::json& j) {
  HyperParams hp;
  try {
    hp.d_t = j.value("d_t", hp.d_t);
    hp.d_p = j.value("d_p", hp.d_p);
    hp.d_o = j.value("d_o", hp.d_o);
    hp.d_hidden = j.value("d_hidden", hp.d_hidden);
    hp.max_l = j.value("max_l", hp.max_l);
    hp.max_k = j.value("max_k", hp.max_k);
    hp.lr = j.value("lr", hp.lr);
    hp.epochs = j.value("epochs", hp.epochs);
    hp.batch_size = j.value("batch_size", hp.batch_size);
    hp.no_token_split = j.value("no_token_split", hp.no_token_split);
    hp.whole_path_embedding = j.value("whole_path_embedding", hp.whole_path_embedding);
    hp.no_fc_layer = j.value("no_fc_layer", hp.no_fc_layer);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("hyper-parameters: ") + e.what());
  }
  hp.validate();
  return hp;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  tokens_.emplace_back(kUnk);
  index_.emplace(std::string(kUnk), 0);
  paths_.emplace_back(kUnk);
  path_index_.emplace(std::string(kUnk), 0);
}

Vocab Vocab::build(std::span<const PatchRecord> records, bool whole_tokens) {
  Vocab v;
  v.whole_tokens_ = whole_tokens;
  for (const auto& r : records) {
    const auto ast = parse(r.buggy_src);
    const auto paths = ast_paths(ast);
    for (std::size_t i = 0; i < ast.leaf_count(); ++i) {
      const auto& tok = ast.token_of(i);
      const auto units = whole_tokens ? SubTokenSeq{tok} : split_subtokens(tok);
      for (const auto& u : units) {
        if (v.index_.contains(u)) continue;
        v.index_.emplace(u, static_cast<int>(v.tokens_.size()));
        v.tokens_.push_back(u);
      }
      auto key = path_to_string(paths[i].kinds);
      if (!v.path_index_.contains(key)) {
        v.path_index_.emplace(key, static_cast<int>(v.paths_.size()));
        v.paths_.push_back(std::move(key));
      }
    }
  }
  return v;
}

int Vocab::index(std::string_view unit) const {
  const auto it = index_.find(unit);
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> Vocab::token_rows(std::string_view token) const {
  if (whole_tokens_) return {index(token)};
  std::vector<int> rows;
  for (const auto& u : split_subtokens(token)) rows.push_back(index(u));
  if (rows.empty()) rows.push_back(0);
  return rows;
}

int Vocab::path_row(std::span<const NodeKind> kinds) const {
  const auto it = path_index_.find(path_to_string(kinds));
  return it == path_index_.end() ? 0 : it->second;
}

nlohmann::json Vocab::to_json() const {
  return {{"whole_tokens", whole_tokens_}, {"tokens", tokens_}, {"paths", paths_}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  v.paths_.clear();
  v.path_index_.clear();
  try {
    v.whole_tokens_ = j.at("whole_tokens").get<bool>();
    for (const auto& t : j.at("tokens")) {
      v.index_.emplace(t.get<std::string>(), static_cast<int>(v.tokens_.size()));
      v.tokens_.push_back(t.get<std::string>());
    }
    for (const auto& p : j.at("paths")) {
      v.path_index_.emplace(p.get<std::string>(), static_cast<int>(v.paths_.size()));
      v.paths_.push_back(p.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocab: ") + e.what());
  }
  if (v.tokens_.empty() || v.tokens_[0] != kUnk || v.paths_.empty() || v.paths_[0] != kUnk)
    throw FormatError("vocab: UNK must be entry 0");
  return v;
}

// ---------------------------------------------------------------------------
// Model construction

BeepModel::BeepModel(HyperParams hp, Vocab vocab, std::uint64_t seed)
    : hp_(std::move(hp)), vocab_(std::move(vocab)) {
  hp_.validate();
  if (vocab_.whole_tokens() != hp_.no_token_split)
    throw FormatError("vocabulary token mode does not match no_token_split");
  init(seed);
}

void BeepModel::init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "beep-init"));
  auto uniform_tensor = [&](std::size_t r, std::size_t c, double limit) {
    Tensor t(r, c);
    for (auto& x : t.data()) x = uniform(rng, -limit, limit);
    return t;
  };
  auto xavier = [&](std::size_t r, std::size_t c) {
    return uniform_tensor(r, c, std::sqrt(6.0 / static_cast<double>(r + c)));
  };
  // Gate bias with the forget block at 1.
  auto lstm_bias = [](std::size_t h) {
    Tensor b(1, 4 * h);
    for (std::size_t k = h; k < 2 * h; ++k) b[k] = 1.0;
    return b;
  };

  const std::size_t dt = sz(hp_.d_t), dp = sz(hp_.d_p), d_o = sz(hp_.d_o), h = sz(hp_.d_hidden);
  params_.add("E_t", uniform_tensor(vocab_.size(), dt, 0.1));
  params_.add("E_o", uniform_tensor(3, d_o, 0.1));
  if (hp_.whole_path_embedding) {
    params_.add("E_paths", uniform_tensor(vocab_.path_count(), 2 * dp, 0.1));
  } else {
    params_.add("E_p", uniform_tensor(kNodeKindCount, dp, 0.1));
    for (const char* dir : {"path_fwd", "path_bwd"}) {
      const std::string pre(dir);
      params_.add(pre + ".W_x", xavier(dp, 4 * dp));
      params_.add(pre + ".W_h", xavier(dp, 4 * dp));
      params_.add(pre + ".b", lstm_bias(dp));
    }
  }
  if (!hp_.no_fc_layer) params_.add("W_in", xavier(sz(hp_.concat_width()), h));
  params_.add("enc.W_x", xavier(sz(hp_.encoder_input_width()), 4 * h));
  params_.add("enc.W_h", xavier(h, 4 * h));
  params_.add("enc.b", lstm_bias(h));
  params_.add("dec.W_x", xavier(h, 4 * h));
  params_.add("dec.W_h", xavier(h, 4 * h));
  params_.add("dec.b", lstm_bias(h));
  params_.add("W1", xavier(h, h));
  params_.add("W2", xavier(h, h));
  params_.add("v", xavier(h, 1));
  params_.zero_grad();
}

ad::Parameter& BeepModel::p(std::string_view name) const { return params_.get(name); }

// ---------------------------------------------------------------------------
// Graph construction

struct BeepModel::Prepared {
  struct Method {
    std::vector<std::string> leaf_tokens;
    std::vector<int> cand_leaf;  // index into leaf_tokens
    std::vector<int> cand_seq;   // index into seqs
    std::vector<int> cand_op;
  };
  std::vector<std::vector<NodeKind>> seqs;
  std::map<std::vector<NodeKind>, int> seq_index;
  std::vector<Method> methods;
  Var path_rows;  // seqs.size() x 2 d_p
};

namespace {

std::vector<NodeKind> path_key(const AstPath& path, const HyperParams& hp) {
  if (hp.whole_path_embedding || path.kinds.size() <= sz(hp.max_l)) return path.kinds;
  return {path.kinds.end() - hp.max_l, path.kinds.end()};
}

// Final hidden state of one LSTM direction over equal-length sequences.
Var run_path_lstm(Graph& g, Var table, ad::Parameter& wx, ad::Parameter& wh, ad::Parameter& b,
                  const std::vector<const std::vector<NodeKind>*>& group, bool reverse, std::size_t dp) {
  const std::size_t batch = group.size();
  const std::size_t len = group[0]->size();
  std::vector<int> idx(len * batch);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t s = 0; s < batch; ++s) {
      const auto& seq = *group[s];
      idx[t * batch + s] = static_cast<int>(seq[reverse ? len - 1 - t : t]);
    }
  const Var gates = g.add(g.matmul(g.gather_rows(table, std::move(idx)), g.param(wx)), g.param(b));
  const Var zeros = g.input(Tensor(batch, dp));
  const Var out = g.lstm(gates, g.param(wh), zeros, zeros, batch);
  return g.slice_cols(g.slice_rows(out, (len - 1) * batch, batch), 0, dp);
}

}  // namespace

ad::Var BeepModel::raw_scores(Graph& g, Prepared& prep, std::size_t method) const {
  const auto& m = prep.methods[method];
  const std::size_t k = m.cand_leaf.size();

  // V_t: per leaf, sum of sub-token rows via a 0/1 selection matrix.
  std::vector<int> rows;
  std::vector<std::size_t> offsets;
  for (const auto& tok : m.leaf_tokens) {
    offsets.push_back(rows.size());
    const auto r = vocab_.token_rows(tok);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  offsets.push_back(rows.size());
  Tensor select(m.leaf_tokens.size(), rows.size());
  for (std::size_t l = 0; l < m.leaf_tokens.size(); ++l)
    for (std::size_t c = offsets[l]; c < offsets[l + 1]; ++c) select(l, c) = 1.0;
  const Var leaf_vt = g.matmul(g.input(std::move(select)), g.gather_rows(g.param(p("E_t")), std::move(rows)));

  const Var vt = g.gather_rows(leaf_vt, m.cand_leaf);
  const Var vp = g.gather_rows(prep.path_rows, m.cand_seq);
  const Var vo = g.gather_rows(g.param(p("E_o")), m.cand_op);
  const Var parts[] = {vt, vp, vo};
  Var z = g.concat_cols(parts);
  if (!hp_.no_fc_layer) z = g.tanh(g.matmul(z, g.param(p("W_in"))));

  const std::size_t window = sz(hp_.max_k);
  if (k <= window) return pointer_scores(g, z);
  std::vector<Var> pieces;
  for (std::size_t start = 0; start < k; start += window)
    pieces.push_back(pointer_scores(g, g.slice_rows(z, start, std::min(window, k - start))));
  return g.concat_cols(pieces);
}

ad::Var BeepModel::pointer_scores(Graph& g, Var z) const {
  const std::size_t h = sz(hp_.d_hidden);
  const std::size_t k = g.value(z).rows();
  const Var zeros = g.input(Tensor(1, h));

  const Var enc_gates = g.add(g.matmul(z, g.param(p("enc.W_x"))), g.param(p("enc.b")));
  const Var enc = g.lstm(enc_gates, g.param(p("enc.W_h")), zeros, zeros, 1);
  const Var e = g.slice_cols(enc, 0, h);
  const Var last = g.slice_rows(enc, k - 1, 1);

  const Var dec_gates = g.add(g.matmul(e, g.param(p("dec.W_x"))), g.param(p("dec.b")));
  const Var dec = g.lstm(dec_gates, g.param(p("dec.W_h")), g.slice_cols(last, 0, h), g.slice_cols(last, h, h), 1);
  const Var b = g.slice_cols(dec, 0, h);

  const Var att = g.tanh(g.add(g.matmul(e, g.param(p("W1"))), g.matmul(b, g.param(p("W2")))));
  return g.transpose(g.matmul(att, g.param(p("v"))));
}

ad::Var BeepModel::build_loss(Graph& g, std::span<const std::vector<OperationPath>> candidates,
                              std::span<const std::vector<int>> labels, std::vector<Var>* probs_out,
                              std::vector<Var>* scores_out) {
  if (candidates.size() != labels.size())
    throw LengthMismatch(std::to_string(candidates.size()) + " candidate sets, " + std::to_string(labels.size()) +
                         " label sets");
  Prepared prep;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].size() != labels[i].size())
      throw LengthMismatch(std::to_string(candidates[i].size()) + " candidates, " +
                           std::to_string(labels[i].size()) + " labels");
    if (candidates[i].empty()) throw NoCandidates("empty candidate set");
  }

  // Shared preparation: identical to predict_candidates, but over many methods.
  for (const auto& cands : candidates) {
    Prepared::Method m;
    std::map<int, int> leaf_slot;
    for (const auto& c : cands) {
      auto [it, fresh] = leaf_slot.emplace(c.path.leaf_index, static_cast<int>(m.leaf_tokens.size()));
      if (fresh) m.leaf_tokens.push_back(c.token);
      m.cand_leaf.push_back(it->second);
      auto key = path_key(c.path, hp_);
      auto [sit, sfresh] = prep.seq_index.emplace(key, static_cast<int>(prep.seqs.size()));
      if (sfresh) prep.seqs.push_back(std::move(key));
      m.cand_seq.push_back(sit->second);
      m.cand_op.push_back(op_index(c.op));
    }
    prep.methods.push_back(std::move(m));
  }

  // Path encodings for every distinct sequence, grouped by length.
  if (hp_.whole_path_embedding) {
    std::vector<int> rows;
    for (const auto& s : prep.seqs) rows.push_back(vocab_.path_row(s));
    prep.path_rows = g.gather_rows(g.param(p("E_paths")), std::move(rows));
  } else {
    const std::size_t dp = sz(hp_.d_p);
    std::map<std::size_t, std::vector<int>> by_len;
    for (std::size_t i = 0; i < prep.seqs.size(); ++i) by_len[prep.seqs[i].size()].push_back(static_cast<int>(i));
    const Var table = g.param(p("E_p"));
    std::vector<Var> blocks;
    std::vector<int> order;
    for (const auto& [len, ids] : by_len) {
      std::vector<const std::vector<NodeKind>*> group;
      for (const int id : ids) group.push_back(&prep.seqs[sz(id)]);
      const Var fwd = run_path_lstm(g, table, p("path_fwd.W_x"), p("path_fwd.W_h"), p("path_fwd.b"), group, false, dp);
      const Var bwd = run_path_lstm(g, table, p("path_bwd.W_x"), p("path_bwd.W_h"), p("path_bwd.b"), group, true, dp);
      const Var both[] = {fwd, bwd};
      blocks.push_back(g.concat_cols(both));
      order.insert(order.end(), ids.begin(), ids.end());
    }
    // Rows of the stacked blocks follow `order`; remap candidates onto them.
    std::vector<int> row_of(prep.seqs.size());
    for (std::size_t r = 0; r < order.size(); ++r) row_of[sz(order[r])] = static_cast<int>(r);
    for (auto& m : prep.methods)
      for (auto& s : m.cand_seq) s = row_of[sz(s)];
    prep.path_rows = blocks.size() == 1 ? blocks[0] : g.concat_rows(blocks);
  }

  Var total{};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Var u = raw_scores(g, prep, i);
    if (scores_out) scores_out->push_back(u);
    const Var probs = g.softmax(u);
    if (probs_out) probs_out->push_back(probs);
    const std::size_t k = labels[i].size();
    Tensor y(1, k), not_y(1, k);
    for (std::size_t j = 0; j < k; ++j) {
      y[j] = labels[i][j] ? 1.0 : 0.0;
      not_y[j] = 1.0 - y[j];
    }
    const Var pc = g.clamp(probs, kProbFloor, 1.0 - kProbFloor);
    const Var pos = g.mul(g.log(pc), g.input(std::move(y)));
    const Var neg = g.mul(g.log(g.affine(pc, -1.0, 1.0)), g.input(std::move(not_y)));
    const Var loss = g.affine(g.sum(g.add(pos, neg)), -1.0);
    total = total.id < 0 ? loss : g.add(total, loss);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Inference

EmbeddedPath BeepModel::embed(const OperationPath& op) const {
  const std::size_t dt = sz(hp_.d_t), dp = sz(hp_.d_p), d_o = sz(hp_.d_o);
  Graph h;
  EmbeddedPath out;
  const auto rows = vocab_.token_rows(op.token);
  const Var et = h.gather_rows(h.param(p("E_t")), rows);
  const Tensor& et_v = h.value(et);
  out.v_t.assign(dt, 0.0);
  for (std::size_t r = 0; r < et_v.rows(); ++r)
    for (std::size_t c = 0; c < dt; ++c) out.v_t[c] += et_v(r, c);
  const Tensor& eo = p("E_o").value;
  out.v_o.assign(eo.row(sz(op_index(op.op))), eo.row(sz(op_index(op.op))) + d_o);

  const auto key = path_key(op.path, hp_);
  if (hp_.whole_path_embedding) {
    const Tensor& ep = p("E_paths").value;
    const int r = vocab_.path_row(key);
    out.v_p.assign(ep.row(sz(r)), ep.row(sz(r)) + 2 * dp);
  } else {
    const std::vector<const std::vector<NodeKind>*> group{&key};
    const Var table = h.param(p("E_p"));
    const Var fwd = run_path_lstm(h, table, p("path_fwd.W_x"), p("path_fwd.W_h"), p("path_fwd.b"), group, false, dp);
    const Var bwd = run_path_lstm(h, table, p("path_bwd.W_x"), p("path_bwd.W_h"), p("path_bwd.b"), group, true, dp);
    out.v_p.assign(h.value(fwd).data().begin(), h.value(fwd).data().end());
    out.v_p.insert(out.v_p.end(), h.value(bwd).data().begin(), h.value(bwd).data().end());
  }
  return out;
}

RankedPrediction BeepModel::forward(std::span<const OperationPath> paths) const {
  if (paths.empty()) throw NoCandidates("no operation paths to rank");
  if (paths.size() > sz(hp_.max_k))
    throw TooManyPaths(std::to_string(paths.size()) + " operation paths exceed max_k = " +
                       std::to_string(hp_.max_k));
  return predict_candidates({paths.begin(), paths.end()});
}

RankedPrediction BeepModel::predict_candidates(std::vector<OperationPath> candidates) const {
  if (candidates.empty()) throw NoCandidates("no operation paths to rank");
  sort_canonical(candidates);
  Graph g;
  std::vector<Var> probs, scores;
  const std::vector<std::vector<OperationPath>> sets{candidates};
  const std::vector<std::vector<int>> labels{std::vector<int>(candidates.size(), 0)};
  // Forward only: nothing here writes to parameter storage.
  const_cast<BeepModel&>(*this).build_loss(g, sets, labels, &probs, &scores);
  const Tensor& pv = g.value(probs[0]);
  const Tensor& u = g.value(scores[0]);
  RankedPrediction pred;
  for (std::size_t j = 0; j < candidates.size(); ++j)
    pred.entries.push_back(RankedEntry{std::move(candidates[j]), pv[j], u[j]});
  std::stable_sort(pred.entries.begin(), pred.entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.probability > b.probability; });
  return pred;
}

RankedPrediction BeepModel::predict_ranked(std::string_view method_src, const Scope& scope) const {
  const auto ast = parse(method_src);
  auto all = enumerate_operation_paths(ast);
  if (!scope.line) return predict_candidates(std::move(all));
  std::vector<OperationPath> in_scope;
  for (auto& c : all)
    if (ast.leaf(sz(c.path.leaf_index)).line == *scope.line) in_scope.push_back(std::move(c));
  if (in_scope.empty()) throw EmptyScope("no leaf on line " + std::to_string(*scope.line));
  return predict_candidates(std::move(in_scope));
}

// ---------------------------------------------------------------------------
// Persistence

void BeepModel::save(std::ostream& out, const nlohmann::json& extra) const {
  nlohmann::json meta = {{"format", "fixloc-beep"},
                         {"format_version", kCheckpointFormat},
                         {"hyper_params", to_json(hp_)},
                         {"vocab", vocab_.to_json()}};
  if (extra.is_object())
    for (const auto& [k, v] : extra.items()) meta[k] = v;
  ad::write_checkpoint(out, params_, meta);
}

BeepModel BeepModel::load(std::istream& in) {
  ad::ParameterSet loaded;
  const auto meta = ad::read_checkpoint(in, loaded);
  if (meta.value("format", "") != "fixloc-beep") throw FormatError("checkpoint is not a BEEP model");
  BeepModel m;
  m.hp_ = hyper_params_from_json(meta.at("hyper_params"));
  m.vocab_ = Vocab::from_json(meta.at("vocab"));
  m.init(0);
  if (m.params_.all().size() != loaded.all().size())
    throw FormatError("checkpoint holds " + std::to_string(loaded.all().size()) + " tensors, model expects " +
                      std::to_string(m.params_.all().size()));
  for (auto& param : m.params_.all()) {
    if (!loaded.contains(param.name)) throw FormatError("checkpoint lacks tensor '" + param.name + "'");
    const auto& src = loaded.get(param.name).value;
    if (src.rows() != param.value.rows() || src.cols() != param.value.cols())
      throw FormatError("tensor '" + param.name + "' has shape " + src.shape_string() + ", expected " +
                        param.value.shape_string());
    param.value = src;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Loss and training

double bce_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size())
    throw LengthMismatch(std::to_string(probs.size()) + " probabilities, " + std::to_string(labels.size()) +
                         " labels");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double pc = std::clamp(probs[i], kProbFloor, 1.0 - kProbFloor);
    loss -= labels[i] ? std::log(pc) : std::log(1.0 - pc);
  }
  return loss;
}

std::vector<EpochStats> train(BeepModel& model, std::span<const PatchRecord> dataset, const TrainOptions& opts) {
  if (dataset.empty()) throw EmptyDataset("training set is empty");
  const auto& hp = model.hyper_params();

  struct Item {
    std::vector<OperationPath> cands;
    std::vector<int> labels;
  };
  std::vector<Item> items;
  items.reserve(dataset.size());
  for (const auto& r : dataset) {
    Item it;
    it.cands = enumerate_operation_paths(parse(r.buggy_src));
    it.labels = label_paths(it.cands, r.oracle);
    items.push_back(std::move(it));
  }

  Rng order_rng(derive_seed(opts.seed, "train-order"));
  Rng neg_rng(derive_seed(opts.seed, "train-negatives"));
  ad::AdamState adam;
  adam.lr = hp.lr;
  std::vector<EpochStats> log;

  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, order_rng);
    double total_loss = 0.0;
    std::size_t hits = 0;

    for (std::size_t start = 0; start < order.size(); start += sz(hp.batch_size)) {
      const std::size_t end = std::min(order.size(), start + sz(hp.batch_size));
      std::vector<std::vector<OperationPath>> cands;
      std::vector<std::vector<int>> labels;
      for (std::size_t b = start; b < end; ++b) {
        const Item& it = items[order[b]];
        std::vector<std::size_t> keep;
        if (it.cands.size() > sz(hp.max_k)) {
          std::vector<std::size_t> neg;
          for (std::size_t j = 0; j < it.cands.size(); ++j) (it.labels[j] ? keep : neg).push_back(j);
          // Partial Fisher-Yates draw of the negatives.
          const std::size_t want = sz(hp.max_k) > keep.size() ? sz(hp.max_k) - keep.size() : 0;
          for (std::size_t j = 0; j < want && j < neg.size(); ++j) {
            std::swap(neg[j], neg[j + uniform_index(neg_rng, neg.size() - j)]);
            keep.push_back(neg[j]);
          }
          std::sort(keep.begin(), keep.end());
        } else {
          keep.resize(it.cands.size());
          std::iota(keep.begin(), keep.end(), 0);
        }
        // Enumeration order is already canonical, so sorted indices keep it.
        std::vector<OperationPath> c;
        std::vector<int> l;
        for (const auto j : keep) {
          c.push_back(it.cands[j]);
          l.push_back(it.labels[j]);
        }
        cands.push_back(std::move(c));
        labels.push_back(std::move(l));
      }

      model.params().zero_grad();
      Graph g;
      std::vector<Var> probs;
      const Var loss = model.build_loss(g, cands, labels, &probs);
      g.backward(loss);
      ad::adam_step(adam, model.params());
      total_loss += g.value(loss)[0];
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const Tensor& pv = g.value(probs[i]);
        std::size_t best = 0;
        for (std::size_t j = 1; j < pv.size(); ++j)
          if (pv[j] > pv[best]) best = j;
        hits += labels[i][best] ? 1 : 0;
      }
    }

    EpochStats s{epoch, total_loss / static_cast<double>(items.size()),
                 static_cast<double>(hits) / static_cast<double>(items.size())};
    log.push_back(s);
    if (opts.on_epoch && !opts.on_epoch(s)) break;
  }
  return log;
}

}  // namespace fixloc
