#pragma once

// The BEEP fix-localization network: operation-path embedding, path encoder,
// fusion layer, LSTM encoder-decoder and pointer attention over candidates.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fixloc/autodiff.hpp"
#include "fixloc/diff.hpp"

namespace fixloc {

struct HyperParams {
  int d_t = 128;
  int d_p = 128;
  int d_o = 128;
  int d_hidden = 128;
  int max_l = 15;
  int max_k = 150;
  double lr = 0.001;
  int epochs = 40;
  int batch_size = 128;
  bool no_token_split = false;
  bool whole_path_embedding = false;
  bool no_fc_layer = false;

  /// Throws FormatError naming the first non-positive field.
  void validate() const;
  /// Width of [V_t; V_p; V_o].
  int concat_width() const { return d_t + 2 * d_p + d_o; }
  /// Width of the encoder input and of every recurrent state downstream.
  int encoder_input_width() const { return no_fc_layer ? concat_width() : d_hidden; }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

nlohmann::json to_json(const HyperParams& hp);
HyperParams hyper_params_from_json(const nlohmann::json& j);

/// Sub-token (or whole-token) vocabulary with UNK at index 0, plus the
/// path-sequence table used by the whole_path_embedding ablation.
class Vocab {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  Vocab();
  static Vocab build(std::span<const PatchRecord> records, bool whole_tokens);

  bool whole_tokens() const noexcept { return whole_tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t path_count() const noexcept { return paths_.size(); }
  std::span<const std::string> tokens() const noexcept { return tokens_; }

  int index(std::string_view unit) const;
  /// Vocabulary rows whose sum is the token embedding (one row per sub-token).
  std::vector<int> token_rows(std::string_view token) const;
  int path_row(std::span<const NodeKind> kinds) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  bool whole_tokens_ = false;
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
  std::vector<std::string> paths_;
  std::map<std::string, int, std::less<>> path_index_;
};

struct RankedEntry {
  OperationPath path;
  double probability = 0.0;
  double score = 0.0;
};

struct RankedPrediction {
  std::vector<RankedEntry> entries;  // probability descending
};

/// Leaves considered by predict_ranked: the whole method or one source line.
struct Scope {
  std::optional<int> line;
};

struct EmbeddedPath {
  std::vector<double> v_t;
  std::vector<double> v_p;
  std::vector<double> v_o;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_recall1 = 0.0;
};

class BeepModel {
 public:
  /// Seeded Xavier-style initialization.
  BeepModel(HyperParams hp, Vocab vocab, std::uint64_t seed);

  const HyperParams& hyper_params() const noexcept { return hp_; }
  const Vocab& vocab() const noexcept { return vocab_; }
  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }

  EmbeddedPath embed(const OperationPath& op) const;

  /// Scores `paths` in the given order; throws TooManyPaths above max_k.
  RankedPrediction forward(std::span<const OperationPath> paths) const;

  /// Candidates are all operation paths of in-scope leaves; larger sets are
  /// scored in max_k windows and normalized with one softmax.
  RankedPrediction predict_ranked(std::string_view method_src, const Scope& scope = {}) const;
  RankedPrediction predict_candidates(std::vector<OperationPath> candidates) const;

  /// Graph for the summed loss of several labelled candidate sets; used by
  /// training and by the gradient check.
  ad::Var build_loss(ad::Graph& g, std::span<const std::vector<OperationPath>> candidates,
                     std::span<const std::vector<int>> labels,
                     std::vector<ad::Var>* probs_out = nullptr,
                     std::vector<ad::Var>* scores_out = nullptr);

  void save(std::ostream& out, const nlohmann::json& extra = {}) const;
  static BeepModel load(std::istream& in);

 private:
  struct Prepared;
  BeepModel() = default;
  void init(std::uint64_t seed);
  ad::Var raw_scores(ad::Graph& g, Prepared& prep, std::size_t method) const;
  ad::Var pointer_scores(ad::Graph& g, ad::Var z) const;
  ad::Parameter& p(std::string_view name) const;

  HyperParams hp_;
  Vocab vocab_;
  mutable ad::ParameterSet params_;
};

/// Mean binary cross-entropy on plain numbers, with P clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> probs, std::span<const int> labels);

struct TrainOptions {
  std::uint64_t seed = 0;
  /// Called after every epoch; return false to stop early.
  std::function<bool(const EpochStats&)> on_epoch;
};

/// Mini-batch Adam training; returns the per-epoch log.
std::vector<EpochStats> train(BeepModel& model, std::span<const PatchRecord> dataset, const TrainOptions& opts);

/// Candidate ordering used inside the network: (leaf_index, operator).
void sort_canonical(std::vector<OperationPath>& paths);

}  // namespace fixloc
