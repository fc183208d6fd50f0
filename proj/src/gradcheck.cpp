#include "fixloc/gradcheck.hpp"

#include <algorithm>

#include "fixloc/mutation.hpp"
#include "fixloc/rng.hpp"

namespace fixloc {

ModelGradCheck check_model_gradients(const HyperParams& hp, std::uint64_t seed, std::size_t max_k) {
  const auto methods = synthesize_methods(2, derive_seed(seed, "gradcheck-methods"));
  std::vector<PatchRecord> records;
  for (std::size_t i = 0; i < methods.size(); ++i)
    records.push_back(mutate(methods[i], std::nullopt, derive_seed(seed, "gradcheck-mutant-" + std::to_string(i))).record);

  Rng rng(derive_seed(seed, "gradcheck-negatives"));
  std::vector<std::vector<OperationPath>> sets;
  std::vector<std::vector<int>> labels;
  for (const auto& r : records) {
    auto all = enumerate_operation_paths(parse(r.buggy_src));
    std::vector<OperationPath> pick(r.oracle.begin(), r.oracle.end());
    shuffle(all, rng);
    for (const auto& p : all) {
      if (pick.size() >= max_k) break;
      if (std::find(pick.begin(), pick.end(), p) == pick.end()) pick.push_back(p);
    }
    sort_canonical(pick);
    sets.push_back(pick);
    labels.push_back(label_paths(pick, r.oracle));
  }

  BeepModel model(hp, Vocab::build(records, hp.no_token_split), derive_seed(seed, "gradcheck-init"));
  ModelGradCheck out;
  out.report = ad::gradient_check(model.params(), [&](ad::Graph& g) { return model.build_loss(g, sets, labels); });
  out.candidate_sets = sets.size();
  for (const auto& s : sets) out.max_candidates = std::max(out.max_candidates, s.size());
  return out;
}

}  // namespace fixloc
