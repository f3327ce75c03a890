#include "ulab/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ulab/rng.hpp"

namespace ulab {

const char* to_string(DefenseMethod m) {
  return m == DefenseMethod::model_uncertainty ? "model_uncertainty"
                                               : "sub_model_similarity";
}

DefenseMethod defense_method_from_string(std::string_view s) {
  if (s == "model_uncertainty") return DefenseMethod::model_uncertainty;
  if (s == "sub_model_similarity") return DefenseMethod::sub_model_similarity;
  throw ArgumentError("unknown defense method: " + std::string(s));
}

const char* to_string(Decision d) {
  return d == Decision::accept ? "accept" : "reject";
}

double gini_impurity(std::span<const float> probs) {
  if (probs.empty()) {
    throw ArgumentError("gini_impurity: empty probability vector");
  }
  double sum = 0.0;
  double sq = 0.0;
  for (float p : probs) {
    if (!(p >= 0.0f)) {
      throw ArgumentError("gini_impurity: negative probability");
    }
    sum += p;
    sq += static_cast<double>(p) * p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ArgumentError("gini_impurity: probabilities do not sum to 1");
  }
  return 1.0 - sq;
}

double std_dev(std::span<const double> values, bool sample) {
  const size_t n = values.size();
  if (n == 0 || (sample && n < 2)) {
    throw ArgumentError("std_dev: not enough values");
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(n);
  double acc = 0.0;
  for (double v : values) {
    acc += (v - mean) * (v - mean);
  }
  return std::sqrt(acc / static_cast<double>(sample ? n - 1 : n));
}

DefenseScore uncertainty_score(const EnsembleModel& ensemble, const Dataset& ds,
                               uint64_t sample_id) {
  const SliceRef home = ensemble.plan.locate(sample_id);
  const size_t row = ds.row_of(sample_id);
  const auto probs =
      forward_proba(ensemble.spec,
                    ensemble.shards[static_cast<size_t>(home.shard)].final_params,
                    ds.features(row));
  return {sample_id, DefenseMethod::model_uncertainty, gini_impurity(probs)};
}

DefenseScore similarity_score(const EnsembleModel& ensemble, const Dataset& ds,
                              uint64_t sample_id, bool sample_std) {
  if (ensemble.plan.shard_count() < 2) {
    throw MethodUnavailableError(
        "sub_model_similarity needs at least 2 shards");
  }
  const size_t row = ds.row_of(sample_id);
  const int truth = ds.label(row);
  std::vector<double> class_probs;
  class_probs.reserve(ensemble.shards.size());
  for (const auto& probs : sub_model_probas(ensemble, ds.features(row))) {
    class_probs.push_back(probs[static_cast<size_t>(truth)]);
  }
  return {sample_id, DefenseMethod::sub_model_similarity,
          std_dev(class_probs, sample_std)};
}

Decision gatekeep(const DefenseScore& score, const GatekeeperConfig& config) {
  if (score.method != config.method) {
    throw ArgumentError("score/config method mismatch");
  }
  return score.score <= config.threshold ? Decision::accept : Decision::reject;
}

double auroc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw ArgumentError("auroc: both score sets must be non-empty");
  }
  struct Tagged {
    double score;
    bool positive;
  };
  std::vector<Tagged> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

  // midrank sum of the positives
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * nn);
}

DefenseEval evaluate_defense(const EnsembleModel& ensemble, const Dataset& ds,
                             DefenseMethod method, uint64_t draw_seed,
                             bool sample_std) {
  // positives: mitigation samples still in the plan
  std::vector<uint64_t> positives;
  for (uint64_t id : ds.ids_with(Provenance::mitigation)) {
    if (ensemble.plan.contains(id)) positives.push_back(id);
  }
  if (positives.empty()) {
    throw ArgumentError("evaluate_defense: no mitigation samples left in the plan");
  }

  // clean ids grouped by home shard, each group in plan order
  const int S = ensemble.plan.shard_count();
  std::vector<std::vector<uint64_t>> clean_by_shard(static_cast<size_t>(S));
  for (int s = 0; s < S; ++s) {
    for (int r = 0; r < ensemble.plan.slice_count(); ++r) {
      for (uint64_t id : ensemble.plan.members(s, r)) {
        if (ds.provenance(ds.row_of(id)) == Provenance::clean) {
          clean_by_shard[static_cast<size_t>(s)].push_back(id);
        }
      }
    }
  }

  Rng rng(derive_seed(draw_seed, 0xDEF));
  for (auto& group : clean_by_shard) {
    rng.shuffle(group);
  }

  // equal number of negatives, drawn round-robin across shards so every
  // sub-training set contributes
  std::vector<uint64_t> negatives;
  std::vector<size_t> cursor(static_cast<size_t>(S), 0);
  int spins_without_progress = 0;
  int shard_cursor = 0;
  while (negatives.size() < positives.size() && spins_without_progress < S) {
    auto& group = clean_by_shard[static_cast<size_t>(shard_cursor)];
    auto& cur = cursor[static_cast<size_t>(shard_cursor)];
    if (cur < group.size()) {
      negatives.push_back(group[cur++]);
      spins_without_progress = 0;
    } else {
      ++spins_without_progress;
    }
    shard_cursor = (shard_cursor + 1) % S;
  }
  if (negatives.size() < positives.size()) {
    throw ArgumentError("evaluate_defense: not enough clean samples to draw");
  }

  auto score_one = [&](uint64_t id) {
    return method == DefenseMethod::model_uncertainty
               ? uncertainty_score(ensemble, ds, id)
               : similarity_score(ensemble, ds, id, sample_std);
  };

  DefenseEval eval;
  std::vector<double> pos_vals;
  std::vector<double> neg_vals;
  for (uint64_t id : positives) {
    eval.mitigation_scores.push_back(score_one(id));
    pos_vals.push_back(eval.mitigation_scores.back().score);
  }
  for (uint64_t id : negatives) {
    eval.clean_scores.push_back(score_one(id));
    neg_vals.push_back(eval.clean_scores.back().score);
  }
  eval.auroc_value = auroc(pos_vals, neg_vals);
  return eval;
}

}  // namespace ulab
