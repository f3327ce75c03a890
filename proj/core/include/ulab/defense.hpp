#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulab/dataset.hpp"
#include "ulab/sisa.hpp"

namespace ulab {

enum class DefenseMethod : uint8_t { model_uncertainty = 0, sub_model_similarity = 1 };

const char* to_string(DefenseMethod m);
DefenseMethod defense_method_from_string(std::string_view s);

struct DefenseScore {
  uint64_t sample_id = 0;
  DefenseMethod method = DefenseMethod::model_uncertainty;
  double score = 0.0;  // higher = more suspicious
};

enum class OnReject : uint8_t { deny = 0, flag_for_retraining_check = 1 };
enum class Decision : uint8_t { accept = 0, reject = 1 };

const char* to_string(Decision d);

struct GatekeeperConfig {
  DefenseMethod method = DefenseMethod::model_uncertainty;
  double threshold = 0.0;
  OnReject on_reject = OnReject::deny;
};

// 1 - sum_c p_c^2, in [0, 1 - 1/C]. Throws unless the entries are
// non-negative and sum to 1 within 1e-6.
double gini_impurity(std::span<const float> probs);

// Population (or sample) standard deviation.
double std_dev(std::span<const double> values, bool sample = false);

// Gini impurity of the sample's home sub-model output (the single model
// when S = 1). The sample must be in the plan.
DefenseScore uncertainty_score(const EnsembleModel& ensemble, const Dataset& ds,
                               uint64_t sample_id);

// Standard deviation across the S sub-models of the probability assigned
// to the sample's ground-truth class. Needs S >= 2.
DefenseScore similarity_score(const EnsembleModel& ensemble, const Dataset& ds,
                              uint64_t sample_id, bool sample_std = false);

// Accept iff score <= threshold.
Decision gatekeep(const DefenseScore& score, const GatekeeperConfig& config);

// Mann-Whitney AUROC: P(pos > neg) + 0.5 * P(pos = neg) over all pairs,
// computed through midranks.
double auroc(std::span<const double> positives, std::span<const double> negatives);

struct DefenseEval {
  double auroc_value = 0.0;
  std::vector<DefenseScore> mitigation_scores;  // positives
  std::vector<DefenseScore> clean_scores;       // negatives
};

// Evaluation protocol: every mitigation sample still in the plan is a
// positive; an equal number of clean negatives is drawn seeded. For
// model_uncertainty with S > 1, negatives come from each sub-training set
// in turn and score on their own sub-model.
DefenseEval evaluate_defense(const EnsembleModel& ensemble, const Dataset& ds,
                             DefenseMethod method, uint64_t draw_seed,
                             bool sample_std = false);

}  // namespace ulab
