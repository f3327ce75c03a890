#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulab/dataset.hpp"
#include "ulab/rng.hpp"

namespace ulab {

// Input-Targeted attack: poison and mitigation samples are drawn from a
// uniform L-inf ball around one clean seed image. Poison carries the target
// label, mitigation the seed's true label.
struct ITAttackSpec {
  uint64_t seed_sample_id = 0;
  int target_label = 0;
  double sigma = 0.15;  // L-inf radius in [0,1] pixel units
  int n_poison = 5;
  int n_mitigation = 15;
  bool reuse_poison_as_mitigation = false;

  void validate(const Dataset& ds) const;
};

// Trigger mask/pattern pair. The mask spans (h, w) and applies to every
// channel; the pattern holds per-pixel trigger values in [0,1].
struct Trigger {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> mask;    // h*w, nonzero = trigger pixel
  std::vector<float> pattern;   // h*w

  bool any() const;
};

// BadNets-style attack: a fixed patch stamped onto random clean images.
// Mitigation uses a stronger alpha and keeps the true labels.
struct BNAttackSpec {
  Trigger trigger;
  double alpha_poison = 0.5;
  double alpha_mitigation = 1.0;  // must be >= alpha_poison
  double test_alpha = 1.0;
  int target_label = 0;
  int n_poison = 50;
  int n_mitigation = 150;
  // The equation form replaces masked pixels with alpha * pattern. The
  // blend form keeps (1 - alpha) of the original pixel instead; offered for
  // sensitivity runs.
  bool blend = false;

  void validate() const;
};

// n vectors Clip(x + noise), noise per-dimension uniform in [-sigma, sigma].
// Outputs are deduplicated (bitwise) against the seed and one another;
// resampling is bounded, so sigma = 0 fails with GenerationError.
std::vector<std::vector<float>> sample_it_neighbors(
    std::span<const float> seed_features, double sigma, int n, Rng& rng);

struct AttackSets {
  Dataset poison;
  Dataset mitigation;
};

// Builds the IT poison/mitigation fragments. New ids continue after
// ds.next_id(): poison first, then mitigation.
AttackSets make_it_sets(const Dataset& ds, const ITAttackSpec& spec, Rng& rng);

// Stamps the trigger: masked pixels become alpha * pattern (or the blend),
// all channels, clipped to [0,1]; pixels outside the mask are untouched.
std::vector<float> apply_trigger(std::span<const float> features,
                                 FeatureShape shape, const Trigger& trigger,
                                 double alpha, bool blend = false);

// Builds the BN poison/mitigation fragments from disjoint random clean
// samples. Ids continue after ds.next_id(): poison first, then mitigation.
AttackSets make_bn_sets(const Dataset& ds, const BNAttackSpec& spec, Rng& rng);

// Every test sample whose label differs from the target, stamped at
// test_alpha. ASR is the fraction predicted as the target label.
Dataset make_bn_testset(const Dataset& test_ds, const BNAttackSpec& spec);

// The seed plus n_neighbors fresh draws, deduplicated against the poison
// and mitigation features (and each other). Labels carry the seed's ground
// truth; ids start at 0 in the returned set.
Dataset make_it_testset(const Dataset& train_ds, const ITAttackSpec& spec,
                        const AttackSets& train_sets, int n_neighbors,
                        Rng& rng);

// 4x4 all-ones square in the bottom-right corner (~2% of a 28x28 image).
Trigger default_trigger(FeatureShape shape);

}  // namespace ulab
