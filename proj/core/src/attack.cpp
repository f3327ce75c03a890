#include "ulab/attack.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>

namespace ulab {

namespace {

constexpr int kMaxResampleTries = 1000;

// Bitwise feature-vector ordering for exact dedup.
struct BitLess {
  bool operator()(const std::vector<float>& a, const std::vector<float>& b) const {
    const int c = std::memcmp(a.data(), b.data(),
                              std::min(a.size(), b.size()) * sizeof(float));
    if (c != 0) return c < 0;
    return a.size() < b.size();
  }
};

using FeatureSet = std::set<std::vector<float>, BitLess>;

std::vector<float> draw_neighbor(std::span<const float> seed, double sigma,
                                 Rng& rng) {
  std::vector<float> out(seed.size());
  for (size_t i = 0; i < seed.size(); ++i) {
    const double noisy = seed[i] + rng.uniform(-sigma, sigma);
    out[i] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
  }
  return out;
}

// Draws until the candidate is absent from `taken`, within the try budget.
std::vector<float> draw_distinct(std::span<const float> seed, double sigma,
                                 Rng& rng, FeatureSet& taken) {
  for (int tries = 0; tries < kMaxResampleTries; ++tries) {
    auto cand = draw_neighbor(seed, sigma, rng);
    if (taken.insert(cand).second) {
      return cand;
    }
  }
  throw GenerationError(
      "neighbor sampling exhausted after " + std::to_string(kMaxResampleTries) +
      " tries (sigma too small?)");
}

}  // namespace

void ITAttackSpec::validate(const Dataset& ds) const {
  if (!(sigma >= 0.0 && sigma <= 1.0)) {
    throw ArgumentError("sigma must be in [0, 1]");
  }
  if (n_poison < 1 || n_mitigation < 0) {
    throw ArgumentError("n_poison must be >= 1, n_mitigation >= 0");
  }
  if (target_label < 0 || target_label >= ds.class_count()) {
    throw ArgumentError("target label out of range");
  }
  const size_t row = ds.row_of(seed_sample_id);
  if (ds.label(row) == target_label) {
    throw ArgumentError("target label must differ from the seed's label");
  }
}

bool Trigger::any() const {
  return std::any_of(mask.begin(), mask.end(), [](uint8_t m) { return m != 0; });
}

void BNAttackSpec::validate() const {
  if (!(alpha_poison > 0.0 && alpha_poison <= 1.0)) {
    throw ArgumentError("alpha_poison must be in (0, 1]");
  }
  if (!(alpha_mitigation > 0.0 && alpha_mitigation <= 1.0)) {
    throw ArgumentError("alpha_mitigation must be in (0, 1]");
  }
  if (alpha_mitigation < alpha_poison) {
    throw ArgumentError("alpha_mitigation must be >= alpha_poison");
  }
  if (!(test_alpha > 0.0 && test_alpha <= 1.0)) {
    throw ArgumentError("test_alpha must be in (0, 1]");
  }
  if (n_poison < 1 || n_mitigation < 0) {
    throw ArgumentError("n_poison must be >= 1, n_mitigation >= 0");
  }
  if (!trigger.any()) {
    throw ArgumentError("trigger mask has no set cells");
  }
}

std::vector<std::vector<float>> sample_it_neighbors(
    std::span<const float> seed_features, double sigma, int n, Rng& rng) {
  if (n < 1) {
    throw ArgumentError("sample_it_neighbors: n must be >= 1");
  }
  FeatureSet taken;
  taken.emplace(seed_features.begin(), seed_features.end());
  std::vector<std::vector<float>> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(draw_distinct(seed_features, sigma, rng, taken));
  }
  return out;
}

AttackSets make_it_sets(const Dataset& ds, const ITAttackSpec& spec, Rng& rng) {
  spec.validate(ds);
  const size_t seed_row = ds.row_of(spec.seed_sample_id);
  const auto seed_feat = ds.features(seed_row);
  const int seed_label = ds.label(seed_row);

  auto poison_feats = sample_it_neighbors(seed_feat, spec.sigma, spec.n_poison, rng);

  std::vector<std::vector<float>> mitigation_feats;
  if (spec.reuse_poison_as_mitigation) {
    const int reuse = std::min(spec.n_mitigation, spec.n_poison);
    mitigation_feats.assign(poison_feats.begin(), poison_feats.begin() + reuse);
    if (spec.n_mitigation > reuse) {
      // top up with fresh draws distinct from everything so far
      FeatureSet taken;
      taken.emplace(seed_feat.begin(), seed_feat.end());
      for (const auto& f : poison_feats) taken.insert(f);
      for (int i = reuse; i < spec.n_mitigation; ++i) {
        mitigation_feats.push_back(draw_distinct(seed_feat, spec.sigma, rng, taken));
      }
    }
  } else if (spec.n_mitigation > 0) {
    mitigation_feats =
        sample_it_neighbors(seed_feat, spec.sigma, spec.n_mitigation, rng);
  }

  uint64_t next = ds.next_id();
  AttackSets sets{Dataset(ds.shape(), ds.class_count()),
                  Dataset(ds.shape(), ds.class_count())};
  for (auto& f : poison_feats) {
    sets.poison.append({next++, std::move(f), spec.target_label, Provenance::poison});
  }
  for (auto& f : mitigation_feats) {
    sets.mitigation.append({next++, std::move(f), seed_label, Provenance::mitigation});
  }
  return sets;
}

std::vector<float> apply_trigger(std::span<const float> features,
                                 FeatureShape shape, const Trigger& trigger,
                                 double alpha, bool blend) {
  if (static_cast<int>(features.size()) != shape.flat()) {
    throw ArgumentError("apply_trigger: feature length does not match shape");
  }
  if (trigger.h != shape.h || trigger.w != shape.w) {
    throw ArgumentError("apply_trigger: trigger size does not match shape");
  }
  std::vector<float> out(features.begin(), features.end());
  for (int y = 0; y < shape.h; ++y) {
    for (int x = 0; x < shape.w; ++x) {
      const size_t cell = static_cast<size_t>(y) * shape.w + x;
      if (!trigger.mask[cell]) continue;
      const double t = alpha * trigger.pattern[cell];
      for (int ch = 0; ch < shape.c; ++ch) {
        const size_t idx = cell * static_cast<size_t>(shape.c) + ch;
        const double v = blend ? (1.0 - alpha) * features[idx] + t : t;
        out[idx] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

AttackSets make_bn_sets(const Dataset& ds, const BNAttackSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<uint32_t> clean_rows;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (ds.provenance(i) == Provenance::clean) {
      clean_rows.push_back(static_cast<uint32_t>(i));
    }
  }
  const size_t need = static_cast<size_t>(spec.n_poison) + spec.n_mitigation;
  if (clean_rows.size() < need) {
    throw ArgumentError("not enough clean samples: need " + std::to_string(need) +
                        ", have " + std::to_string(clean_rows.size()));
  }
  rng.shuffle(clean_rows);

  uint64_t next = ds.next_id();
  AttackSets sets{Dataset(ds.shape(), ds.class_count()),
                  Dataset(ds.shape(), ds.class_count())};
  for (int i = 0; i < spec.n_poison; ++i) {
    const uint32_t row = clean_rows[static_cast<size_t>(i)];
    auto feat = apply_trigger(ds.features(row), ds.shape(), spec.trigger,
                              spec.alpha_poison, spec.blend);
    sets.poison.append({next++, std::move(feat), spec.target_label, Provenance::poison});
  }
  for (int i = 0; i < spec.n_mitigation; ++i) {
    const uint32_t row = clean_rows[static_cast<size_t>(spec.n_poison) + i];
    auto feat = apply_trigger(ds.features(row), ds.shape(), spec.trigger,
                              spec.alpha_mitigation, spec.blend);
    sets.mitigation.append({next++, std::move(feat), ds.label(row), Provenance::mitigation});
  }
  return sets;
}

Dataset make_bn_testset(const Dataset& test_ds, const BNAttackSpec& spec) {
  spec.validate();
  if (test_ds.empty()) {
    throw ArgumentError("make_bn_testset: empty test dataset");
  }
  Dataset out(test_ds.shape(), test_ds.class_count());
  uint64_t next = 0;
  for (size_t i = 0; i < test_ds.size(); ++i) {
    if (test_ds.label(i) == spec.target_label) continue;
    auto feat = apply_trigger(test_ds.features(i), test_ds.shape(), spec.trigger,
                              spec.test_alpha, spec.blend);
    out.append({next++, std::move(feat), test_ds.label(i), Provenance::poison});
  }
  if (out.empty()) {
    throw ArgumentError("make_bn_testset: every test label equals the target");
  }
  return out;
}

Dataset make_it_testset(const Dataset& train_ds, const ITAttackSpec& spec,
                        const AttackSets& train_sets, int n_neighbors,
                        Rng& rng) {
  spec.validate(train_ds);
  if (n_neighbors < 0) {
    throw ArgumentError("make_it_testset: n_neighbors must be >= 0");
  }
  const size_t seed_row = train_ds.row_of(spec.seed_sample_id);
  const auto seed_feat = train_ds.features(seed_row);
  const int seed_label = train_ds.label(seed_row);

  // orthogonal to X^p and X^m: dedup against both training fragments
  FeatureSet taken;
  taken.emplace(seed_feat.begin(), seed_feat.end());
  for (size_t i = 0; i < train_sets.poison.size(); ++i) {
    auto f = train_sets.poison.features(i);
    taken.emplace(f.begin(), f.end());
  }
  for (size_t i = 0; i < train_sets.mitigation.size(); ++i) {
    auto f = train_sets.mitigation.features(i);
    taken.emplace(f.begin(), f.end());
  }

  Dataset out(train_ds.shape(), train_ds.class_count());
  uint64_t next = 0;
  out.append({next++, {seed_feat.begin(), seed_feat.end()}, seed_label,
              Provenance::poison});
  for (int i = 0; i < n_neighbors; ++i) {
    out.append({next++, draw_distinct(seed_feat, spec.sigma, rng, taken),
                seed_label, Provenance::poison});
  }
  return out;
}

Trigger default_trigger(FeatureShape shape) {
  constexpr int kSide = 4;
  if (shape.h < kSide || shape.w < kSide) {
    throw ArgumentError("image smaller than the 4x4 trigger");
  }
  Trigger t;
  t.h = shape.h;
  t.w = shape.w;
  t.mask.assign(static_cast<size_t>(shape.h) * shape.w, 0);
  t.pattern.assign(static_cast<size_t>(shape.h) * shape.w, 1.0f);
  for (int y = shape.h - kSide; y < shape.h; ++y) {
    for (int x = shape.w - kSide; x < shape.w; ++x) {
      t.mask[static_cast<size_t>(y) * shape.w + x] = 1;
    }
  }
  return t;
}

}  // namespace ulab
