#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ulab/dataset.hpp"
#include "ulab/learner.hpp"

namespace ulab {

// Where each sample id trains: shard s, slice r (both 0-based internally;
// checkpoint files on disk use the 1-based slice-step convention).
struct SliceRef {
  int shard = 0;
  int slice = 0;
  bool operator==(const SliceRef&) const = default;
};

// SISA partition: S orthogonal shards, each cut into R slices. Members are
// kept in ascending-id order inside each slice so retraining visits a
// well-defined sequence regardless of how the plan was (re)built.
class PartitionPlan {
 public:
  PartitionPlan() = default;
  PartitionPlan(int shards, int slices, uint64_t seed);

  int shard_count() const { return shards_; }
  int slice_count() const { return slices_; }
  uint64_t seed() const { return seed_; }
  size_t size() const { return index_.size(); }

  std::span<const uint64_t> members(int shard, int slice) const {
    return members_[static_cast<size_t>(shard)][static_cast<size_t>(slice)];
  }
  bool contains(uint64_t id) const { return index_.count(id) != 0; }
  SliceRef locate(uint64_t id) const;  // LookupError if unknown

  // Insertion sorts into the slice's ascending-id order.
  void assign(uint64_t id, SliceRef where);

  // Plan minus the given ids; assignments of the rest are untouched.
  PartitionPlan without(std::span<const uint64_t> ids) const;

  // All ids ascending (for serialization and audits).
  std::vector<uint64_t> all_ids() const;

 private:
  int shards_ = 0;
  int slices_ = 0;
  uint64_t seed_ = 0;
  std::vector<std::vector<std::vector<uint64_t>>> members_;
  std::unordered_map<uint64_t, SliceRef> index_;
};

// Seeded shuffle of the dataset's ids, contiguous split into S shards and
// each shard into R slices, all sizes within +-1 of N/S and N/(S*R).
PartitionPlan partition(const Dataset& ds, int shards, int slices,
                        uint64_t seed);

// Incremental training state of one shard: checkpoint r holds the
// parameters recorded before introducing slice r (checkpoint 0 = the
// initialization), final_params the state after the last slice step.
struct ShardState {
  std::vector<ModelParams> checkpoints;
  ModelParams final_params;
  uint64_t init_seed = 0;
  std::vector<uint64_t> slice_seeds;  // stream seed per slice step
};

struct UnlearningRequest {
  uint64_t sample_id = 0;
  std::string requester_tag;
};

struct EnsembleModel {
  PartitionPlan plan;
  std::vector<ShardState> shards;
  ClassifierSpec spec;
  TrainConfig train_config;
  std::vector<uint64_t> removed_ids;  // ascending
};

// Trains one shard through its slice steps. The epoch budget splits as
// evenly as possible across the R steps, remainder to the earliest ones,
// and the lr schedule runs on the global epoch index. Slice steps whose
// cumulative membership is empty are recorded but skipped.
ShardState train_shard(const Dataset& ds, const PartitionPlan& plan, int shard,
                       const ClassifierSpec& spec, const TrainConfig& config,
                       uint64_t shard_seed);

// S independent train_shard runs, shard s seeded from
// derive_seed(config.seed, s). With parallel=true shards train on separate
// threads; results are bit-identical either way.
EnsembleModel train_ensemble(const Dataset& ds, const PartitionPlan& plan,
                             const ClassifierSpec& spec,
                             const TrainConfig& config, bool parallel = false);

SliceRef locate(const PartitionPlan& plan, uint64_t id);

// Exact unlearning: per affected shard, restore the checkpoint of the
// earliest affected slice and retrain the remaining steps on the reduced
// memberships with freshly re-derived seed streams. Untouched shards are
// copied verbatim. Result is bit-identical to train_ensemble on the
// reduced dataset with the reduced plan.
EnsembleModel unlearn(const EnsembleModel& ensemble,
                      std::span<const uint64_t> request_ids,
                      const Dataset& ds);
EnsembleModel unlearn(const EnsembleModel& ensemble,
                      std::span<const UnlearningRequest> requests,
                      const Dataset& ds);

// Majority vote over the sub-models' argmax labels; ties break to the
// lowest class index among the tied labels.
int aggregate_predict(const EnsembleModel& ensemble,
                      std::span<const float> features);

// P_s(x) for every shard, in shard order.
std::vector<std::vector<float>> sub_model_probas(const EnsembleModel& ensemble,
                                                 std::span<const float> features);

// Directory layout: plan.tsv, config.toml (echo), manifest.toml (seeds,
// spec, hashes), shard-<s>/ckpt-<r>.params (r = 1..R) and final.params.
void save_ensemble(const EnsembleModel& ensemble,
                   const std::filesystem::path& dir,
                   std::string_view config_echo = {});
EnsembleModel load_ensemble(const std::filesystem::path& dir);

}  // namespace ulab
