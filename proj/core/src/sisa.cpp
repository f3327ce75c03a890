#include "ulab/sisa.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>

#include "ulab/hash.hpp"
#include "ulab/rng.hpp"
#include "ulab/toml.hpp"

namespace ulab {

namespace {

// Epoch budget for slice step r (0-based): E/R each, remainder to the
// earliest steps. first_epoch is the global index the step starts at.
struct EpochSplit {
  int count = 0;
  int first_epoch = 0;
};

EpochSplit epoch_split(int total_epochs, int slice_count, int step) {
  const int base = total_epochs / slice_count;
  const int rem = total_epochs % slice_count;
  EpochSplit s;
  s.count = base + (step < rem ? 1 : 0);
  s.first_epoch = step * base + std::min(step, rem);
  return s;
}

void append_rows(const Dataset& ds, std::span<const uint64_t> ids,
                 std::vector<uint32_t>& rows) {
  for (uint64_t id : ids) {
    rows.push_back(static_cast<uint32_t>(ds.row_of(id)));
  }
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + p.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + p.string());
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw IoError("write failed: " + p.string());
  }
}

std::string file_hash(const std::filesystem::path& p) {
  Fnv64 h;
  h.update(read_text_file(p));
  return h.hex();
}

// Retrains shard `shard` from slice step `from_step` onward, starting at
// `params` (the checkpoint recorded before that step). Shared by initial
// training (from_step = 0) and unlearning.
void run_slice_steps(const Dataset& ds, const PartitionPlan& plan, int shard,
                     const ClassifierSpec& spec, const TrainConfig& config,
                     uint64_t shard_seed, int from_step, ModelParams params,
                     ShardState& state) {
  const int R = plan.slice_count();
  std::vector<uint32_t> rows;
  for (int r = 0; r < from_step; ++r) {
    append_rows(ds, plan.members(shard, r), rows);
  }
  for (int r = from_step; r < R; ++r) {
    if (static_cast<int>(state.checkpoints.size()) == r) {
      state.checkpoints.push_back(params);
    }
    append_rows(ds, plan.members(shard, r), rows);
    const uint64_t step_seed = derive_seed(shard_seed, static_cast<uint64_t>(r) + 1);
    if (static_cast<int>(state.slice_seeds.size()) == r) {
      state.slice_seeds.push_back(step_seed);
    }
    const EpochSplit ep = epoch_split(config.epochs, R, r);
    sgd_epochs(spec, params, ds, rows, config, step_seed, ep.first_epoch, ep.count);
  }
  state.final_params = std::move(params);
}

}  // namespace

PartitionPlan::PartitionPlan(int shards, int slices, uint64_t seed)
    : shards_(shards), slices_(slices), seed_(seed) {
  if (shards < 1 || slices < 1) {
    throw ArgumentError("shard and slice counts must be >= 1");
  }
  members_.assign(static_cast<size_t>(shards),
                  std::vector<std::vector<uint64_t>>(static_cast<size_t>(slices)));
}

SliceRef PartitionPlan::locate(uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw LookupError("id " + std::to_string(id) + " not in partition plan");
  }
  return it->second;
}

void PartitionPlan::assign(uint64_t id, SliceRef where) {
  if (where.shard < 0 || where.shard >= shards_ || where.slice < 0 ||
      where.slice >= slices_) {
    throw ArgumentError("slice reference out of range");
  }
  if (index_.count(id)) {
    throw ArgumentError("id " + std::to_string(id) + " already assigned");
  }
  auto& v = members_[static_cast<size_t>(where.shard)][static_cast<size_t>(where.slice)];
  v.insert(std::upper_bound(v.begin(), v.end(), id), id);
  index_.emplace(id, where);
}

PartitionPlan PartitionPlan::without(std::span<const uint64_t> ids) const {
  std::set<uint64_t> drop(ids.begin(), ids.end());
  for (uint64_t id : drop) {
    locate(id);  // LookupError if unknown
  }
  PartitionPlan out(shards_, slices_, seed_);
  for (int s = 0; s < shards_; ++s) {
    for (int r = 0; r < slices_; ++r) {
      for (uint64_t id : members(s, r)) {
        if (!drop.count(id)) {
          out.assign(id, {s, r});
        }
      }
    }
  }
  return out;
}

std::vector<uint64_t> PartitionPlan::all_ids() const {
  std::vector<uint64_t> ids;
  ids.reserve(index_.size());
  for (const auto& [id, _] : index_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

PartitionPlan partition(const Dataset& ds, int shards, int slices,
                        uint64_t seed) {
  if (shards < 1 || slices < 1) {
    throw ArgumentError("shard and slice counts must be >= 1");
  }
  const size_t n = ds.size();
  if (static_cast<size_t>(shards) * static_cast<size_t>(slices) > n) {
    throw ArgumentError("S*R exceeds the dataset size");
  }

  std::vector<uint64_t> ids(n);
  for (size_t i = 0; i < n; ++i) ids[i] = ds.id(i);
  Rng rng(derive_seed(seed, 0));
  rng.shuffle(ids);

  PartitionPlan plan(shards, slices, seed);
  size_t pos = 0;
  for (int s = 0; s < shards; ++s) {
    // contiguous split, first (n % S) shards one larger
    const size_t shard_n = n / static_cast<size_t>(shards) +
                           (static_cast<size_t>(s) < n % static_cast<size_t>(shards) ? 1 : 0);
    size_t offset = 0;
    for (int r = 0; r < slices; ++r) {
      const size_t slice_n =
          shard_n / static_cast<size_t>(slices) +
          (static_cast<size_t>(r) < shard_n % static_cast<size_t>(slices) ? 1 : 0);
      for (size_t k = 0; k < slice_n; ++k) {
        plan.assign(ids[pos + offset + k], {s, r});
      }
      offset += slice_n;
    }
    pos += shard_n;
  }
  return plan;
}

ShardState train_shard(const Dataset& ds, const PartitionPlan& plan, int shard,
                       const ClassifierSpec& spec, const TrainConfig& config,
                       uint64_t shard_seed) {
  spec.validate();
  config.validate();
  if (shard < 0 || shard >= plan.shard_count()) {
    throw ArgumentError("shard index out of range");
  }
  ShardState state;
  state.init_seed = derive_seed(shard_seed, 0);
  Rng init_rng(state.init_seed);
  ModelParams params = init_params(spec, init_rng);
  run_slice_steps(ds, plan, shard, spec, config, shard_seed, 0,
                  std::move(params), state);
  return state;
}

EnsembleModel train_ensemble(const Dataset& ds, const PartitionPlan& plan,
                             const ClassifierSpec& spec,
                             const TrainConfig& config, bool parallel) {
  spec.validate();
  config.validate();
  for (uint64_t id : plan.all_ids()) {
    ds.row_of(id);  // plan, dataset must agree
  }
  if (plan.size() > ds.size()) {
    throw ConsistencyError("plan covers more ids than the dataset holds");
  }

  EnsembleModel em;
  em.plan = plan;
  em.spec = spec;
  em.train_config = config;
  em.shards.resize(static_cast<size_t>(plan.shard_count()));

  auto run_one = [&](int s) {
    return train_shard(ds, plan, s, spec, config,
                       derive_seed(config.seed, static_cast<uint64_t>(s)));
  };

  if (parallel && plan.shard_count() > 1) {
    std::vector<std::future<ShardState>> futs;
    futs.reserve(static_cast<size_t>(plan.shard_count()));
    for (int s = 0; s < plan.shard_count(); ++s) {
      futs.push_back(std::async(std::launch::async, run_one, s));
    }
    for (int s = 0; s < plan.shard_count(); ++s) {
      em.shards[static_cast<size_t>(s)] = futs[static_cast<size_t>(s)].get();
    }
  } else {
    for (int s = 0; s < plan.shard_count(); ++s) {
      em.shards[static_cast<size_t>(s)] = run_one(s);
    }
  }
  return em;
}

SliceRef locate(const PartitionPlan& plan, uint64_t id) {
  return plan.locate(id);
}

EnsembleModel unlearn(const EnsembleModel& ensemble,
                      std::span<const uint64_t> request_ids,
                      const Dataset& ds) {
  std::set<uint64_t> unique(request_ids.begin(), request_ids.end());
  for (uint64_t id : unique) {
    if (std::binary_search(ensemble.removed_ids.begin(),
                           ensemble.removed_ids.end(), id)) {
      throw DoubleUnlearnError("id " + std::to_string(id) +
                               " was already unlearned");
    }
    ensemble.plan.locate(id);  // LookupError if unknown
  }

  EnsembleModel out;
  out.spec = ensemble.spec;
  out.train_config = ensemble.train_config;
  std::vector<uint64_t> removal(unique.begin(), unique.end());
  out.plan = ensemble.plan.without(removal);
  out.removed_ids = ensemble.removed_ids;
  out.removed_ids.insert(out.removed_ids.end(), removal.begin(), removal.end());
  std::sort(out.removed_ids.begin(), out.removed_ids.end());

  // earliest affected slice step per shard
  std::vector<int> first_affected(static_cast<size_t>(ensemble.plan.shard_count()), -1);
  for (uint64_t id : removal) {
    const SliceRef ref = ensemble.plan.locate(id);
    int& fa = first_affected[static_cast<size_t>(ref.shard)];
    fa = (fa < 0) ? ref.slice : std::min(fa, ref.slice);
  }

  out.shards.resize(ensemble.shards.size());
  for (int s = 0; s < ensemble.plan.shard_count(); ++s) {
    const ShardState& old = ensemble.shards[static_cast<size_t>(s)];
    const int fa = first_affected[static_cast<size_t>(s)];
    if (fa < 0) {
      out.shards[static_cast<size_t>(s)] = old;  // untouched shard
      continue;
    }
    ShardState ns;
    ns.init_seed = old.init_seed;
    ns.checkpoints.assign(old.checkpoints.begin(),
                          old.checkpoints.begin() + fa + 1);
    ns.slice_seeds.assign(old.slice_seeds.begin(),
                          old.slice_seeds.begin() + fa);
    const uint64_t shard_seed =
        derive_seed(ensemble.train_config.seed, static_cast<uint64_t>(s));
    run_slice_steps(ds, out.plan, s, ensemble.spec, ensemble.train_config,
                    shard_seed, fa, old.checkpoints[static_cast<size_t>(fa)], ns);
    out.shards[static_cast<size_t>(s)] = std::move(ns);
  }
  return out;
}

EnsembleModel unlearn(const EnsembleModel& ensemble,
                      std::span<const UnlearningRequest> requests,
                      const Dataset& ds) {
  std::vector<uint64_t> ids;
  ids.reserve(requests.size());
  for (const auto& r : requests) ids.push_back(r.sample_id);
  return unlearn(ensemble, ids, ds);
}

int aggregate_predict(const EnsembleModel& ensemble,
                      std::span<const float> features) {
  std::vector<int> votes(static_cast<size_t>(ensemble.spec.output_width()), 0);
  for (const auto& shard : ensemble.shards) {
    ++votes[static_cast<size_t>(
        predict_label(ensemble.spec, shard.final_params, features))];
  }
  int winner = 0;
  for (size_t c = 1; c < votes.size(); ++c) {
    if (votes[c] > votes[static_cast<size_t>(winner)]) {
      winner = static_cast<int>(c);
    }
  }
  return winner;
}

std::vector<std::vector<float>> sub_model_probas(const EnsembleModel& ensemble,
                                                 std::span<const float> features) {
  std::vector<std::vector<float>> out;
  out.reserve(ensemble.shards.size());
  for (const auto& shard : ensemble.shards) {
    out.push_back(forward_proba(ensemble.spec, shard.final_params, features));
  }
  return out;
}

void save_ensemble(const EnsembleModel& ensemble,
                   const std::filesystem::path& dir,
                   std::string_view config_echo) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  // plan.tsv, ids ascending
  {
    std::string plan_text = "id\tshard\tslice\n";
    for (uint64_t id : ensemble.plan.all_ids()) {
      const SliceRef ref = ensemble.plan.locate(id);
      plan_text += std::to_string(id) + '\t' + std::to_string(ref.shard) + '\t' +
                   std::to_string(ref.slice) + '\n';
    }
    write_text_file(dir / "plan.tsv", plan_text);
  }

  if (!config_echo.empty()) {
    write_text_file(dir / "config.toml", config_echo);
  }

  toml::Table mf;
  mf.set("", "version", toml::Value::integer(1));
  mf.set("sisa", "shards", toml::Value::integer(ensemble.plan.shard_count()));
  mf.set("sisa", "slices", toml::Value::integer(ensemble.plan.slice_count()));
  mf.set("sisa", "plan_seed", toml::Value::u64(ensemble.plan.seed()));
  {
    std::vector<toml::Value> widths;
    for (int w : ensemble.spec.layer_widths) {
      widths.push_back(toml::Value::integer(w));
    }
    mf.set("model", "layers", toml::Value::array(std::move(widths)));
    mf.set("model", "activation",
           toml::Value::str(to_string(ensemble.spec.activation)));
  }
  const TrainConfig& tc = ensemble.train_config;
  mf.set("train", "epochs", toml::Value::integer(tc.epochs));
  mf.set("train", "base_lr", toml::Value::real(tc.base_lr));
  mf.set("train", "lr_schedule", toml::Value::str(to_string(tc.schedule)));
  mf.set("train", "halve_k", toml::Value::integer(tc.halve_k));
  mf.set("train", "batch_size", toml::Value::integer(tc.batch_size));
  mf.set("train", "seed", toml::Value::u64(tc.seed));
  {
    std::vector<toml::Value> removed;
    for (uint64_t id : ensemble.removed_ids) {
      removed.push_back(toml::Value::integer(static_cast<int64_t>(id)));
    }
    mf.set("unlearned", "ids", toml::Value::array(std::move(removed)));
  }

  std::vector<std::pair<std::string, std::string>> hashes;
  hashes.emplace_back("plan.tsv", file_hash(dir / "plan.tsv"));

  for (size_t s = 0; s < ensemble.shards.size(); ++s) {
    const auto& shard = ensemble.shards[s];
    const fs::path sdir = dir / ("shard-" + std::to_string(s));
    fs::create_directories(sdir);
    const std::string lineage_sec = "lineage.shard-" + std::to_string(s);
    mf.set(lineage_sec, "init_seed", toml::Value::u64(shard.init_seed));
    {
      std::vector<toml::Value> seeds;
      for (uint64_t v : shard.slice_seeds) seeds.push_back(toml::Value::u64(v));
      mf.set(lineage_sec, "slice_seeds", toml::Value::array(std::move(seeds)));
    }
    for (size_t r = 0; r < shard.checkpoints.size(); ++r) {
      const std::string name = "ckpt-" + std::to_string(r + 1) + ".params";
      save_params(shard.checkpoints[r], sdir / name);
      hashes.emplace_back("shard-" + std::to_string(s) + "/" + name,
                          file_hash(sdir / name));
    }
    save_params(shard.final_params, sdir / "final.params");
    hashes.emplace_back("shard-" + std::to_string(s) + "/final.params",
                        file_hash(sdir / "final.params"));
  }

  for (const auto& [name, hex] : hashes) {
    mf.set("hashes", name, toml::Value::str(hex));
  }
  write_text_file(dir / "manifest.toml", mf.serialize());
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "manifest.toml")) {
    throw FormatError("no manifest.toml under " + dir.string());
  }
  const toml::Table mf = toml::Table::parse(read_text_file(dir / "manifest.toml"));
  if (mf.at("", "version").as_int() != 1) {
    throw FormatError("unsupported ensemble version");
  }

  // verify recorded content hashes before trusting anything
  for (const auto& sec : mf.sections()) {
    if (sec.name != "hashes") continue;
    for (const auto& e : sec.entries) {
      const std::string actual = file_hash(dir / e.key);
      if (actual != e.value.as_str()) {
        throw FormatError("content hash mismatch for " + e.key);
      }
    }
  }

  EnsembleModel em;
  const int shards = static_cast<int>(mf.at("sisa", "shards").as_int());
  const int slices = static_cast<int>(mf.at("sisa", "slices").as_int());
  em.plan = PartitionPlan(shards, slices, mf.at("sisa", "plan_seed").as_u64());

  for (const auto& v : mf.at("model", "layers").as_array()) {
    em.spec.layer_widths.push_back(static_cast<int>(v.as_int()));
  }
  em.spec.activation = activation_from_string(mf.at("model", "activation").as_str());
  em.train_config.epochs = static_cast<int>(mf.at("train", "epochs").as_int());
  em.train_config.base_lr = static_cast<float>(mf.at("train", "base_lr").as_real());
  em.train_config.schedule =
      lr_schedule_from_string(mf.at("train", "lr_schedule").as_str());
  em.train_config.halve_k = static_cast<int>(mf.at("train", "halve_k").as_int());
  em.train_config.batch_size =
      static_cast<int>(mf.at("train", "batch_size").as_int());
  em.train_config.seed = mf.at("train", "seed").as_u64();

  for (const auto& v : mf.at("unlearned", "ids").as_array()) {
    em.removed_ids.push_back(static_cast<uint64_t>(v.as_int()));
  }

  // plan.tsv
  {
    std::istringstream in(read_text_file(dir / "plan.tsv"));
    std::string line;
    if (!std::getline(in, line) || line != "id\tshard\tslice") {
      throw FormatError("malformed plan.tsv header");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      uint64_t id = 0;
      int s = 0, r = 0;
      if (!(row >> id >> s >> r)) {
        throw FormatError("malformed plan.tsv row: " + line);
      }
      em.plan.assign(id, {s, r});
    }
  }

  em.shards.resize(static_cast<size_t>(shards));
  for (int s = 0; s < shards; ++s) {
    auto& shard = em.shards[static_cast<size_t>(s)];
    const fs::path sdir = dir / ("shard-" + std::to_string(s));
    const std::string lineage_sec = "lineage.shard-" + std::to_string(s);
    shard.init_seed = mf.at(lineage_sec, "init_seed").as_u64();
    for (const auto& v : mf.at(lineage_sec, "slice_seeds").as_array()) {
      shard.slice_seeds.push_back(v.as_u64());
    }
    for (int r = 0; r < slices; ++r) {
      shard.checkpoints.push_back(
          load_params(sdir / ("ckpt-" + std::to_string(r + 1) + ".params")));
    }
    shard.final_params = load_params(sdir / "final.params");
  }
  return em;
}

}  // namespace ulab
