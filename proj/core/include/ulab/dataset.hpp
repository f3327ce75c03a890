#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ulab/errors.hpp"

namespace ulab {

enum class Provenance : uint8_t { clean = 0, poison = 1, mitigation = 2 };

const char* to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct FeatureShape {
  int h = 0;
  int w = 0;
  int c = 0;
  int flat() const { return h * w * c; }
  bool operator==(const FeatureShape&) const = default;
};

struct Sample {
  uint64_t id = 0;
  std::vector<float> features;  // flattened (h, w, c), values in [0, 1]
  int label = 0;
  Provenance provenance = Provenance::clean;
};

// Immutable-after-construction set of labeled samples with stable ids.
// Features live in one contiguous block; samples are addressed by row or id.
class Dataset {
 public:
  Dataset() = default;
  Dataset(FeatureShape shape, int class_count);

  void append(Sample s);

  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  FeatureShape shape() const { return shape_; }
  int class_count() const { return class_count_; }

  std::span<const float> features(size_t row) const {
    const size_t d = static_cast<size_t>(shape_.flat());
    return {data_.data() + row * d, d};
  }
  int label(size_t row) const { return labels_[row]; }
  uint64_t id(size_t row) const { return ids_[row]; }
  Provenance provenance(size_t row) const { return prov_[row]; }
  Sample sample(size_t row) const;

  bool contains_id(uint64_t id) const { return index_.count(id) != 0; }
  // Throws LookupError for unknown ids.
  size_t row_of(uint64_t id) const;
  // One past the highest id in use (0 when empty). New poison/mitigation
  // samples are appended starting here so clean ids stay stable.
  uint64_t next_id() const { return next_id_; }

  size_t count(Provenance p) const;
  std::vector<uint64_t> ids_with(Provenance p) const;

 private:
  FeatureShape shape_;
  int class_count_ = 0;
  std::vector<float> data_;
  std::vector<int32_t> labels_;
  std::vector<uint64_t> ids_;
  std::vector<Provenance> prov_;
  std::unordered_map<uint64_t, uint32_t> index_;
  uint64_t next_id_ = 0;
};

// IDX ingestion. Accepts plain or gzip-compressed files; pixel bytes are
// scaled by 1/255, ids run 0..N-1 in file order, provenance is clean.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels);

// Writes an IDX pair, quantizing features with round(v * 255). Paths ending
// in .gz are gzip-compressed.
void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels);

// Sidecar provenance listing: one "id,provenance,label" row per sample.
void save_provenance_csv(const Dataset& ds, const std::filesystem::path& path);

// Two-dimensional Gaussian blobs, one per class, clipped to [0,1]^2.
// Class c's center sits on a circle of radius 0.28 around (0.5, 0.5) at
// angle 2*pi*c/class_count. Samples interleave classes: row i has label
// i % class_count. feature_shape is (1, 2, 1).
Dataset gen_synthetic(int n_per_class, int class_count, double spread,
                      uint64_t seed);

// X \ X^u: drops the given ids, preserving order, ids and provenance.
// Unknown ids throw LookupError.
Dataset remove_ids(const Dataset& ds, std::span<const uint64_t> ids);

// Keeps rows matching the predicate, preserving order, ids and provenance.
Dataset filter(const Dataset& ds, const std::function<bool(const Dataset&, size_t)>& keep);

// Appends fragment rows to base. Shapes and class counts must match and ids
// must stay unique.
Dataset concat(const Dataset& base, const Dataset& fragment);

}  // namespace ulab
