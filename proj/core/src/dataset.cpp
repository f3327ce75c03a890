#include "ulab/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "ulab/rng.hpp"

namespace ulab {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

// Reads a whole file through zlib, which transparently handles both plain
// and gzip-compressed input.
std::vector<unsigned char> read_file_maybe_gz(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) {
    throw IoError("no such file: " + p.string());
  }
  gzFile f = gzopen(p.string().c_str(), "rb");
  if (!f) {
    throw IoError("cannot open " + p.string());
  }
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) {
    out.insert(out.end(), buf, buf + n);
  }
  const bool bad = n < 0;
  gzclose(f);
  if (bad) {
    throw IoError("read error (corrupt gzip stream?) in " + p.string());
  }
  return out;
}

class BigEndianReader {
 public:
  BigEndianReader(const std::vector<unsigned char>& buf, std::string name)
      : buf_(buf), name_(std::move(name)) {}

  uint32_t u32() {
    if (pos_ + 4 > buf_.size()) {
      throw IoError("truncated file: " + name_);
    }
    uint32_t v = (uint32_t(buf_[pos_]) << 24) | (uint32_t(buf_[pos_ + 1]) << 16) |
                 (uint32_t(buf_[pos_ + 2]) << 8) | uint32_t(buf_[pos_ + 3]);
    pos_ += 4;
    return v;
  }

  std::span<const unsigned char> bytes(size_t n) {
    if (pos_ + n > buf_.size()) {
      throw IoError("truncated file: " + name_);
    }
    std::span<const unsigned char> s{buf_.data() + pos_, n};
    pos_ += n;
    return s;
  }

 private:
  const std::vector<unsigned char>& buf_;
  std::string name_;
  size_t pos_ = 0;
};

void put_u32_be(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

void write_file_maybe_gz(const std::filesystem::path& p, const std::string& bytes) {
  const bool gz = p.extension() == ".gz";
  // "wT" writes without compression so plain paths stay plain files.
  gzFile f = gzopen(p.string().c_str(), gz ? "wb" : "wbT");
  if (!f) {
    throw IoError("cannot open for writing: " + p.string());
  }
  const int written = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  const int rc = gzclose(f);
  if (written != static_cast<int>(bytes.size()) || rc != Z_OK) {
    throw IoError("write failed: " + p.string());
  }
}

}  // namespace

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::clean: return "clean";
    case Provenance::poison: return "poison";
    case Provenance::mitigation: return "mitigation";
  }
  return "?";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "clean") return Provenance::clean;
  if (s == "poison") return Provenance::poison;
  if (s == "mitigation") return Provenance::mitigation;
  throw ArgumentError("unknown provenance: " + std::string(s));
}

Dataset::Dataset(FeatureShape shape, int class_count)
    : shape_(shape), class_count_(class_count) {
  if (shape.h <= 0 || shape.w <= 0 || shape.c <= 0) {
    throw ArgumentError("feature shape must be positive");
  }
  if (class_count < 1) {
    throw ArgumentError("class_count must be >= 1");
  }
}

void Dataset::append(Sample s) {
  if (static_cast<int>(s.features.size()) != shape_.flat()) {
    throw ArgumentError("feature length does not match shape");
  }
  if (s.label < 0 || s.label >= class_count_) {
    throw ArgumentError("label out of range");
  }
  for (float v : s.features) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ArgumentError("feature value outside [0,1]");
    }
  }
  if (index_.count(s.id)) {
    throw ArgumentError("duplicate sample id " + std::to_string(s.id));
  }
  index_.emplace(s.id, static_cast<uint32_t>(ids_.size()));
  ids_.push_back(s.id);
  labels_.push_back(s.label);
  prov_.push_back(s.provenance);
  data_.insert(data_.end(), s.features.begin(), s.features.end());
  next_id_ = std::max(next_id_, s.id + 1);
}

Sample Dataset::sample(size_t row) const {
  auto f = features(row);
  return {ids_[row], std::vector<float>(f.begin(), f.end()), labels_[row], prov_[row]};
}

size_t Dataset::row_of(uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw LookupError("unknown sample id " + std::to_string(id));
  }
  return it->second;
}

size_t Dataset::count(Provenance p) const {
  return static_cast<size_t>(std::count(prov_.begin(), prov_.end(), p));
}

std::vector<uint64_t> Dataset::ids_with(Provenance p) const {
  std::vector<uint64_t> out;
  for (size_t i = 0; i < prov_.size(); ++i) {
    if (prov_[i] == p) out.push_back(ids_[i]);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels) {
  auto ibuf = read_file_maybe_gz(images);
  auto lbuf = read_file_maybe_gz(labels);

  BigEndianReader ir(ibuf, images.string());
  const uint32_t imagic = ir.u32();
  if (imagic != kImagesMagic) {
    throw FormatError("bad image magic in " + images.string());
  }
  const uint32_t n = ir.u32();
  const uint32_t h = ir.u32();
  const uint32_t w = ir.u32();
  auto pixels = ir.bytes(size_t(n) * h * w);

  BigEndianReader lr(lbuf, labels.string());
  const uint32_t lmagic = lr.u32();
  if (lmagic != kLabelsMagic) {
    throw FormatError("bad label magic in " + labels.string());
  }
  const uint32_t ln = lr.u32();
  if (ln != n) {
    throw ConsistencyError("image/label count mismatch: " + std::to_string(n) +
                           " vs " + std::to_string(ln));
  }
  auto lab = lr.bytes(n);

  int class_count = 0;
  for (uint32_t i = 0; i < n; ++i) {
    class_count = std::max(class_count, int(lab[i]) + 1);
  }
  if (class_count == 0) class_count = 1;

  Dataset ds({int(h), int(w), 1}, class_count);
  const size_t d = size_t(h) * w;
  std::vector<float> feat(d);
  for (uint32_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) {
      feat[j] = float(pixels[i * d + j]) * (1.0f / 255.0f);
    }
    ds.append({i, feat, int(lab[i]), Provenance::clean});
  }
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (ds.shape().c != 1) {
    throw ArgumentError("IDX export supports single-channel data only");
  }
  std::string ibytes;
  put_u32_be(ibytes, kImagesMagic);
  put_u32_be(ibytes, static_cast<uint32_t>(ds.size()));
  put_u32_be(ibytes, static_cast<uint32_t>(ds.shape().h));
  put_u32_be(ibytes, static_cast<uint32_t>(ds.shape().w));
  for (size_t i = 0; i < ds.size(); ++i) {
    for (float v : ds.features(i)) {
      ibytes.push_back(static_cast<char>(
          static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }

  std::string lbytes;
  put_u32_be(lbytes, kLabelsMagic);
  put_u32_be(lbytes, static_cast<uint32_t>(ds.size()));
  for (size_t i = 0; i < ds.size(); ++i) {
    lbytes.push_back(static_cast<char>(static_cast<unsigned char>(ds.label(i))));
  }

  write_file_maybe_gz(images, ibytes);
  write_file_maybe_gz(labels, lbytes);
}

void save_provenance_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out << "id,provenance,label\n";
  for (size_t i = 0; i < ds.size(); ++i) {
    out << ds.id(i) << ',' << to_string(ds.provenance(i)) << ',' << ds.label(i)
        << '\n';
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Dataset gen_synthetic(int n_per_class, int class_count, double spread,
                      uint64_t seed) {
  if (n_per_class < 1 || class_count < 2 || !(spread > 0.0)) {
    throw ArgumentError("gen_synthetic: need n_per_class >= 1, class_count >= 2, spread > 0");
  }
  constexpr double kTau = 6.283185307179586476925286766559;
  constexpr double kRadius = 0.28;

  Dataset ds({1, 2, 1}, class_count);
  Rng rng(seed);
  const uint64_t total = uint64_t(n_per_class) * uint64_t(class_count);
  for (uint64_t i = 0; i < total; ++i) {
    const int cls = static_cast<int>(i % uint64_t(class_count));
    const double angle = kTau * cls / class_count;
    const double cx = 0.5 + kRadius * std::cos(angle);
    const double cy = 0.5 + kRadius * std::sin(angle);
    const float x = static_cast<float>(std::clamp(cx + spread * rng.normal(), 0.0, 1.0));
    const float y = static_cast<float>(std::clamp(cy + spread * rng.normal(), 0.0, 1.0));
    ds.append({i, {x, y}, cls, Provenance::clean});
  }
  return ds;
}

Dataset remove_ids(const Dataset& ds, std::span<const uint64_t> ids) {
  std::unordered_set<uint64_t> drop;
  for (uint64_t id : ids) {
    ds.row_of(id);  // unknown id -> LookupError
    drop.insert(id);
  }
  Dataset out(ds.shape(), ds.class_count());
  for (size_t i = 0; i < ds.size(); ++i) {
    if (!drop.count(ds.id(i))) {
      out.append(ds.sample(i));
    }
  }
  return out;
}

Dataset filter(const Dataset& ds,
               const std::function<bool(const Dataset&, size_t)>& keep) {
  Dataset out(ds.shape(), ds.class_count());
  for (size_t i = 0; i < ds.size(); ++i) {
    if (keep(ds, i)) {
      out.append(ds.sample(i));
    }
  }
  return out;
}

Dataset concat(const Dataset& base, const Dataset& fragment) {
  if (!(base.shape() == fragment.shape()) ||
      base.class_count() != fragment.class_count()) {
    throw ConsistencyError("concat: shape or class count mismatch");
  }
  Dataset out(base.shape(), base.class_count());
  for (size_t i = 0; i < base.size(); ++i) out.append(base.sample(i));
  for (size_t i = 0; i < fragment.size(); ++i) out.append(fragment.sample(i));
  return out;
}

}  // namespace ulab
