#include "ulab/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace ulab {

namespace {

constexpr char kParamsMagic[12] = {'U', 'L', 'A', 'B', '-', 'P',
                                   'A', 'R', 'A', 'M', 'S', '\0'};
constexpr uint8_t kParamsVersion = 1;

// Scratch space for one sample's forward/backward pass.
struct Workspace {
  std::vector<std::vector<float>> acts;  // acts[0] = input copy, acts[L] = probs
  std::vector<float> delta;              // gradient wrt current layer output
  std::vector<float> delta_prev;

  explicit Workspace(const ClassifierSpec& spec) {
    acts.resize(spec.layer_count());
    for (size_t l = 0; l < spec.layer_count(); ++l) {
      acts[l].resize(static_cast<size_t>(spec.layer_widths[l]));
    }
    const size_t mx = static_cast<size_t>(
        *std::max_element(spec.layer_widths.begin(), spec.layer_widths.end()));
    delta.resize(mx);
    delta_prev.resize(mx);
  }
};

inline float activate(Activation a, float z) {
  if (a == Activation::relu) return z > 0.0f ? z : 0.0f;
  return 1.0f / (1.0f + std::exp(-z));
}

// Derivative expressed through the activation output.
inline float activate_grad(Activation a, float out) {
  if (a == Activation::relu) return out > 0.0f ? 1.0f : 0.0f;
  return out * (1.0f - out);
}

// Forward pass into ws.acts; the last layer gets softmax probabilities.
void forward(const ClassifierSpec& spec, const ModelParams& params,
             std::span<const float> input, Workspace& ws) {
  std::copy(input.begin(), input.end(), ws.acts[0].begin());
  const size_t n_conn = params.layers.size();
  for (size_t l = 0; l < n_conn; ++l) {
    const auto& lay = params.layers[l];
    const auto& src = ws.acts[l];
    auto& dst = ws.acts[l + 1];
    const bool last = (l + 1 == n_conn);
    for (int o = 0; o < lay.out; ++o) {
      const float* wrow = lay.weights.data() + static_cast<size_t>(o) * lay.in;
      float z = lay.bias[static_cast<size_t>(o)];
      for (int i = 0; i < lay.in; ++i) {
        z += wrow[i] * src[static_cast<size_t>(i)];
      }
      dst[static_cast<size_t>(o)] = last ? z : activate(spec.activation, z);
    }
    if (last) {
      // stable softmax in place
      float mx = dst[0];
      for (float v : dst) mx = std::max(mx, v);
      float sum = 0.0f;
      for (float& v : dst) {
        v = std::exp(v - mx);
        sum += v;
      }
      const float inv = 1.0f / sum;
      for (float& v : dst) v *= inv;
    }
  }
}

// Backprop for one sample; accumulates unscaled gradients into grad.
// Returns the sample's cross-entropy loss.
float backward(const ClassifierSpec& spec, const ModelParams& params,
               int label, Workspace& ws, ModelParams& grad) {
  const size_t n_conn = params.layers.size();
  const auto& probs = ws.acts[n_conn];
  const float p = std::max(probs[static_cast<size_t>(label)], 1e-12f);
  const float loss = -std::log(p);

  // dL/dlogits = probs - onehot(label)
  float* delta = ws.delta.data();
  for (size_t o = 0; o < probs.size(); ++o) {
    delta[o] = probs[o];
  }
  delta[static_cast<size_t>(label)] -= 1.0f;

  float* delta_prev = ws.delta_prev.data();
  for (size_t l = n_conn; l-- > 0;) {
    const auto& lay = params.layers[l];
    auto& glay = grad.layers[l];
    const float* src = ws.acts[l].data();
    const bool propagate = l > 0;
    if (propagate) {
      std::fill(delta_prev, delta_prev + lay.in, 0.0f);
    }
    for (int o = 0; o < lay.out; ++o) {
      const float d = delta[o];
      glay.bias[static_cast<size_t>(o)] += d;
      const float* wrow = lay.weights.data() + static_cast<size_t>(o) * lay.in;
      float* grow = glay.weights.data() + static_cast<size_t>(o) * lay.in;
      for (int i = 0; i < lay.in; ++i) {
        grow[i] += d * src[i];
      }
      if (propagate && d != 0.0f) {
        for (int i = 0; i < lay.in; ++i) {
          delta_prev[i] += d * wrow[i];
        }
      }
    }
    if (!propagate) break;
    for (int i = 0; i < lay.in; ++i) {
      delta_prev[i] *= activate_grad(spec.activation, src[i]);
    }
    std::swap(delta, delta_prev);
  }
  return loss;
}

ModelParams zero_like(const ModelParams& params) {
  ModelParams g;
  g.layers.reserve(params.layers.size());
  for (const auto& lay : params.layers) {
    g.layers.push_back({lay.out, lay.in,
                        std::vector<float>(lay.weights.size(), 0.0f),
                        std::vector<float>(lay.bias.size(), 0.0f)});
  }
  return g;
}

void put_u32_le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32_le(std::string& out, float f) {
  put_u32_le(out, std::bit_cast<uint32_t>(f));
}

class LeReader {
 public:
  explicit LeReader(std::string_view b) : b_(b) {}
  uint32_t u32() {
    check(4);
    uint32_t v = uint32_t(uint8_t(b_[pos_])) | (uint32_t(uint8_t(b_[pos_ + 1])) << 8) |
                 (uint32_t(uint8_t(b_[pos_ + 2])) << 16) |
                 (uint32_t(uint8_t(b_[pos_ + 3])) << 24);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  uint8_t u8() {
    check(1);
    return static_cast<uint8_t>(b_[pos_++]);
  }
  std::string_view raw(size_t n) {
    check(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  void check(size_t n) {
    if (pos_ + n > b_.size()) {
      throw FormatError("truncated params data");
    }
  }
  std::string_view b_;
  size_t pos_ = 0;
};

}  // namespace

const char* to_string(Activation a) {
  return a == Activation::relu ? "relu" : "sigmoid";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ArgumentError("unknown activation: " + std::string(s));
}

const char* to_string(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "halve_every_k";
}

LrSchedule lr_schedule_from_string(std::string_view s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "halve_every_k") return LrSchedule::halve_every_k;
  throw ArgumentError("unknown lr schedule: " + std::string(s));
}

void ClassifierSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ArgumentError("classifier needs at least input and output layers");
  }
  for (int w : layer_widths) {
    if (w < 1) throw ArgumentError("layer widths must be positive");
  }
}

bool ModelParams::shape_matches(const ClassifierSpec& spec) const {
  if (layers.size() + 1 != spec.layer_widths.size()) return false;
  for (size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in != spec.layer_widths[l] ||
        layers[l].out != spec.layer_widths[l + 1]) {
      return false;
    }
  }
  return true;
}

bool bit_equal(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (x.out != y.out || x.in != y.in) return false;
    if (std::memcmp(x.weights.data(), y.weights.data(),
                    x.weights.size() * sizeof(float)) != 0) {
      return false;
    }
    if (std::memcmp(x.bias.data(), y.bias.data(),
                    x.bias.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

float TrainConfig::lr_at(int epoch) const {
  if (schedule == LrSchedule::constant) return base_lr;
  return base_lr * std::pow(0.5f, static_cast<float>(epoch / halve_k));
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(base_lr > 0.0f)) throw ArgumentError("base_lr must be positive");
  if (schedule == LrSchedule::halve_every_k && halve_k < 1) {
    throw ArgumentError("halve_k must be >= 1");
  }
}

ModelParams init_params(const ClassifierSpec& spec, Rng& rng) {
  spec.validate();
  ModelParams p;
  p.layers.reserve(spec.layer_count() - 1);
  for (size_t l = 0; l + 1 < spec.layer_count(); ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    ModelParams::Layer lay{out, in, {}, {}};
    lay.weights.resize(static_cast<size_t>(out) * in);
    lay.bias.assign(static_cast<size_t>(out), 0.0f);
    const double limit = std::sqrt(6.0 / (in + out));
    for (float& w : lay.weights) {
      w = static_cast<float>(rng.uniform(-limit, limit));
    }
    p.layers.push_back(std::move(lay));
  }
  return p;
}

std::vector<float> forward_proba(const ClassifierSpec& spec,
                                 const ModelParams& params,
                                 std::span<const float> features) {
  if (static_cast<int>(features.size()) != spec.input_width()) {
    throw ArgumentError("feature length does not match input width");
  }
  if (!params.shape_matches(spec)) {
    throw ArgumentError("params do not match spec");
  }
  Workspace ws(spec);
  forward(spec, params, features, ws);
  return ws.acts.back();
}

int predict_label(const ClassifierSpec& spec, const ModelParams& params,
                  std::span<const float> features) {
  auto probs = forward_proba(spec, params, features);
  // lowest index wins on exact ties
  return static_cast<int>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
}

LossGrad loss_and_grad(const ClassifierSpec& spec, const ModelParams& params,
                       const Dataset& ds, std::span<const uint32_t> rows) {
  if (rows.empty()) {
    throw ArgumentError("loss_and_grad: empty batch");
  }
  Workspace ws(spec);
  LossGrad out;
  out.grads = zero_like(params);
  float loss_sum = 0.0f;
  for (uint32_t r : rows) {
    forward(spec, params, ds.features(r), ws);
    loss_sum += backward(spec, params, ds.label(r), ws, out.grads);
  }
  const float inv = 1.0f / static_cast<float>(rows.size());
  out.loss = loss_sum * inv;
  for (auto& lay : out.grads.layers) {
    for (float& g : lay.weights) g *= inv;
    for (float& g : lay.bias) g *= inv;
  }
  return out;
}

void sgd_epochs(const ClassifierSpec& spec, ModelParams& params,
                const Dataset& ds, std::span<const uint32_t> rows,
                const TrainConfig& config, uint64_t stream_seed,
                int first_epoch, int epoch_count) {
  config.validate();
  if (epoch_count == 0 || rows.empty()) return;

  Workspace ws(spec);
  ModelParams grad = zero_like(params);
  std::vector<uint32_t> order(rows.begin(), rows.end());

  for (int e = 0; e < epoch_count; ++e) {
    const int epoch = first_epoch + e;
    // Batch order is a pure function of (stream_seed, epoch, |rows|), so a
    // reduced dataset reshuffles from scratch rather than resuming a stream.
    std::copy(rows.begin(), rows.end(), order.begin());
    Rng shuffle_rng(derive_seed(stream_seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    const float lr = config.lr_at(epoch);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const size_t n = end - start;
      for (auto& lay : grad.layers) {
        std::fill(lay.weights.begin(), lay.weights.end(), 0.0f);
        std::fill(lay.bias.begin(), lay.bias.end(), 0.0f);
      }
      for (size_t k = start; k < end; ++k) {
        forward(spec, params, ds.features(order[k]), ws);
        backward(spec, params, ds.label(order[k]), ws, grad);
      }
      const float step = lr / static_cast<float>(n);
      for (size_t l = 0; l < params.layers.size(); ++l) {
        auto& pl = params.layers[l];
        const auto& gl = grad.layers[l];
        for (size_t i = 0; i < pl.weights.size(); ++i) {
          pl.weights[i] -= step * gl.weights[i];
        }
        for (size_t i = 0; i < pl.bias.size(); ++i) {
          pl.bias[i] -= step * gl.bias[i];
        }
      }
    }
  }
}

ModelParams train(const ClassifierSpec& spec, const ModelParams& params_in,
                  const Dataset& ds, const TrainConfig& config,
                  uint64_t stream_seed) {
  config.validate();
  if (config.epochs == 0) return params_in;
  if (ds.empty()) {
    throw ArgumentError("train: empty dataset with epochs > 0");
  }
  std::vector<uint32_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0u);
  ModelParams params = params_in;
  sgd_epochs(spec, params, ds, rows, config, stream_seed, 0, config.epochs);
  return params;
}

std::string params_to_bytes(const ModelParams& params) {
  std::string out;
  out.append(kParamsMagic, sizeof kParamsMagic);
  out.push_back(static_cast<char>(kParamsVersion));
  put_u32_le(out, static_cast<uint32_t>(params.layers.size()));
  for (const auto& lay : params.layers) {
    put_u32_le(out, static_cast<uint32_t>(lay.out));
    put_u32_le(out, static_cast<uint32_t>(lay.in));
  }
  for (const auto& lay : params.layers) {
    for (float w : lay.weights) put_f32_le(out, w);
    for (float b : lay.bias) put_f32_le(out, b);
  }
  return out;
}

ModelParams params_from_bytes(std::string_view bytes) {
  LeReader r(bytes);
  const auto magic = r.raw(sizeof kParamsMagic);
  if (std::memcmp(magic.data(), kParamsMagic, sizeof kParamsMagic) != 0) {
    throw FormatError("bad params magic");
  }
  const uint8_t version = r.u8();
  if (version != kParamsVersion) {
    throw FormatError("unsupported params version " + std::to_string(version));
  }
  const uint32_t n_layers = r.u32();
  ModelParams p;
  p.layers.resize(n_layers);
  for (auto& lay : p.layers) {
    lay.out = static_cast<int>(r.u32());
    lay.in = static_cast<int>(r.u32());
    if (lay.out < 1 || lay.in < 1) {
      throw FormatError("invalid layer dims");
    }
  }
  for (auto& lay : p.layers) {
    lay.weights.resize(static_cast<size_t>(lay.out) * lay.in);
    for (float& w : lay.weights) w = r.f32();
    lay.bias.resize(static_cast<size_t>(lay.out));
    for (float& b : lay.bias) b = r.f32();
  }
  if (!r.at_end()) {
    throw FormatError("trailing bytes in params data");
  }
  return p;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  const std::string bytes = params_to_bytes(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return params_from_bytes(bytes);
}

}  // namespace ulab
