#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ulab/dataset.hpp"
#include "ulab/rng.hpp"

namespace ulab {

enum class Activation : uint8_t { relu = 0, sigmoid = 1 };

const char* to_string(Activation a);
Activation activation_from_string(std::string_view s);

// Fully-connected classifier architecture: input width first, class count
// last, the chosen activation on hidden layers, softmax on the output.
struct ClassifierSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::relu;

  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  size_t layer_count() const { return layer_widths.size(); }
  void validate() const;
  bool operator==(const ClassifierSpec&) const = default;
};

// Weights and biases, one entry per connection layer. All math is float32
// with a fixed accumulation order so retrained models can be compared
// bit-for-bit.
struct ModelParams {
  struct Layer {
    int out = 0;
    int in = 0;
    std::vector<float> weights;  // row-major, out x in
    std::vector<float> bias;     // out
  };
  std::vector<Layer> layers;

  bool shape_matches(const ClassifierSpec& spec) const;
};

// Bitwise equality (floats compared by bit pattern).
bool bit_equal(const ModelParams& a, const ModelParams& b);

enum class LrSchedule : uint8_t { constant = 0, halve_every_k = 1 };

const char* to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(std::string_view s);

struct TrainConfig {
  int epochs = 0;
  float base_lr = 0.01f;
  LrSchedule schedule = LrSchedule::constant;
  int halve_k = 10;  // used by halve_every_k: lr = base * 0.5^(epoch / k)
  int batch_size = 1;
  uint64_t seed = 0;

  float lr_at(int epoch) const;
  void validate() const;
};

// Glorot-uniform weights, zero biases. Deterministic given the rng state.
ModelParams init_params(const ClassifierSpec& spec, Rng& rng);

// Softmax output probabilities for one input.
std::vector<float> forward_proba(const ClassifierSpec& spec,
                                 const ModelParams& params,
                                 std::span<const float> features);

int predict_label(const ClassifierSpec& spec, const ModelParams& params,
                  std::span<const float> features);

struct LossGrad {
  float loss = 0.0f;     // mean cross-entropy over the batch
  ModelParams grads;     // same shapes as the params
};

// Mean cross-entropy and exact backprop gradients over the given rows.
LossGrad loss_and_grad(const ClassifierSpec& spec, const ModelParams& params,
                       const Dataset& ds, std::span<const uint32_t> rows);

// SGD over the given rows. The batch order for global epoch e is a seeded
// shuffle derived from (stream_seed, e); the learning rate is evaluated at
// the global epoch index. `first_epoch`/`epoch_count` let SISA slice steps
// continue one schedule across checkpoints.
void sgd_epochs(const ClassifierSpec& spec, ModelParams& params,
                const Dataset& ds, std::span<const uint32_t> rows,
                const TrainConfig& config, uint64_t stream_seed,
                int first_epoch, int epoch_count);

// Full training pass over the dataset: epochs from the config, epoch 0
// onward, shuffles seeded from stream_seed. Pure function of its inputs.
ModelParams train(const ClassifierSpec& spec, const ModelParams& params_in,
                  const Dataset& ds, const TrainConfig& config,
                  uint64_t stream_seed);

// Binary serialization: magic "ULAB-PARAMS\0", version byte, layer count,
// per-layer dims (little-endian u32), then row-major little-endian f32
// weights and biases. Bit-exact round trip.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);
std::string params_to_bytes(const ModelParams& params);
ModelParams params_from_bytes(std::string_view bytes);

}  // namespace ulab
