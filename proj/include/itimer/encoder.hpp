#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "itimer/autodiff.hpp"
#include "itimer/matrix.hpp"
#include "itimer/series.hpp"

namespace itimer {

struct EncoderConfig {
  std::size_t tau = 16;             // reference points
  std::size_t d_model = 32;         // representation width D
  std::size_t time_embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t channels = 1;         // C, fixed by the dataset
  double time_scale = 1.0;          // timestamps are divided by this before embedding
  double time_kernel_gain = 8.0;    // weight of the fixed time-proximity attention term
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Named parameter tensors. Ordered by name so iteration, initialization and
// serialization are deterministic.
struct ModelParams {
  std::map<std::string, Matrix> tensors;

  const Matrix& at(const std::string& name) const;
  std::size_t count() const;
  bool operator==(const ModelParams&) const = default;
};

// Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); names ending in
// "_b" are biases and start at zero.
ModelParams init_params(const EncoderConfig& cfg);

// Parameters bound as leaves of one tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable = true);
  const ad::Tensor& operator[](const std::string& name) const;
  const std::map<std::string, ad::Tensor>& all() const { return handles_; }

 private:
  std::map<std::string, ad::Tensor> handles_;
};

// One observed (time, variable, value) cell presented to the encoder.
struct Token {
  double time;
  std::size_t variable;
  double value;
};

// Sinusoidal features of t / time_scale: sin/cos pairs over geometrically
// spaced frequencies, plus the scaled time itself when the width is odd.
Matrix time_features(std::span<const double> times, std::size_t dim, double time_scale);

// Observed cells of a series, row-major. Mask-0 cells are never read.
std::vector<Token> observed_tokens(const IrregularSeries& s);

// Reference encoder: tau time-anchored queries attend over each variable's
// observed tokens separately (softmax within the variable), giving a tau x C
// grid of attended values. That grid, its first difference across reference
// points and the reference time features pass through a two-layer network.
ad::Tensor encode_tokens(ad::Tape& tape, const BoundParams& p, const EncoderConfig& cfg,
                         std::span<const Token> tokens);
ad::Tensor encode(ad::Tape& tape, const BoundParams& p, const EncoderConfig& cfg,
                  const IrregularSeries& s);

// Each target timestamp's embedding attends over the tau representation rows
// and is projected to C values.
ad::Tensor decode(ad::Tape& tape, const BoundParams& p, const EncoderConfig& cfg,
                  const ad::Tensor& representation, std::span<const double> target_times);

// Tape-free conveniences for evaluation.
Matrix encode(const ModelParams& params, const EncoderConfig& cfg, const IrregularSeries& s);
Matrix decode(const ModelParams& params, const EncoderConfig& cfg, const Matrix& representation,
              std::span<const double> target_times);
Matrix reconstruct(const ModelParams& params, const EncoderConfig& cfg, const IrregularSeries& s,
                   std::span<const double> target_times);

}  // namespace itimer
