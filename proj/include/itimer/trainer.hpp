#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itimer/encoder.hpp"
#include "itimer/losses.hpp"
#include "itimer/pseudo_obs.hpp"
#include "itimer/rng.hpp"
#include "itimer/series.hpp"

namespace itimer {

// Pre-training variants: the full method plus the ablation grid.
enum class Variant {
  Full,
  Random,      // pseudo cells ~ U(0, 1)
  Constant,    // pseudo cells = variable's observed mean, no sampled error
  OnlyError,   // alpha forced to 0
  Zero,        // zero anchor
  Mean,        // global-mean anchor
  MAve,        // moving-average anchor
  NoW,         // Wasserstein weight forced to 0
  NoContrast,  // contrastive weight forced to 0
  Baseline,    // reconstruction of observed cells only
};

struct VariantSpec {
  Variant kind = Variant::Full;
  int window = 5;  // MAve only

  static VariantSpec parse(const std::string& s);
  std::string str() const;
  bool operator==(const VariantSpec&) const = default;
};

// The ten rows of the ablation table, in display order.
std::vector<VariantSpec> ablation_grid();

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 50;
  double learning_rate = 1e-3;
  double rho = 0.9;
  MixConfig mix;
  LossConfig loss;
  AnchorStrategy anchor = AnchorStrategy::last_obs();
  VariantSpec variant;
  StatsMode stats_mode = StatsMode::PerVariable;
  std::uint64_t seed = 0;
  // Stop once the global step counter reaches this value (0 = no limit).
  std::size_t max_steps = 0;

  void validate() const;
};

// Adaptive-moment optimizer state.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double learning_rate = 1e-3;
  std::uint64_t t = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;

  bool operator==(const AdamState&) const = default;
};

void adam_update(AdamState& opt, ModelParams& params, const std::map<std::string, Matrix>& grads);

struct ModelState {
  EncoderConfig encoder;
  ModelParams params;
  AdamState optimizer;
  ErrorStats stats;
  std::uint64_t step = 0;
  Rng rng;

  bool operator==(const ModelState&) const = default;
};

ModelState init_state(const EncoderConfig& enc, const TrainConfig& cfg);

// Effective per-step configuration once variant overrides are applied.
TrainConfig apply_variant(TrainConfig cfg);

// One pre-training step on a batch. Mutates `state` and returns the losses.
// Throws NumericalAbort (carrying the LossReport) on a non-finite loss.
LossReport pretrain_step(ModelState& state, std::span<const IrregularSeries> batch,
                         const TrainConfig& cfg, std::size_t batch_id = 0);

// Gradient map of the total loss for one batch, without updating anything.
// Uses a copy of `state` for statistics and sampling.
std::map<std::string, Matrix> loss_gradients(const ModelState& state,
                                             std::span<const IrregularSeries> batch,
                                             const TrainConfig& cfg, LossReport* report = nullptr);

std::size_t steps_per_epoch(std::size_t n_train, std::size_t batch_size);
// Shuffled train-split order for an epoch; a pure function of (epoch, seed).
std::vector<std::size_t> epoch_order(std::size_t n_train, std::size_t epoch, std::uint64_t seed);

struct PretrainOptions {
  std::optional<ModelState> resume;
  std::ostream* loss_csv = nullptr;              // rows only; header is the caller's
  std::filesystem::path epoch_checkpoint_dir;    // empty = none
  std::string meta;                              // config echo stored in checkpoints
};

struct PretrainResult {
  ModelState state;
  std::vector<LossReport> history;
};

PretrainResult pretrain(const Dataset& ds, const EncoderConfig& enc, const TrainConfig& cfg,
                        const PretrainOptions& opts = {});

// --- checkpoint ----------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelState state;
  std::string meta;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the parameter bytes; a short fingerprint for comparing runs.
std::uint64_t params_checksum(const ModelParams& p);

}  // namespace itimer
