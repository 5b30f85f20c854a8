#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "itimer/series.hpp"
#include "itimer/trainer.hpp"

namespace itimer {

// --- metric primitives --------------------------------------------------------------
//
// Binary labels are 0/1 with 1 the positive class. All of these throw
// MetricError on empty or mismatched inputs.

// Probability that a random positive outranks a random negative; ties count 1/2.
double auroc(std::span<const double> scores, std::span<const int> labels);
// Step-curve sum: sum over thresholds of (recall_k - recall_{k-1}) * precision_k.
double auprc(std::span<const double> scores, std::span<const int> labels);

double accuracy(std::span<const int> preds, std::span<const int> labels);
// Binary precision/recall/F1 with respect to `positive`. An empty denominator gives 0.
double precision(std::span<const int> preds, std::span<const int> labels, int positive = 1);
double recall(std::span<const int> preds, std::span<const int> labels, int positive = 1);
double f1(std::span<const int> preds, std::span<const int> labels, int positive = 1);

// Squared / absolute error over cells where `support` is 1.
double mse(const Matrix& preds, const Matrix& targets, const Mask& support);
double mae(const Matrix& preds, const Matrix& targets, const Mask& support);

// --- tasks ----------------------------------------------------------------------------

enum class TaskKind { Classification, Interpolation, Forecasting };
enum class FinetuneMode { LinearProbe, FullFinetune };

TaskKind parse_task_kind(const std::string& s);
FinetuneMode parse_finetune_mode(const std::string& s);
const char* to_string(TaskKind k);
const char* to_string(FinetuneMode m);

struct TaskSpec {
  TaskKind kind = TaskKind::Interpolation;
  double mask_fraction = 0.3;   // interpolation: share of observed cells hidden
  double split_point = 0.5;     // forecasting: fraction of each instance's time range
  FinetuneMode mode = FinetuneMode::LinearProbe;
  std::uint64_t seed = 0;

  // Head / fine-tuning optimization.
  std::size_t head_epochs = 300;
  double head_learning_rate = 0.05;
  std::size_t finetune_epochs = 3;
  double finetune_learning_rate = 1e-3;
  std::size_t batch_size = 50;

  void validate() const;
};

// One evaluation run: per-metric values plus instances left out.
struct SeedMetrics {
  std::map<std::string, double> values;
  std::size_t excluded = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population std over seeds
  std::vector<double> per_seed;
};

struct MetricsReport {
  TaskKind task = TaskKind::Interpolation;
  std::map<std::string, MetricSummary> metrics;
  std::vector<std::size_t> excluded;  // per seed
  std::string config_echo = "{}";     // JSON text

  // {task, metrics: {name: {mean, std, per_seed}}, excluded, config_echo}
  std::string to_json() const;
};

MetricsReport summarize(TaskKind task, std::span<const SeedMetrics> runs, std::string config_echo = "{}");

// Cells chosen for hiding: a pure function of (instance id, seed), always a
// subset of the observed cells. Count = max(1, round(fraction * observed)).
Mask interpolation_holdout(const IrregularSeries& s, double fraction, std::uint64_t seed);

// The series with `hidden` cells removed from the mask (values zeroed).
IrregularSeries hide_cells(const IrregularSeries& s, const Mask& hidden);

// Forecasting cut for one instance: t_first + fraction * (t_last - t_first).
double forecast_cut(const IrregularSeries& s, double fraction);
// Mask of observed cells at or before `cut` (first) and after it (second).
std::pair<Mask, Mask> forecast_masks(const IrregularSeries& s, double cut);

// Maps a partially observed series to predictions at `times` (times x C).
using Predictor = std::function<Matrix(const IrregularSeries& visible, std::span<const double> times)>;

Predictor model_predictor(const ModelParams& params, const EncoderConfig& enc);
// Each variable's mean over visible cells (0 when a variable has none).
Predictor visible_mean_predictor();
// Last visible value at or before each time; the first visible value before that.
Predictor locf_predictor();

// Harnesses over the test split with an arbitrary predictor.
SeedMetrics run_interpolation(const Predictor& predict, const Dataset& ds, const TaskSpec& spec);
SeedMetrics run_forecasting(const Predictor& predict, const Dataset& ds, const TaskSpec& spec);

// Mean over the tau axis of the encoder output, one row per instance.
Matrix pooled_features(const ModelParams& params, const EncoderConfig& enc,
                       std::span<const IrregularSeries> xs);

SeedMetrics eval_classification(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec);
SeedMetrics eval_interpolation(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec);
SeedMetrics eval_forecasting(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec);

// Dispatches on spec.kind for seeds spec.seed, spec.seed + 1, ... and summarizes.
MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec,
                       std::size_t n_seeds, std::string config_echo = "{}");

}  // namespace itimer
