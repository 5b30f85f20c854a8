#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "itimer/autodiff.hpp"
#include "itimer/matrix.hpp"
#include "itimer/rng.hpp"
#include "itimer/series.hpp"

namespace itimer {

// Per-variable statistics, or one pooled pair broadcast to every variable.
enum class StatsMode { PerVariable, Pooled };

// Running Gaussian model of reconstruction error, smoothed with momentum rho.
struct ErrorStats {
  std::vector<double> mu;
  std::vector<double> sigma;
  double rho = 0.9;
  bool initialized = false;

  // mu = 0, sigma = 1, not initialized.
  static ErrorStats prior(std::size_t channels, double rho);
  void validate() const;
  bool operator==(const ErrorStats&) const = default;
};

struct BatchErrorStats {
  std::vector<double> mu;
  std::vector<double> sigma;
  // false where the batch had no eligible cell for that variable
  std::vector<bool> present;
};

// Mean and population std of (x - x_hat) over mask-1 cells, per variable,
// pooled across the batch. Mask-0 cells are never read.
BatchErrorStats compute_batch_error_stats(std::span<const IrregularSeries> x,
                                          std::span<const Matrix> x_hat,
                                          StatsMode mode = StatsMode::PerVariable);

// First call copies the batch statistics; later calls blend
// rho * old + (1 - rho) * new. Variables absent from the batch keep their
// previous values.
ErrorStats momentum_update(ErrorStats stats, std::span<const double> mu_new,
                           std::span<const double> sigma_new, const std::vector<bool>& present = {});

struct AnchorStrategy {
  enum class Kind { LastObs, Zero, GlobalMean, MovingAverage };
  Kind kind = Kind::LastObs;
  int window = 5;

  static AnchorStrategy last_obs() { return {Kind::LastObs, 0}; }
  static AnchorStrategy zero() { return {Kind::Zero, 0}; }
  static AnchorStrategy global_mean() { return {Kind::GlobalMean, 0}; }
  static AnchorStrategy moving_average(int w) { return {Kind::MovingAverage, w}; }
  std::string str() const;
};

// Anchor value for every cell. Cells before a variable's first observation
// fall back to its observed mean (0 for a variable never observed).
Matrix anchor_values(const IrregularSeries& s, const AnchorStrategy& strategy);

// Mixing ratio: a constant, or uniform(lo, hi) per synthesized cell.
struct MixConfig {
  double alpha = 0.5;
  bool per_cell_uniform = false;
  double alpha_lo = 0.0;
  double alpha_hi = 1.0;
  void validate() const;
};

// A series whose unobserved cells hold pseudo-observations, plus the trace
// of how each one was produced.
struct PseudoSeries {
  std::string id;
  std::vector<double> timestamps;
  Matrix values;          // pseudo-complete
  Mask source_mask;       // original mask
  Matrix anchors;         // anchor used at each mask-0 cell (0 elsewhere)
  Matrix sampled_errors;  // error draw at each mask-0 cell (0 elsewhere)
  Matrix alpha;           // mixing ratio at each mask-0 cell (0 elsewhere)

  // The pseudo series presented to the encoder: every cell observed.
  IrregularSeries as_complete() const;
};

// Observed cells are copied; each mask-0 cell becomes
// alpha * anchor + (1 - alpha) * e with e ~ N(mu_c, sigma_c^2).
PseudoSeries synthesize_pseudo(const IrregularSeries& s, const ErrorStats& stats,
                               const MixConfig& mix, const AnchorStrategy& strategy, Rng& rng);

// Ablation fills: uniform(0, 1) draws, or the variable's observed mean.
PseudoSeries fill_uniform(const IrregularSeries& s, Rng& rng);
PseudoSeries fill_constant(const IrregularSeries& s);

// Tape-connected error statistics over mask-0 cells of the pseudo series.
struct PseudoErrorStats {
  ad::Tensor mu;     // 1 x k
  ad::Tensor sigma;  // 1 x k
  // Variables (columns of mu/sigma) that had at least one mask-0 cell. In
  // pooled mode this is {0} standing for all variables.
  std::vector<std::size_t> variables;
  bool empty() const { return variables.empty(); }
};

PseudoErrorStats compute_pseudo_error_stats(ad::Tape& tape, std::span<const PseudoSeries> x_tilde,
                                            std::span<const ad::Tensor> x_hat_p,
                                            StatsMode mode = StatsMode::PerVariable);

// Sidecar CSV `t,c,anchor,sampled_error,alpha`, one row per synthesized cell.
void write_pseudo_trace(const PseudoSeries& p, std::ostream& out);

}  // namespace itimer
