#include "itimer/pseudo_obs.hpp"

#include <cmath>
#include <deque>
#include <ostream>

#include "itimer/errors.hpp"

namespace itimer {

ErrorStats ErrorStats::prior(std::size_t channels, double rho) {
  ErrorStats s;
  s.mu.assign(channels, 0.0);
  s.sigma.assign(channels, 1.0);
  s.rho = rho;
  s.validate();
  return s;
}

void ErrorStats::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("momentum rho must lie in [0, 1]");
  if (mu.size() != sigma.size()) throw ShapeError("ErrorStats mu/sigma length mismatch");
  for (double s : sigma)
    if (!(s >= 0.0)) throw DomainError("ErrorStats sigma must be nonnegative");
}

// --- observed-error statistics -------------------------------------------------

namespace {

struct Accum {
  std::vector<double> values;
};

// Two-pass mean and population std.
std::pair<double, double> moments(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

}  // namespace

BatchErrorStats compute_batch_error_stats(std::span<const IrregularSeries> x,
                                          std::span<const Matrix> x_hat, StatsMode mode) {
  if (x.size() != x_hat.size()) throw ShapeError("batch and reconstruction counts differ");
  const std::size_t C = x.empty() ? 0 : x[0].channels();
  const std::size_t groups = mode == StatsMode::Pooled ? 1 : C;
  std::vector<Accum> acc(groups);
  for (std::size_t b = 0; b < x.size(); ++b) {
    const auto& s = x[b];
    if (!(x_hat[b].shape() == s.values.shape())) {
      throw ShapeError("reconstruction " + x_hat[b].shape().str() + " vs series " +
                       s.values.shape().str());
    }
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < C; ++c)
        if (s.mask(t, c)) acc[mode == StatsMode::Pooled ? 0 : c].values.push_back(s.values(t, c) - x_hat[b](t, c));
  }
  BatchErrorStats out;
  out.mu.assign(C, 0.0);
  out.sigma.assign(C, 0.0);
  out.present.assign(C, false);
  bool any = false;
  for (std::size_t g = 0; g < groups; ++g) {
    if (acc[g].values.empty()) continue;
    any = true;
    const auto [m, sd] = moments(acc[g].values);
    if (mode == StatsMode::Pooled) {
      out.mu.assign(C, m);
      out.sigma.assign(C, sd);
      out.present.assign(C, true);
    } else {
      out.mu[g] = m;
      out.sigma[g] = sd;
      out.present[g] = true;
    }
  }
  if (!any) throw StatsError("batch has no observed cells");
  return out;
}

ErrorStats momentum_update(ErrorStats stats, std::span<const double> mu_new,
                           std::span<const double> sigma_new, const std::vector<bool>& present) {
  stats.validate();
  if (mu_new.size() != stats.mu.size() || sigma_new.size() != stats.sigma.size() ||
      (!present.empty() && present.size() != stats.mu.size())) {
    throw ShapeError("momentum_update: statistics length mismatch");
  }
  const double rho = stats.rho;
  for (std::size_t c = 0; c < stats.mu.size(); ++c) {
    if (!present.empty() && !present[c]) continue;
    if (!stats.initialized) {
      stats.mu[c] = mu_new[c];
      stats.sigma[c] = sigma_new[c];
    } else {
      stats.mu[c] = rho * stats.mu[c] + (1.0 - rho) * mu_new[c];
      stats.sigma[c] = rho * stats.sigma[c] + (1.0 - rho) * sigma_new[c];
    }
  }
  stats.initialized = true;
  return stats;
}

// --- anchors -------------------------------------------------------------------

std::string AnchorStrategy::str() const {
  switch (kind) {
    case Kind::LastObs: return "last_obs";
    case Kind::Zero: return "zero";
    case Kind::GlobalMean: return "global_mean";
    case Kind::MovingAverage: return "moving_average(" + std::to_string(window) + ")";
  }
  return "?";
}

namespace {

std::vector<double> observed_means(const IrregularSeries& s) {
  std::vector<double> sum(s.channels(), 0.0);
  std::vector<std::size_t> n(s.channels(), 0);
  for (std::size_t t = 0; t < s.length(); ++t)
    for (std::size_t c = 0; c < s.channels(); ++c)
      if (s.mask(t, c)) {
        sum[c] += s.values(t, c);
        ++n[c];
      }
  for (std::size_t c = 0; c < s.channels(); ++c) sum[c] = n[c] ? sum[c] / static_cast<double>(n[c]) : 0.0;
  return sum;
}

}  // namespace

Matrix anchor_values(const IrregularSeries& s, const AnchorStrategy& strategy) {
  using K = AnchorStrategy::Kind;
  if (strategy.kind == K::MovingAverage && strategy.window < 1) {
    throw ConfigError("moving-average window must be >= 1");
  }
  const std::size_t T = s.length(), C = s.channels();
  Matrix out(T, C);
  if (strategy.kind == K::Zero) return out;
  const auto means = observed_means(s);
  if (strategy.kind == K::GlobalMean) {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) out(t, c) = means[c];
    return out;
  }
  const std::size_t w = strategy.kind == K::LastObs ? 1 : static_cast<std::size_t>(strategy.window);
  for (std::size_t c = 0; c < C; ++c) {
    std::deque<double> recent;
    for (std::size_t t = 0; t < T; ++t) {
      if (s.mask(t, c)) {
        recent.push_back(s.values(t, c));
        if (recent.size() > w) recent.pop_front();
      }
      if (recent.empty()) {
        out(t, c) = means[c];
      } else if (w == 1) {
        out(t, c) = recent.back();
      } else {
        double sum = 0.0;
        for (double v : recent) sum += v;
        out(t, c) = sum / static_cast<double>(recent.size());
      }
    }
  }
  return out;
}

// --- synthesis -------------------------------------------------------------------

void MixConfig::validate() const {
  if (per_cell_uniform) {
    if (!(alpha_lo >= 0.0 && alpha_hi <= 1.0 && alpha_lo <= alpha_hi)) {
      throw ConfigError("alpha range must satisfy 0 <= lo <= hi <= 1");
    }
  } else if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

IrregularSeries PseudoSeries::as_complete() const {
  IrregularSeries s;
  s.id = id;
  s.timestamps = timestamps;
  s.values = values;
  s.mask = Mask(values.rows(), values.cols(), 1);
  return s;
}

namespace {

PseudoSeries start_pseudo(const IrregularSeries& s) {
  PseudoSeries p;
  p.id = s.id;
  p.timestamps = s.timestamps;
  p.values = s.values;
  p.source_mask = s.mask;
  p.anchors = Matrix(s.values.shape());
  p.sampled_errors = Matrix(s.values.shape());
  p.alpha = Matrix(s.values.shape());
  return p;
}

}  // namespace

PseudoSeries synthesize_pseudo(const IrregularSeries& s, const ErrorStats& stats,
                               const MixConfig& mix, const AnchorStrategy& strategy, Rng& rng) {
  mix.validate();
  stats.validate();
  if (stats.mu.size() != s.channels()) throw ShapeError("ErrorStats width differs from series");

  PseudoSeries p = start_pseudo(s);
  const Matrix anchors = anchor_values(s, strategy);

  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < s.mask.size(); ++i)
    if (!s.mask[i]) cells.push_back(i);
  if (cells.empty()) return p;

  const std::size_t C = s.channels();
  Matrix mean(cells.size(), 1), sd(cells.size(), 1);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    mean[k] = stats.mu[cells[k] % C];
    sd[k] = stats.sigma[cells[k] % C];
  }
  const Matrix eps = ad::gaussian_sample(mean, sd, rng);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t i = cells[k];
    const double a = mix.per_cell_uniform ? rng.uniform(mix.alpha_lo, mix.alpha_hi) : mix.alpha;
    p.anchors[i] = anchors[i];
    p.sampled_errors[i] = eps[k];
    p.alpha[i] = a;
    p.values[i] = a * anchors[i] + (1.0 - a) * eps[k];
  }
  return p;
}

PseudoSeries fill_uniform(const IrregularSeries& s, Rng& rng) {
  PseudoSeries p = start_pseudo(s);
  for (std::size_t i = 0; i < s.mask.size(); ++i)
    if (!s.mask[i]) p.values[i] = rng.uniform();
  return p;
}

PseudoSeries fill_constant(const IrregularSeries& s) {
  PseudoSeries p = start_pseudo(s);
  const auto means = observed_means(s);
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    if (s.mask[i]) continue;
    p.values[i] = means[i % s.channels()];
    p.anchors[i] = p.values[i];
    p.alpha[i] = 1.0;
  }
  return p;
}

// --- pseudo-branch error statistics ---------------------------------------------------

PseudoErrorStats compute_pseudo_error_stats(ad::Tape& tape, std::span<const PseudoSeries> x_tilde,
                                            std::span<const ad::Tensor> x_hat_p, StatsMode mode) {
  if (x_tilde.size() != x_hat_p.size()) throw ShapeError("pseudo batch and reconstruction counts differ");
  PseudoErrorStats out;
  if (x_tilde.empty()) return out;
  const std::size_t C = x_tilde[0].values.cols();
  const std::size_t groups = mode == StatsMode::Pooled ? 1 : C;

  std::vector<ad::Tensor> diffs;
  diffs.reserve(x_tilde.size());
  for (std::size_t b = 0; b < x_tilde.size(); ++b) {
    if (!(x_hat_p[b].shape() == x_tilde[b].values.shape())) {
      throw ShapeError("pseudo reconstruction " + x_hat_p[b].shape().str() + " vs " +
                       x_tilde[b].values.shape().str());
    }
    diffs.push_back(tape.constant(x_tilde[b].values) - x_hat_p[b]);
  }

  std::vector<ad::Tensor> mus, sigmas;
  for (std::size_t g = 0; g < groups; ++g) {
    std::vector<ad::Tensor> parts;
    for (std::size_t b = 0; b < x_tilde.size(); ++b) {
      const Mask& src = x_tilde[b].source_mask;
      Mask sel(src.rows(), src.cols());
      std::size_t n = 0;
      for (std::size_t t = 0; t < src.rows(); ++t)
        for (std::size_t c = 0; c < src.cols(); ++c)
          if (!src(t, c) && (mode == StatsMode::Pooled || c == g)) {
            sel(t, c) = 1;
            ++n;
          }
      if (n > 0) parts.push_back(ad::masked_select(diffs[b], sel));
    }
    if (parts.empty()) continue;
    auto e = parts.size() == 1 ? parts[0] : ad::concat(parts, ad::Axis::Rows);
    auto m = ad::mean(e);
    auto sd = ad::sqrt(ad::mean(ad::square(e - m)));
    mus.push_back(m);
    sigmas.push_back(sd);
    out.variables.push_back(g);
  }
  if (out.variables.empty()) return out;
  out.mu = mus.size() == 1 ? mus[0] : ad::concat(mus, ad::Axis::Cols);
  out.sigma = sigmas.size() == 1 ? sigmas[0] : ad::concat(sigmas, ad::Axis::Cols);
  return out;
}

void write_pseudo_trace(const PseudoSeries& p, std::ostream& out) {
  out << "t,c,anchor,sampled_error,alpha\n";
  out.precision(17);
  for (std::size_t t = 0; t < p.source_mask.rows(); ++t)
    for (std::size_t c = 0; c < p.source_mask.cols(); ++c) {
      if (p.source_mask(t, c)) continue;
      out << p.timestamps[t] << ',' << c << ',' << p.anchors(t, c) << ','
          << p.sampled_errors(t, c) << ',' << p.alpha(t, c) << '\n';
    }
}

}  // namespace itimer
