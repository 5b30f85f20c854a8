#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "itimer/autodiff.hpp"
#include "itimer/encoder.hpp"
#include "itimer/rng.hpp"
#include "itimer/series.hpp"

namespace itimer::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
  return m;
}

// Random irregular instance with strictly increasing times in [0, 1] and at
// least one observed cell per row.
inline IrregularSeries random_series(std::size_t t, std::size_t c, double p_obs, Rng& rng,
                                     const std::string& id = "x") {
  IrregularSeries s;
  s.id = id;
  s.values = Matrix(t, c);
  s.mask = Mask(t, c);
  double now = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    now += rng.uniform(0.01, 1.0 / static_cast<double>(t));
    s.timestamps.push_back(now);
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      if (rng.uniform() < p_obs) {
        s.mask(i, j) = 1;
        s.values(i, j) = rng.uniform();
        any = true;
      }
    }
    if (!any) {
      const std::size_t j = rng.index(c);
      s.mask(i, j) = 1;
      s.values(i, j) = rng.uniform();
    }
  }
  return s;
}

// Builds a scalar loss from leaves holding `inputs`.
using LossFn = std::function<ad::Tensor(ad::Tape&, const std::vector<ad::Tensor>&)>;

struct GradCheck {
  double max_rel = 0.0;  // |analytic - numeric|_inf / max(|analytic|_inf, |numeric|_inf, 1e-8), per input
  std::size_t entries = 0;
};

// Central differences with step h against the tape's reverse sweep.
inline GradCheck check_gradients(const LossFn& f, std::vector<Matrix> inputs, double h = 1e-5) {
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Tensor> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
    const auto g = tape.backward(f(tape, leaves));
    for (const auto& l : leaves) analytic.push_back(g[l]);
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    ad::Tape tape;
    std::vector<ad::Tensor> leaves;
    for (const auto& m : xs) leaves.push_back(tape.leaf(m));
    return f(tape, leaves).item();
  };
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + h;
      const double up = eval(inputs);
      inputs[k][i] = x0 - h;
      const double down = eval(inputs);
      inputs[k][i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      diff = std::max(diff, std::abs(numeric - analytic[k][i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[k][i])});
      ++out.entries;
    }
    out.max_rel = std::max(out.max_rel, diff / scale);
  }
  return out;
}

// Scalar loss of a parameter set, built on a tape.
using ParamLossFn = std::function<ad::Tensor(ad::Tape&, const BoundParams&)>;

// Gradient check over every entry of every named parameter; same error
// measure as check_gradients.
inline GradCheck check_param_gradients(const ParamLossFn& f, ModelParams params, double h = 1e-5) {
  std::map<std::string, Matrix> analytic;
  {
    ad::Tape tape;
    BoundParams p(tape, params, true);
    const auto g = tape.backward(f(tape, p));
    for (const auto& [name, t] : p.all()) analytic.emplace(name, g[t]);
  }
  auto eval = [&] {
    ad::Tape tape;
    BoundParams p(tape, params, true);
    return f(tape, p).item();
  };
  GradCheck out;
  for (auto& [name, m] : params.tensors) {
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double x0 = m[i];
      m[i] = x0 + h;
      const double up = eval();
      m[i] = x0 - h;
      const double down = eval();
      m[i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      diff = std::max(diff, std::abs(numeric - analytic.at(name)[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic.at(name)[i])});
      ++out.entries;
    }
    out.max_rel = std::max(out.max_rel, diff / scale);
  }
  return out;
}

inline EncoderConfig small_encoder(std::size_t channels, Rng& rng) {
  EncoderConfig e;
  e.tau = 2 + rng.index(3);
  e.d_model = 2 + rng.index(4);
  e.time_embed_dim = 2 + rng.index(4);
  e.hidden_dim = 2 + rng.index(4);
  e.channels = channels;
  e.time_kernel_gain = rng.uniform(0.0, 4.0);
  e.seed = rng.next_u64();
  return e;
}

}  // namespace itimer::test
