#include "itimer/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "itimer/errors.hpp"
#include "itimer/rng.hpp"

namespace itimer {

void EncoderConfig::validate() const {
  if (tau < 1 || d_model < 1 || time_embed_dim < 1 || hidden_dim < 1 || channels < 1) {
    throw ConfigError("encoder dimensions must all be >= 1");
  }
  if (!(time_scale > 0.0)) throw ConfigError("time_scale must be positive");
  if (!(time_kernel_gain >= 0.0) || !std::isfinite(time_kernel_gain)) {
    throw ConfigError("time_kernel_gain must be finite and nonnegative");
  }
}

const Matrix& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("unknown parameter " + name);
  return it->second;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : tensors) n += m.size();
  return n;
}

namespace {

std::map<std::string, Shape> param_shapes(const EncoderConfig& c) {
  const std::size_t h = c.hidden_dim, e = c.time_embed_dim, d = c.d_model;
  return {
      {"enc.time_q", {e, h}},  {"enc.time_k", {e, h}},  {"enc.query", {c.tau, h}},
      {"enc.ff1_w", {3 * c.channels + e, h}},           {"enc.ff1_b", {1, h}},
      {"enc.ff2_w", {h, d}},   {"enc.ff2_b", {1, d}},   {"enc.skip_w", {c.channels, d}},
      {"dec.time_q", {e, h}},  {"dec.time_b", {1, h}},  {"dec.time_k", {e, h}},
      {"dec.key_w", {d, h}},   {"dec.value_w", {d, h}}, {"dec.ff1_w", {2 * h, h}},
      {"dec.ff1_b", {1, h}},   {"dec.ff2_w", {h, c.channels}}, {"dec.ff2_b", {1, c.channels}},
      {"dec.skip_w", {h, c.channels}},
  };
}

bool is_bias(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, "_b") == 0;
}

}  // namespace

ModelParams init_params(const EncoderConfig& cfg) {
  cfg.validate();
  ModelParams p;
  Rng rng(cfg.seed);
  for (const auto& [name, shape] : param_shapes(cfg)) {
    Matrix m(shape);
    if (!is_bias(name)) {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-bound, bound);
    }
    p.tensors.emplace(name, std::move(m));
  }
  return p;
}

BoundParams::BoundParams(ad::Tape& tape, const ModelParams& params, bool trainable) {
  for (const auto& [name, m] : params.tensors) {
    handles_.emplace(name, trainable ? tape.leaf(m) : tape.constant(m));
  }
}

const ad::Tensor& BoundParams::operator[](const std::string& name) const {
  auto it = handles_.find(name);
  if (it == handles_.end()) throw ContractError("unknown parameter " + name);
  return it->second;
}

Matrix time_features(std::span<const double> times, std::size_t dim, double time_scale) {
  const std::size_t pairs = dim / 2;
  Matrix out(times.size(), dim);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i] / time_scale;
    for (std::size_t k = 0; k < pairs; ++k) {
      // 0.5 .. 16 cycles per unit of scaled time
      const double frac = pairs > 1 ? static_cast<double>(k) / static_cast<double>(pairs - 1) : 0.0;
      const double w = two_pi * 0.5 * std::pow(32.0, frac);
      out(i, 2 * k) = std::sin(w * t);
      out(i, 2 * k + 1) = std::cos(w * t);
    }
    if (dim % 2 == 1) out(i, dim - 1) = t;
  }
  return out;
}

std::vector<Token> observed_tokens(const IrregularSeries& s) {
  std::vector<Token> out;
  out.reserve(s.observed());
  for (std::size_t t = 0; t < s.length(); ++t)
    for (std::size_t c = 0; c < s.channels(); ++c)
      if (s.mask(t, c)) out.push_back({s.timestamps[t], c, s.values(t, c)});
  return out;
}

namespace {

std::vector<double> reference_times(const EncoderConfig& cfg) {
  std::vector<double> ref(cfg.tau);
  for (std::size_t i = 0; i < cfg.tau; ++i) {
    ref[i] = cfg.tau > 1 ? cfg.time_scale * static_cast<double>(i) / static_cast<double>(cfg.tau - 1)
                         : 0.0;
  }
  return ref;
}

// Fixed part of the attention logits: gain * <phi(a), phi(b)> / (E / 2), a
// bump centred on a == b. It makes attention time-local from the first step;
// the learned projections then reshape it.
Matrix kernel_logits(const Matrix& phi_a, const Matrix& phi_b, double gain) {
  Matrix k(phi_a.rows(), phi_b.rows());
  if (gain == 0.0) return k;
  const double s = gain / std::max<double>(1.0, static_cast<double>(phi_a.cols() / 2));
  for (std::size_t i = 0; i < phi_a.rows(); ++i) {
    for (std::size_t j = 0; j < phi_b.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t e = 0; e < phi_a.cols(); ++e) dot += phi_a(i, e) * phi_b(j, e);
      k(i, j) = s * dot;
    }
  }
  return k;
}

// Forward difference across reference points divided by their spacing, i.e.
// a rate per unit of scaled time. The last row repeats the backward difference.
Matrix difference_operator(std::size_t tau, double time_scale) {
  Matrix d(tau, tau);
  if (tau < 2) return d;
  const double inv = static_cast<double>(tau - 1) / time_scale;
  for (std::size_t i = 0; i + 1 < tau; ++i) {
    d(i, i) = -inv;
    d(i, i + 1) = inv;
  }
  d(tau - 1, tau - 2) = -inv;
  d(tau - 1, tau - 1) = inv;
  return d;
}

}  // namespace

ad::Tensor encode_tokens(ad::Tape& tape, const BoundParams& p, const EncoderConfig& cfg,
                         std::span<const Token> tokens) {
  if (tokens.empty()) throw ContractError("encode: series has no observed cells");
  const std::size_t n = tokens.size();
  const std::size_t h = cfg.hidden_dim;

  // Group tokens by variable (time order within a variable) so each
  // variable's attention is a contiguous column block.
  std::vector<Token> sorted(tokens.begin(), tokens.end());
  for (const auto& tk : sorted) {
    if (tk.variable >= cfg.channels) {
      throw ShapeError("encode: variable " + std::to_string(tk.variable) +
                       " outside model channels " + std::to_string(cfg.channels));
    }
  }
  std::stable_sort(sorted.begin(), sorted.end(), [](const Token& a, const Token& b) {
    return a.variable != b.variable ? a.variable < b.variable : a.time < b.time;
  });
  std::vector<double> times(n);
  for (std::size_t k = 0; k < n; ++k) times[k] = sorted[k].time;

  const Matrix phi_tok = time_features(times, cfg.time_embed_dim, cfg.time_scale);
  const Matrix phi_ref = time_features(reference_times(cfg), cfg.time_embed_dim, cfg.time_scale);
  auto q = p["enc.query"] + ad::matmul(tape.constant(phi_ref), p["enc.time_q"]);
  auto k = ad::matmul(tape.constant(phi_tok), p["enc.time_k"]);
  auto logits = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(h))) +
                tape.constant(kernel_logits(phi_ref, phi_tok, cfg.time_kernel_gain));

  // Softmax within each variable's own tokens: a mask-gated, per-variable
  // weighted average of observed values at every reference time.
  std::vector<ad::Tensor> cols;
  cols.reserve(cfg.channels);
  std::size_t off = 0;
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    std::size_t cnt = 0;
    while (off + cnt < n && sorted[off + cnt].variable == c) ++cnt;
    if (cnt == 0) {
      cols.push_back(tape.constant(Matrix(cfg.tau, 1)));
      continue;
    }
    Matrix v(cnt, 1);
    for (std::size_t i = 0; i < cnt; ++i) v[i] = sorted[off + i].value;
    auto w = ad::softmax_rows(ad::slice(logits, 0, cfg.tau, off, cnt));
    cols.push_back(ad::matmul(w, tape.constant(std::move(v))));
    off += cnt;
  }
  auto ctx = cols.size() == 1 ? cols[0] : ad::concat(cols, ad::Axis::Cols);  // tau x C
  auto slope = ad::matmul(tape.constant(difference_operator(cfg.tau, cfg.time_scale)), ctx);

  // Rises and falls enter separately, so pooled features can see how much a
  // series moves and not only its net drift.
  const ad::Tensor parts[] = {ctx, ad::relu(slope), ad::relu(ad::scale(slope, -1.0)), tape.constant(phi_ref)};
  auto hid = ad::relu(ad::matmul(ad::concat(parts, ad::Axis::Cols), p["enc.ff1_w"]) + p["enc.ff1_b"]);
  return ad::matmul(hid, p["enc.ff2_w"]) + p["enc.ff2_b"] + ad::matmul(ctx, p["enc.skip_w"]);
}

ad::Tensor encode(ad::Tape& tape, const BoundParams& p, const EncoderConfig& cfg,
                  const IrregularSeries& s) {
  if (s.channels() != cfg.channels) {
    throw ShapeError("encode: series has " + std::to_string(s.channels()) +
                     " variables, model expects " + std::to_string(cfg.channels));
  }
  const auto tokens = observed_tokens(s);
  return encode_tokens(tape, p, cfg, tokens);
}

ad::Tensor decode(ad::Tape& tape, const BoundParams& p, const EncoderConfig& cfg,
                  const ad::Tensor& representation, std::span<const double> target_times) {
  if (representation.rows() != cfg.tau || representation.cols() != cfg.d_model) {
    throw ShapeError("decode: representation " + representation.shape().str() + ", expected (" +
                     std::to_string(cfg.tau) + ", " + std::to_string(cfg.d_model) + ")");
  }
  if (target_times.empty()) throw ShapeError("decode: no target timestamps");
  const std::size_t h = cfg.hidden_dim;
  const Matrix phi_t = time_features(target_times, cfg.time_embed_dim, cfg.time_scale);
  const Matrix phi_ref = time_features(reference_times(cfg), cfg.time_embed_dim, cfg.time_scale);
  auto q = ad::matmul(tape.constant(phi_t), p["dec.time_q"]) + p["dec.time_b"];
  auto keys = ad::matmul(tape.constant(phi_ref), p["dec.time_k"]) + ad::matmul(representation, p["dec.key_w"]);
  auto vals = ad::matmul(representation, p["dec.value_w"]);
  auto logits = ad::scale(ad::matmul(q, ad::transpose(keys)), 1.0 / std::sqrt(static_cast<double>(h))) +
                tape.constant(kernel_logits(phi_t, phi_ref, cfg.time_kernel_gain));
  auto ctx = ad::matmul(ad::softmax_rows(logits), vals);
  const ad::Tensor parts[] = {ctx, q};
  auto hid = ad::relu(ad::matmul(ad::concat(parts, ad::Axis::Cols), p["dec.ff1_w"]) + p["dec.ff1_b"]);
  return ad::matmul(hid, p["dec.ff2_w"]) + p["dec.ff2_b"] + ad::matmul(ctx, p["dec.skip_w"]);
}

Matrix encode(const ModelParams& params, const EncoderConfig& cfg, const IrregularSeries& s) {
  ad::Tape tape;
  BoundParams p(tape, params, false);
  return encode(tape, p, cfg, s).value();
}

Matrix decode(const ModelParams& params, const EncoderConfig& cfg, const Matrix& representation,
              std::span<const double> target_times) {
  ad::Tape tape;
  BoundParams p(tape, params, false);
  return decode(tape, p, cfg, tape.constant(representation), target_times).value();
}

Matrix reconstruct(const ModelParams& params, const EncoderConfig& cfg, const IrregularSeries& s,
                   std::span<const double> target_times) {
  ad::Tape tape;
  BoundParams p(tape, params, false);
  auto r = encode(tape, p, cfg, s);
  return decode(tape, p, cfg, r, target_times).value();
}

}  // namespace itimer
