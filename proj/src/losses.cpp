#include "itimer/losses.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <vector>

#include "itimer/errors.hpp"

namespace itimer {

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(alpha_w >= 0.0) || !(beta_c >= 0.0) || !std::isfinite(alpha_w) || !std::isfinite(beta_c)) {
    throw ConfigError("loss weights must be finite and nonnegative");
  }
}

bool LossReport::finite() const {
  return std::isfinite(l_w) && std::isfinite(l_contrast) && std::isfinite(l_orig_rec) &&
         std::isfinite(l_pseudo_rec) && std::isfinite(total);
}

std::string LossReport::str() const {
  return "l_w=" + std::to_string(l_w) + " l_contrast=" + std::to_string(l_contrast) +
         " l_orig_rec=" + std::to_string(l_orig_rec) + " l_pseudo_rec=" + std::to_string(l_pseudo_rec) +
         " total=" + std::to_string(total);
}

ad::Tensor wasserstein2_gaussian(const ad::Tensor& mu_r, const ad::Tensor& sigma_r,
                                 const ad::Tensor& mu_p, const ad::Tensor& sigma_p) {
  if (!(mu_r.shape() == sigma_r.shape()) || !(mu_r.shape() == mu_p.shape()) ||
      !(mu_r.shape() == sigma_p.shape())) {
    throw ShapeError("wasserstein2_gaussian: operand shapes " + mu_r.shape().str() + ", " +
                     sigma_r.shape().str() + ", " + mu_p.shape().str() + ", " + sigma_p.shape().str());
  }
  return ad::sum(ad::square(mu_r - mu_p)) + ad::sum(ad::square(sigma_r - sigma_p));
}

double wasserstein2_gaussian(std::span<const double> mu_r, std::span<const double> sigma_r,
                             std::span<const double> mu_p, std::span<const double> sigma_p) {
  const std::size_t k = mu_r.size();
  if (sigma_r.size() != k || mu_p.size() != k || sigma_p.size() != k) {
    throw ShapeError("wasserstein2_gaussian: length mismatch");
  }
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    s += (mu_r[c] - mu_p[c]) * (mu_r[c] - mu_p[c]) + (sigma_r[c] - sigma_p[c]) * (sigma_r[c] - sigma_p[c]);
  }
  return s;
}

namespace {

ad::Tensor normalized_rows(std::span<const ad::Tensor> reps) {
  std::vector<ad::Tensor> rows;
  rows.reserve(reps.size());
  const Shape s0 = reps[0].shape();
  for (const auto& r : reps) {
    if (!(r.shape() == s0)) throw ShapeError("contrastive_loss: representation shapes differ");
    auto flat = ad::reshape(r, 1, r.value().size());
    rows.push_back(flat / ad::sqrt(ad::sum(ad::square(flat))));
  }
  return rows.size() == 1 ? rows[0] : ad::concat(rows, ad::Axis::Rows);
}

}  // namespace

ad::Tensor contrastive_loss(std::span<const ad::Tensor> r, std::span<const ad::Tensor> r_tilde,
                            const LossConfig& cfg) {
  cfg.validate();
  if (r.empty()) throw ContractError("contrastive_loss: empty batch");
  if (r.size() != r_tilde.size()) throw ShapeError("contrastive_loss: batch sizes differ");
  ad::Tape& tape = *r[0].tape();
  const std::size_t b = r.size();
  const double inv_t = 1.0 / cfg.temperature;

  auto z = normalized_rows(r);
  auto zt = normalized_rows(r_tilde);
  auto pos = ad::scale(ad::sum_cols(z * zt), inv_t);                 // b x 1
  auto sims = ad::scale(ad::matmul(z, ad::transpose(z)), inv_t);     // b x b
  Matrix off(b, b, 1.0);
  for (std::size_t i = 0; i < b; ++i) off(i, i) = 0.0;
  auto off_diag = tape.constant(std::move(off));

  if (cfg.contrastive_form == ContrastiveForm::Exp) {
    auto denom = ad::exp(pos) + ad::sum_cols(ad::exp(sims) * off_diag);
    return ad::sum(ad::log(denom) - pos);
  }
  // Denominator built from un-exponentiated terms: b * s_ii + sum_{j != i} s_ij.
  auto denom = ad::scale(pos, static_cast<double>(b)) + ad::sum_cols(sims * off_diag);
  return ad::sum(ad::log(denom, /*clamp=*/true) - pos);
}

MaskedLoss masked_reconstruction_loss(ad::Tape& tape, std::span<const Matrix> x,
                                      std::span<const ad::Tensor> x_hat, std::span<const Mask> m,
                                      ReconstructionReduce reduce) {
  if (x.size() != x_hat.size() || x.size() != m.size()) {
    throw ShapeError("masked_reconstruction_loss: batch lengths differ");
  }
  std::vector<ad::Tensor> parts;
  std::size_t support = 0;
  for (std::size_t b = 0; b < x.size(); ++b) {
    if (!(x[b].shape() == x_hat[b].shape()) || !(x[b].shape() == m[b].shape())) {
      throw ShapeError("masked_reconstruction_loss: shapes " + x[b].shape().str() + ", " +
                       x_hat[b].shape().str() + ", " + m[b].shape().str());
    }
    const std::size_t n = m[b].count();
    if (n == 0) continue;
    support += n;
    parts.push_back(ad::sum(ad::square(ad::masked_select(tape.constant(x[b]) - x_hat[b], m[b]))));
  }
  if (support == 0) return {tape.constant(Matrix::scalar(0.0)), 0};
  auto total = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) total = total + parts[k];
  if (reduce == ReconstructionReduce::Mean) total = ad::scale(total, 1.0 / static_cast<double>(support));
  return {total, support};
}

TotalLoss total_loss(ad::Tape& tape, const LossTerms& terms, const LossConfig& cfg) {
  cfg.validate();
  TotalLoss out;
  std::vector<ad::Tensor> parts;
  if (terms.l_w && cfg.enable_w) {
    out.report.l_w = terms.l_w->item();
    if (cfg.alpha_w != 0.0) parts.push_back(ad::scale(*terms.l_w, cfg.alpha_w));
  }
  if (terms.l_contrast && cfg.enable_contrast) {
    out.report.l_contrast = terms.l_contrast->item();
    if (cfg.beta_c != 0.0) parts.push_back(ad::scale(*terms.l_contrast, cfg.beta_c));
  }
  if (terms.l_orig_rec) {
    out.report.l_orig_rec = terms.l_orig_rec->item();
    parts.push_back(ad::scale(*terms.l_orig_rec, 0.5));
  }
  if (terms.l_pseudo_rec) {
    out.report.l_pseudo_rec = terms.l_pseudo_rec->item();
    parts.push_back(ad::scale(*terms.l_pseudo_rec, 0.5));
  }
  if (parts.empty()) {
    out.total = tape.constant(Matrix::scalar(0.0));
  } else {
    out.total = parts[0];
    for (std::size_t k = 1; k < parts.size(); ++k) out.total = out.total + parts[k];
  }
  const auto r = total_loss(out.report.l_w, out.report.l_contrast, out.report.l_orig_rec,
                            out.report.l_pseudo_rec, cfg);
  out.report.total = r.total;
  return out;
}

LossReport total_loss(double l_w, double l_contrast, double l_orig, double l_pseudo,
                      const LossConfig& cfg) {
  cfg.validate();
  LossReport r;
  r.l_w = cfg.enable_w ? l_w : 0.0;
  r.l_contrast = cfg.enable_contrast ? l_contrast : 0.0;
  r.l_orig_rec = l_orig;
  r.l_pseudo_rec = l_pseudo;
  r.total = cfg.alpha_w * r.l_w + cfg.beta_c * r.l_contrast + 0.5 * (r.l_orig_rec + r.l_pseudo_rec);
  return r;
}

namespace {
void put(std::ostream& out, double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, p - buf);
}
}  // namespace

void write_loss_csv_header(std::ostream& out) {
  out << "step,l_w,l_contrast,l_orig_rec,l_pseudo_rec,total\n";
}

void write_loss_csv_row(std::ostream& out, std::size_t step, const LossReport& r) {
  out << step << ',';
  put(out, r.l_w);
  out << ',';
  put(out, r.l_contrast);
  out << ',';
  put(out, r.l_orig_rec);
  out << ',';
  put(out, r.l_pseudo_rec);
  out << ',';
  put(out, r.total);
  out << '\n';
}

}  // namespace itimer
