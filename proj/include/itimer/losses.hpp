#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "itimer/autodiff.hpp"
#include "itimer/matrix.hpp"

namespace itimer {

enum class ContrastiveForm { Exp, Literal };
enum class ReconstructionReduce { Mean, Sum };
// Which cells the pseudo-series reconstruction loss covers.
enum class PseudoRecMask { Observed, Complement };

struct LossConfig {
  double alpha_w = 1.0;   // weight of the Wasserstein term
  double beta_c = 0.5;    // weight of the contrastive term
  double temperature = 0.5;
  ContrastiveForm contrastive_form = ContrastiveForm::Exp;
  bool enable_w = true;
  bool enable_contrast = true;
  ReconstructionReduce reduce = ReconstructionReduce::Mean;
  PseudoRecMask pseudo_rec_mask = PseudoRecMask::Observed;

  void validate() const;
};

struct LossReport {
  double l_w = 0.0;
  double l_contrast = 0.0;
  double l_orig_rec = 0.0;
  double l_pseudo_rec = 0.0;
  double total = 0.0;

  bool finite() const;
  std::string str() const;
  bool operator==(const LossReport&) const = default;
};

// Squared 2-Wasserstein distance between diagonal Gaussians:
// sum_c (mu_r - mu_p)^2 + (sigma_r - sigma_p)^2. Operands are 1 x k rows.
ad::Tensor wasserstein2_gaussian(const ad::Tensor& mu_r, const ad::Tensor& sigma_r,
                                 const ad::Tensor& mu_p, const ad::Tensor& sigma_p);
double wasserstein2_gaussian(std::span<const double> mu_r, std::span<const double> sigma_r,
                             std::span<const double> mu_p, std::span<const double> sigma_p);

// Flattens and L2-normalizes each representation, then sums the per-instance
// InfoNCE-style terms. Positives are (R_i, R~_i); negatives are (R_i, R_j).
ad::Tensor contrastive_loss(std::span<const ad::Tensor> r, std::span<const ad::Tensor> r_tilde,
                            const LossConfig& cfg);

struct MaskedLoss {
  ad::Tensor value;
  std::size_t support = 0;  // number of mask-1 cells; 0 means the loss is a flagged zero
  bool empty() const { return support == 0; }
};

// Squared error over mask-1 cells across a batch, divided by the number of
// such cells (Mean) or left as a sum.
MaskedLoss masked_reconstruction_loss(ad::Tape& tape, std::span<const Matrix> x,
                                      std::span<const ad::Tensor> x_hat, std::span<const Mask> m,
                                      ReconstructionReduce reduce = ReconstructionReduce::Mean);

// Components feeding the total objective; absent terms contribute exactly 0.
struct LossTerms {
  std::optional<ad::Tensor> l_w;
  std::optional<ad::Tensor> l_contrast;
  std::optional<ad::Tensor> l_orig_rec;
  std::optional<ad::Tensor> l_pseudo_rec;
};

struct TotalLoss {
  ad::Tensor total;
  LossReport report;
};

// alpha_w * L_W + beta_c * L_contrast + (L_orig + L_pseudo) / 2.
TotalLoss total_loss(ad::Tape& tape, const LossTerms& terms, const LossConfig& cfg);
LossReport total_loss(double l_w, double l_contrast, double l_orig, double l_pseudo,
                      const LossConfig& cfg);

// `step,l_w,l_contrast,l_orig_rec,l_pseudo_rec,total`
void write_loss_csv_header(std::ostream& out);
void write_loss_csv_row(std::ostream& out, std::size_t step, const LossReport& r);

}  // namespace itimer
