#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "itimer/errors.hpp"
#include "itimer/losses.hpp"
#include "support.hpp"

using namespace itimer;
using Leaves = std::vector<ad::Tensor>;

namespace {

// Direct double loop over normalized flattened representations.
double contrastive_oracle(const std::vector<Matrix>& r, const std::vector<Matrix>& rt, double temp,
                          std::vector<double>* per_instance = nullptr) {
  auto unit = [](const Matrix& m) {
    double n = 0.0;
    for (double v : m.data()) n += v * v;
    std::vector<double> u(m.data().begin(), m.data().end());
    for (double& v : u) v /= std::sqrt(n);
    return u;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto zi = unit(r[i]);
    const double pos = std::exp(dot(zi, unit(rt[i])) / temp);
    double denom = pos;
    for (std::size_t j = 0; j < r.size(); ++j)
      if (j != i) denom += std::exp(dot(zi, unit(r[j])) / temp);
    loss += -std::log(pos / denom);
    if (per_instance) per_instance->push_back(-std::log(pos / denom));
  }
  return loss;
}

double contrastive_value(const std::vector<Matrix>& r, const std::vector<Matrix>& rt, const LossConfig& cfg) {
  ad::Tape tape;
  Leaves a, b;
  for (const auto& m : r) a.push_back(tape.leaf(m));
  for (const auto& m : rt) b.push_back(tape.leaf(m));
  return contrastive_loss(a, b, cfg).item();
}

std::vector<Matrix> random_batch(std::size_t n, std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(test::random_matrix(rows, cols, rng));
  return out;
}

}  // namespace

TEST_CASE("closed-form W2 agrees with a sorted-sample coupling estimate") {
  std::mt19937_64 gen(11);
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const double m1 = rng.uniform(-1, 1), m2 = rng.uniform(-1, 1);
    const double s1 = rng.uniform(0.2, 2), s2 = rng.uniform(0.2, 2);
    const int n = 100000;
    std::vector<double> x(n), y(n);
    std::normal_distribution<double> d1(m1, s1), d2(m2, s2);
    for (int i = 0; i < n; ++i) {
      x[i] = d1(gen);
      y[i] = d2(gen);
    }
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double mc = 0.0;
    for (int i = 0; i < n; ++i) mc += (x[i] - y[i]) * (x[i] - y[i]);
    mc /= n;
    const double mr[] = {m1}, sr[] = {s1}, mp[] = {m2}, sp[] = {s2};
    const double closed = wasserstein2_gaussian(mr, sr, mp, sp);
    CHECK(closed == doctest::Approx((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2)).epsilon(1e-15));
    CHECK(mc == doctest::Approx(closed).epsilon(0.03));
  }
}

TEST_CASE("W2 tensor form matches the scalar form and differentiates") {
  Rng rng(13);
  const Matrix a = test::random_matrix(1, 4, rng), b = test::random_matrix(1, 4, rng, 0.1, 1);
  const Matrix c = test::random_matrix(1, 4, rng), d = test::random_matrix(1, 4, rng, 0.1, 1);
  ad::Tape tape;
  const double t = wasserstein2_gaussian(tape.leaf(a), tape.leaf(b), tape.leaf(c), tape.leaf(d)).item();
  CHECK(t == doctest::Approx(wasserstein2_gaussian(a.data(), b.data(), c.data(), d.data())).epsilon(1e-15));
  CHECK(wasserstein2_gaussian(a.data(), b.data(), a.data(), b.data()) == 0.0);
  const auto res = test::check_gradients(
      [](ad::Tape&, const Leaves& x) { return wasserstein2_gaussian(x[0], x[1], x[2], x[3]); }, {a, b, c, d});
  CHECK(res.max_rel < 1e-8);
  CHECK_THROWS_AS(wasserstein2_gaussian(tape.leaf(a), tape.leaf(Matrix(1, 3)), tape.leaf(c), tape.leaf(d)),
                  ShapeError);
}

TEST_CASE("contrastive sanity values") {
  Rng rng(14);
  LossConfig cfg;
  const auto one = random_batch(1, 2, 3, rng);
  CHECK(contrastive_value(one, random_batch(1, 2, 3, rng), cfg) == doctest::Approx(0.0).epsilon(1e-12));

  cfg.temperature = 1.0;
  const Matrix same = test::random_matrix(2, 3, rng);
  const std::vector<Matrix> four(4, same);
  CHECK(std::abs(contrastive_value(four, four, cfg) - 4.0 * std::log(4.0)) < 1e-9);
}

TEST_CASE("contrastive loss equals the double-loop oracle") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 2 + rng.index(5);
    LossConfig cfg;
    cfg.temperature = rng.uniform(0.1, 2.0);
    const auto r = random_batch(b, 3, 2, rng), rt = random_batch(b, 3, 2, rng);
    CHECK(std::abs(contrastive_value(r, rt, cfg) - contrastive_oracle(r, rt, cfg.temperature)) < 1e-10);
  }
}

TEST_CASE("contrastive loss is invariant to a shared permutation and non-negative per instance") {
  Rng rng(16);
  LossConfig cfg;
  auto r = random_batch(5, 2, 2, rng), rt = random_batch(5, 2, 2, rng);
  const double base = contrastive_value(r, rt, cfg);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<Matrix> pr, prt;
  for (auto k : perm) {
    pr.push_back(r[k]);
    prt.push_back(rt[k]);
  }
  CHECK(contrastive_value(pr, prt, cfg) == doctest::Approx(base).epsilon(1e-13));
  std::vector<double> parts;
  contrastive_oracle(r, rt, cfg.temperature, &parts);
  for (double v : parts) CHECK(v >= 0.0);
}

TEST_CASE("literal form uses raw similarities in the denominator") {
  Rng rng(17);
  LossConfig cfg;
  cfg.contrastive_form = ContrastiveForm::Literal;
  cfg.temperature = 1.0;
  const Matrix same = test::random_matrix(2, 2, rng);
  const std::vector<Matrix> three(3, same);
  // Every similarity is 1: per instance log(3 * 1 + 2 * 1) - 1.
  CHECK(contrastive_value(three, three, cfg) == doctest::Approx(3.0 * (std::log(5.0) - 1.0)).epsilon(1e-12));
}

TEST_CASE("contrastive gradients match finite differences") {
  Rng rng(18);
  for (auto form : {ContrastiveForm::Exp, ContrastiveForm::Literal}) {
    LossConfig cfg;
    cfg.contrastive_form = form;
    std::vector<Matrix> in = random_batch(6, 2, 3, rng);
    if (form == ContrastiveForm::Literal) {
      // Keep the raw denominator well away from its clamp.
      for (auto& m : in)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::abs(m[i]) + 0.5;
    }
    const auto res = test::check_gradients(
        [&cfg](ad::Tape&, const Leaves& x) {
          return contrastive_loss(std::span(x.data(), 3), std::span(x.data() + 3, 3), cfg);
        },
        in);
    CHECK(res.max_rel < 1e-6);
  }
}

TEST_CASE("masked reconstruction loss matches a flat loop") {
  Rng rng(19);
  std::vector<Matrix> x, xh;
  std::vector<Mask> m;
  double sq = 0.0;
  std::size_t n = 0;
  for (int b = 0; b < 4; ++b) {
    const auto s = test::random_series(3 + rng.index(4), 2, 0.5, rng);
    x.push_back(s.values);
    m.push_back(s.mask);
    xh.push_back(test::random_matrix(s.length(), 2, rng));
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      if (s.mask[i]) {
        sq += (s.values[i] - xh.back()[i]) * (s.values[i] - xh.back()[i]);
        ++n;
      }
  }
  ad::Tape tape;
  Leaves leaves;
  for (const auto& v : xh) leaves.push_back(tape.leaf(v));
  const auto mean = masked_reconstruction_loss(tape, x, leaves, m);
  const auto sum = masked_reconstruction_loss(tape, x, leaves, m, ReconstructionReduce::Sum);
  CHECK(mean.support == n);
  CHECK(mean.value.item() == doctest::Approx(sq / static_cast<double>(n)).epsilon(1e-13));
  CHECK(sum.value.item() == doctest::Approx(sq).epsilon(1e-13));

  const auto res = test::check_gradients(
      [&](ad::Tape& t, const Leaves& v) { return masked_reconstruction_loss(t, x, v, m).value; }, xh);
  CHECK(res.max_rel < 1e-8);

  std::vector<Mask> none;
  for (const auto& mm : m) none.emplace_back(mm.shape());
  const auto empty = masked_reconstruction_loss(tape, x, leaves, none);
  CHECK(empty.empty());
  CHECK(empty.value.item() == 0.0);
}

TEST_CASE("total loss combines the weighted terms") {
  LossConfig cfg;
  cfg.alpha_w = 2.0;
  cfg.beta_c = 0.25;
  const auto r = total_loss(1.0, 4.0, 0.6, 0.2, cfg);
  CHECK(r.total == doctest::Approx(2.0 + 1.0 + 0.4).epsilon(1e-15));
  cfg.enable_w = false;
  cfg.enable_contrast = false;
  const auto r2 = total_loss(1.0, 4.0, 0.6, 0.2, cfg);
  CHECK(r2.l_w == 0.0);
  CHECK(r2.l_contrast == 0.0);
  CHECK(r2.total == doctest::Approx(0.4).epsilon(1e-15));

  ad::Tape tape;
  LossTerms terms;
  terms.l_w = tape.leaf(Matrix::scalar(1.5));
  terms.l_orig_rec = tape.leaf(Matrix::scalar(0.5));
  LossConfig c2;
  const auto t = total_loss(tape, terms, c2);
  CHECK(t.total.item() == doctest::Approx(1.5 + 0.25));
  CHECK(t.report.l_contrast == 0.0);
  CHECK(t.report.total == doctest::Approx(t.total.item()).epsilon(1e-15));
  const auto g = tape.backward(t.total);
  CHECK(g[*terms.l_w].item() == 1.0);
  CHECK(g[*terms.l_orig_rec].item() == 0.5);

  LossConfig bad;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.beta_c = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("loss CSV rows round-trip exactly") {
  LossReport r{0.1, 1.0 / 3.0, 2e-17, 5.0, 7.25};
  std::ostringstream out;
  write_loss_csv_header(out);
  write_loss_csv_row(out, 12, r);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "step,l_w,l_contrast,l_orig_rec,l_pseudo_rec,total");
  std::vector<double> vals;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
  REQUIRE(vals.size() == 6);
  CHECK(vals[0] == 12);
  CHECK(vals[2] == r.l_contrast);
  CHECK(vals[3] == r.l_orig_rec);
}
