#include "itimer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "itimer/errors.hpp"

namespace itimer {

// --- variants -----------------------------------------------------------------------

VariantSpec VariantSpec::parse(const std::string& raw) {
  std::string s;
  for (char ch : raw) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (s == "full" || s == "itimer") return {Variant::Full};
  if (s == "random") return {Variant::Random};
  if (s == "constant") return {Variant::Constant};
  if (s == "only_error") return {Variant::OnlyError};
  if (s == "zero") return {Variant::Zero};
  if (s == "mean") return {Variant::Mean};
  if (s == "no_w") return {Variant::NoW};
  if (s == "no_contrast") return {Variant::NoContrast};
  if (s == "baseline") return {Variant::Baseline};
  if (s == "mave") return {Variant::MAve, 5};
  if (s.rfind("mave(", 0) == 0 && s.back() == ')') {
    const std::string inner = s.substr(5, s.size() - 6);
    try {
      std::size_t used = 0;
      const int w = std::stoi(inner, &used);
      if (used == inner.size() && w >= 1) return {Variant::MAve, w};
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown variant '" + raw + "'");
}

std::string VariantSpec::str() const {
  switch (kind) {
    case Variant::Full: return "full";
    case Variant::Random: return "random";
    case Variant::Constant: return "constant";
    case Variant::OnlyError: return "only_error";
    case Variant::Zero: return "zero";
    case Variant::Mean: return "mean";
    case Variant::MAve: return "mave(" + std::to_string(window) + ")";
    case Variant::NoW: return "no_w";
    case Variant::NoContrast: return "no_contrast";
    case Variant::Baseline: return "baseline";
  }
  return "?";
}

std::vector<VariantSpec> ablation_grid() {
  return {{Variant::Baseline}, {Variant::Random},    {Variant::Constant},
          {Variant::OnlyError}, {Variant::Zero},     {Variant::Mean},
          {Variant::MAve, 5},   {Variant::NoW},      {Variant::NoContrast},
          {Variant::Full}};
}

void TrainConfig::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  mix.validate();
  loss.validate();
  if (anchor.kind == AnchorStrategy::Kind::MovingAverage && anchor.window < 1) {
    throw ConfigError("moving-average window must be >= 1");
  }
}

TrainConfig apply_variant(TrainConfig cfg) {
  switch (cfg.variant.kind) {
    case Variant::OnlyError:
      cfg.mix.per_cell_uniform = false;
      cfg.mix.alpha = 0.0;
      break;
    case Variant::Zero: cfg.anchor = AnchorStrategy::zero(); break;
    case Variant::Mean: cfg.anchor = AnchorStrategy::global_mean(); break;
    case Variant::MAve: cfg.anchor = AnchorStrategy::moving_average(cfg.variant.window); break;
    case Variant::NoW: cfg.loss.enable_w = false; break;
    case Variant::NoContrast: cfg.loss.enable_contrast = false; break;
    case Variant::Baseline:
      cfg.loss.enable_w = false;
      cfg.loss.enable_contrast = false;
      break;
    default: break;
  }
  return cfg;
}

// --- optimizer ------------------------------------------------------------------------

void adam_update(AdamState& opt, ModelParams& params, const std::map<std::string, Matrix>& grads) {
  ++opt.t;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  for (auto& [name, w] : params.tensors) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Matrix& g = git->second;
    auto& m = opt.m.try_emplace(name, w.shape()).first->second;
    auto& v = opt.v.try_emplace(name, w.shape()).first->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

ModelState init_state(const EncoderConfig& enc, const TrainConfig& cfg) {
  cfg.validate();
  ModelState s;
  s.encoder = enc;
  s.params = init_params(enc);
  s.optimizer.learning_rate = cfg.learning_rate;
  for (const auto& [name, w] : s.params.tensors) {
    s.optimizer.m.emplace(name, Matrix(w.shape()));
    s.optimizer.v.emplace(name, Matrix(w.shape()));
  }
  s.stats = ErrorStats::prior(enc.channels, cfg.rho);
  s.rng = Rng(mix_seed(cfg.seed, 0x5A3D));
  return s;
}

// --- one step -------------------------------------------------------------------------

namespace {

struct StepGraph {
  TotalLoss loss;
};

// Builds the full per-batch graph on `tape`, updating `stats` and `rng` in
// place exactly as a real step would.
StepGraph build_step(ad::Tape& tape, const BoundParams& p, const EncoderConfig& enc,
                     ErrorStats& stats, Rng& rng, std::span<const IrregularSeries> batch,
                     const TrainConfig& cfg) {
  const std::size_t B = batch.size();
  std::vector<ad::Tensor> reps, recs;
  std::vector<Matrix> rec_values, xs;
  std::vector<Mask> masks;
  reps.reserve(B);
  recs.reserve(B);
  for (const auto& s : batch) {
    auto r = encode(tape, p, enc, s);
    auto xh = decode(tape, p, enc, r, s.timestamps);
    reps.push_back(r);
    recs.push_back(xh);
    rec_values.push_back(xh.value());
    xs.push_back(s.values);
    masks.push_back(s.mask);
  }

  // Statistics of the observed-cell error, then momentum.
  for (const auto& m : rec_values) {
    for (double v : m.data())
      if (!std::isfinite(v)) throw NumericalAbort("non-finite reconstruction in forward pass");
  }
  const auto bs = compute_batch_error_stats(batch, rec_values, cfg.stats_mode);
  stats = momentum_update(std::move(stats), bs.mu, bs.sigma, bs.present);

  LossTerms terms;
  terms.l_orig_rec = masked_reconstruction_loss(tape, xs, recs, masks, cfg.loss.reduce).value;

  if (cfg.variant.kind != Variant::Baseline) {
    std::vector<PseudoSeries> pseudo;
    pseudo.reserve(B);
    for (const auto& s : batch) {
      switch (cfg.variant.kind) {
        case Variant::Random: pseudo.push_back(fill_uniform(s, rng)); break;
        case Variant::Constant: pseudo.push_back(fill_constant(s)); break;
        default: pseudo.push_back(synthesize_pseudo(s, stats, cfg.mix, cfg.anchor, rng)); break;
      }
    }
    std::vector<ad::Tensor> reps_p, recs_p;
    std::vector<Matrix> xs_p;
    std::vector<Mask> masks_p;
    for (std::size_t b = 0; b < B; ++b) {
      auto r = encode(tape, p, enc, pseudo[b].as_complete());
      reps_p.push_back(r);
      recs_p.push_back(decode(tape, p, enc, r, pseudo[b].timestamps));
      xs_p.push_back(pseudo[b].values);
      if (cfg.loss.pseudo_rec_mask == PseudoRecMask::Observed) {
        masks_p.push_back(pseudo[b].source_mask);
      } else {
        Mask inv = pseudo[b].source_mask;
        for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = inv[i] ? 0 : 1;
        masks_p.push_back(std::move(inv));
      }
    }
    terms.l_pseudo_rec = masked_reconstruction_loss(tape, xs_p, recs_p, masks_p, cfg.loss.reduce).value;

    if (cfg.loss.enable_w) {
      const auto ps = compute_pseudo_error_stats(tape, pseudo, recs_p, cfg.stats_mode);
      if (!ps.empty()) {
        Matrix mu_r(1, ps.variables.size()), sd_r(1, ps.variables.size());
        for (std::size_t k = 0; k < ps.variables.size(); ++k) {
          mu_r[k] = stats.mu[ps.variables[k]];
          sd_r[k] = stats.sigma[ps.variables[k]];
        }
        terms.l_w = wasserstein2_gaussian(tape.constant(std::move(mu_r)), tape.constant(std::move(sd_r)),
                                          ps.mu, ps.sigma);
      }
    }
    if (cfg.loss.enable_contrast) terms.l_contrast = contrastive_loss(reps, reps_p, cfg.loss);
  }
  return {total_loss(tape, terms, cfg.loss)};
}

std::map<std::string, Matrix> collect_grads(const ad::Gradients& g, const BoundParams& p) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, t] : p.all()) out.emplace(name, g[t]);
  return out;
}

}  // namespace

LossReport pretrain_step(ModelState& state, std::span<const IrregularSeries> batch,
                         const TrainConfig& raw_cfg, std::size_t batch_id) {
  if (batch.empty()) throw ContractError("pretrain_step: empty batch");
  const TrainConfig cfg = apply_variant(raw_cfg);
  cfg.validate();
  if (state.stats.rho != cfg.rho) state.stats.rho = cfg.rho;

  ad::Tape tape;
  BoundParams p(tape, state.params, true);
  auto g = build_step(tape, p, state.encoder, state.stats, state.rng, batch, cfg);
  const LossReport rep = g.loss.report;
  if (!rep.finite() || !std::isfinite(g.loss.total.item())) {
    throw NumericalAbort("non-finite loss at step " + std::to_string(state.step) + ", batch " +
                         std::to_string(batch_id) + ": " + rep.str());
  }
  const auto grads = collect_grads(tape.backward(g.loss.total), p);
  state.optimizer.learning_rate = cfg.learning_rate;
  adam_update(state.optimizer, state.params, grads);
  ++state.step;
  return rep;
}

std::map<std::string, Matrix> loss_gradients(const ModelState& state,
                                             std::span<const IrregularSeries> batch,
                                             const TrainConfig& raw_cfg, LossReport* report) {
  const TrainConfig cfg = apply_variant(raw_cfg);
  ErrorStats stats = state.stats;
  Rng rng = state.rng;
  ad::Tape tape;
  BoundParams p(tape, state.params, true);
  auto g = build_step(tape, p, state.encoder, stats, rng, batch, cfg);
  if (report) *report = g.loss.report;
  return collect_grads(tape.backward(g.loss.total), p);
}

// --- loop -------------------------------------------------------------------------------

std::size_t steps_per_epoch(std::size_t n_train, std::size_t batch_size) {
  return (n_train + batch_size - 1) / batch_size;
}

std::vector<std::size_t> epoch_order(std::size_t n_train, std::size_t epoch, std::uint64_t seed) {
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0xE0C0 + epoch));
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

PretrainResult pretrain(const Dataset& ds, const EncoderConfig& enc, const TrainConfig& cfg,
                        const PretrainOptions& opts) {
  cfg.validate();
  const auto train = ds.subset(SplitTag::Train);
  if (train.empty()) throw ContractError("pretrain: empty training split");
  if (train.front().channels() != enc.channels) {
    throw ShapeError("pretrain: dataset has " + std::to_string(train.front().channels()) +
                     " variables, encoder expects " + std::to_string(enc.channels));
  }

  PretrainResult res{opts.resume ? *opts.resume : init_state(enc, cfg), {}};
  const std::size_t spe = steps_per_epoch(train.size(), cfg.batch_size);
  std::uint64_t end = static_cast<std::uint64_t>(cfg.epochs * spe);
  if (cfg.max_steps > 0) end = std::min<std::uint64_t>(end, cfg.max_steps);

  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  std::vector<IrregularSeries> batch;
  while (res.state.step < end) {
    const std::size_t epoch = static_cast<std::size_t>(res.state.step / spe);
    const std::size_t k = static_cast<std::size_t>(res.state.step % spe);
    if (epoch != order_epoch) {
      order = epoch_order(train.size(), epoch, cfg.seed);
      order_epoch = epoch;
    }
    batch.clear();
    for (std::size_t i = k * cfg.batch_size; i < std::min(train.size(), (k + 1) * cfg.batch_size); ++i) {
      batch.push_back(train[order[i]]);
    }
    const auto step = res.state.step;
    const LossReport rep = pretrain_step(res.state, batch, cfg, k);
    res.history.push_back(rep);
    if (opts.loss_csv) write_loss_csv_row(*opts.loss_csv, static_cast<std::size_t>(step), rep);
    if (!opts.epoch_checkpoint_dir.empty() && res.state.step % spe == 0) {
      save_checkpoint({kCheckpointVersion, res.state, opts.meta},
                      opts.epoch_checkpoint_dir / ("epoch_" + std::to_string(res.state.step / spe) + ".ckpt"));
    }
  }
  return res;
}

}  // namespace itimer
