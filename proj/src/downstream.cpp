#include "itimer/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <numeric>

#include "itimer/errors.hpp"

namespace itimer {

// --- metrics ----------------------------------------------------------------------------

namespace {

void check_pair(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw MetricError(std::string(what) + ": empty input");
  if (a != b) throw MetricError(std::string(what) + ": length mismatch");
}

void check_both_classes(std::span<const int> labels, const char* what) {
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y == 1) pos = true;
    else if (y == 0) neg = true;
    else throw MetricError(std::string(what) + ": labels must be 0 or 1");
  }
  if (!pos || !neg) throw MetricError(std::string(what) + ": both classes must be present");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores.size(), labels.size(), "auroc");
  check_both_classes(labels, "auroc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mid-ranks give ties half credit.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        pos_rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double q = static_cast<double>(n - n_pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores.size(), labels.size(), "auprc");
  check_both_classes(labels, "auprc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double r = tp / total_pos;
    area += (r - prev_recall) * (tp / (tp + fp));
    prev_recall = r;
    i = j;
  }
  return area;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  check_pair(preds.size(), labels.size(), "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

namespace {

struct Confusion {
  double tp = 0, fp = 0, fn = 0;
};

Confusion confusion(std::span<const int> preds, std::span<const int> labels, int positive,
                    const char* what) {
  check_pair(preds.size(), labels.size(), what);
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive, y = labels[i] == positive;
    if (p && y) c.tp += 1;
    if (p && !y) c.fp += 1;
    if (!p && y) c.fn += 1;
  }
  return c;
}

double ratio(double a, double b) { return b > 0 ? a / b : 0.0; }

}  // namespace

double precision(std::span<const int> preds, std::span<const int> labels, int positive) {
  const auto c = confusion(preds, labels, positive, "precision");
  return ratio(c.tp, c.tp + c.fp);
}

double recall(std::span<const int> preds, std::span<const int> labels, int positive) {
  const auto c = confusion(preds, labels, positive, "recall");
  return ratio(c.tp, c.tp + c.fn);
}

double f1(std::span<const int> preds, std::span<const int> labels, int positive) {
  const auto c = confusion(preds, labels, positive, "f1");
  return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
}

namespace {

template <class F>
double masked_mean(const Matrix& preds, const Matrix& targets, const Mask& support, F f, const char* what) {
  if (!(preds.shape() == targets.shape()) || !(preds.shape() == support.shape())) {
    throw MetricError(std::string(what) + ": shapes " + preds.shape().str() + ", " +
                      targets.shape().str() + ", " + support.shape().str());
  }
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!support[i]) continue;
    s += f(preds[i] - targets[i]);
    ++n;
  }
  if (n == 0) throw MetricError(std::string(what) + ": empty support");
  return s / static_cast<double>(n);
}

}  // namespace

double mse(const Matrix& preds, const Matrix& targets, const Mask& support) {
  return masked_mean(preds, targets, support, [](double d) { return d * d; }, "mse");
}

double mae(const Matrix& preds, const Matrix& targets, const Mask& support) {
  return masked_mean(preds, targets, support, [](double d) { return std::abs(d); }, "mae");
}

// --- task plumbing -------------------------------------------------------------------------

TaskKind parse_task_kind(const std::string& s) {
  if (s == "classification") return TaskKind::Classification;
  if (s == "interpolation") return TaskKind::Interpolation;
  if (s == "forecasting") return TaskKind::Forecasting;
  throw ConfigError("unknown task '" + s + "'");
}

FinetuneMode parse_finetune_mode(const std::string& s) {
  if (s == "linear_probe") return FinetuneMode::LinearProbe;
  if (s == "full_finetune") return FinetuneMode::FullFinetune;
  throw ConfigError("unknown fine-tune mode '" + s + "'");
}

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Classification: return "classification";
    case TaskKind::Interpolation: return "interpolation";
    case TaskKind::Forecasting: return "forecasting";
  }
  return "?";
}

const char* to_string(FinetuneMode m) {
  return m == FinetuneMode::LinearProbe ? "linear_probe" : "full_finetune";
}

void TaskSpec::validate() const {
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) throw ConfigError("mask fraction must lie in (0, 1)");
  if (!(split_point > 0.0 && split_point < 1.0)) throw ConfigError("split point must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(head_learning_rate > 0.0) || !(finetune_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = to_string(task);
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [name, s] : metrics) {
    m[name] = {{"mean", s.mean}, {"std", s.std}, {"per_seed", s.per_seed}};
  }
  j["metrics"] = m;
  j["excluded"] = excluded;
  j["config_echo"] = nlohmann::ordered_json::parse(config_echo);
  return j.dump(2) + "\n";
}

MetricsReport summarize(TaskKind task, std::span<const SeedMetrics> runs, std::string config_echo) {
  MetricsReport r;
  r.task = task;
  r.config_echo = std::move(config_echo);
  for (const auto& run : runs) {
    r.excluded.push_back(run.excluded);
    for (const auto& [name, v] : run.values) r.metrics[name].per_seed.push_back(v);
  }
  for (auto& [name, s] : r.metrics) {
    const double n = static_cast<double>(s.per_seed.size());
    s.mean = std::accumulate(s.per_seed.begin(), s.per_seed.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s.per_seed) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / n);
  }
  return r;
}

// --- holdouts -------------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Mask interpolation_holdout(const IrregularSeries& s, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < s.mask.size(); ++i) {
    if (s.mask[i]) cells.push_back(i);
  }
  Mask hidden(s.mask.shape());
  if (cells.empty()) return hidden;
  const auto k = std::min(cells.size(),
                          std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * cells.size()))));
  Rng rng(mix_seed(seed, fnv1a(s.id)));
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(cells[i], cells[i + rng.index(cells.size() - i)]);
    hidden[cells[i]] = 1;
  }
  return hidden;
}

IrregularSeries hide_cells(const IrregularSeries& s, const Mask& hidden) {
  if (!(hidden.shape() == s.mask.shape())) throw ShapeError("hide_cells: mask shape mismatch");
  IrregularSeries v = s;
  for (std::size_t i = 0; i < v.mask.size(); ++i) {
    if (hidden[i]) {
      v.mask[i] = 0;
      v.values[i] = 0.0;
    }
  }
  return v;
}

double forecast_cut(const IrregularSeries& s, double fraction) {
  if (s.timestamps.empty()) return 0.0;
  return s.timestamps.front() + fraction * (s.timestamps.back() - s.timestamps.front());
}

std::pair<Mask, Mask> forecast_masks(const IrregularSeries& s, double cut) {
  Mask before(s.mask.shape()), after(s.mask.shape());
  for (std::size_t t = 0; t < s.length(); ++t) {
    for (std::size_t c = 0; c < s.channels(); ++c) {
      if (!s.mask(t, c)) continue;
      (s.timestamps[t] <= cut ? before : after)(t, c) = 1;
    }
  }
  return {before, after};
}

// --- predictors ------------------------------------------------------------------------------

Predictor model_predictor(const ModelParams& params, const EncoderConfig& enc) {
  return [&params, enc](const IrregularSeries& visible, std::span<const double> times) {
    return reconstruct(params, enc, visible, times);
  };
}

Predictor visible_mean_predictor() {
  return [](const IrregularSeries& v, std::span<const double> times) {
    Matrix out(times.size(), v.channels());
    for (std::size_t c = 0; c < v.channels(); ++c) {
      double s = 0.0;
      std::size_t n = 0;
      for (std::size_t t = 0; t < v.length(); ++t) {
        if (v.mask(t, c)) {
          s += v.values(t, c);
          ++n;
        }
      }
      const double m = n ? s / static_cast<double>(n) : 0.0;
      for (std::size_t r = 0; r < times.size(); ++r) out(r, c) = m;
    }
    return out;
  };
}

Predictor locf_predictor() {
  return [](const IrregularSeries& v, std::span<const double> times) {
    Matrix out(times.size(), v.channels());
    for (std::size_t c = 0; c < v.channels(); ++c) {
      for (std::size_t r = 0; r < times.size(); ++r) {
        bool found = false;
        double val = 0.0;
        for (std::size_t t = 0; t < v.length() && v.timestamps[t] <= times[r]; ++t) {
          if (v.mask(t, c)) {
            val = v.values(t, c);
            found = true;
          }
        }
        for (std::size_t t = 0; !found && t < v.length(); ++t) {
          if (v.mask(t, c)) {
            val = v.values(t, c);
            found = true;
          }
        }
        out(r, c) = val;
      }
    }
    return out;
  };
}

// --- regression harnesses --------------------------------------------------------------------

namespace {

void check_compatible(const Checkpoint& ckpt, const Dataset& ds) {
  if (ds.size() > 0 && ds.channels() != ckpt.state.encoder.channels) {
    throw ShapeError("checkpoint expects " + std::to_string(ckpt.state.encoder.channels) +
                     " variables but the dataset has " + std::to_string(ds.channels()));
  }
}

// An instance prepared for a regression task: what the encoder sees, the
// times to query, and the cells scored at those times.
struct View {
  IrregularSeries visible;
  std::vector<double> times;
  Matrix targets;
  Mask support;
  bool usable = false;
};

View interpolation_view(const IrregularSeries& s, const TaskSpec& spec, std::uint64_t seed) {
  View v;
  if (s.observed() < 4) return v;
  const Mask hidden = interpolation_holdout(s, spec.mask_fraction, seed);
  v.visible = hide_cells(s, hidden);
  v.times = s.timestamps;
  v.targets = s.values;
  v.support = hidden;
  v.usable = true;
  return v;
}

View forecasting_view(const IrregularSeries& s, const TaskSpec& spec) {
  View v;
  const auto [before, after] = forecast_masks(s, forecast_cut(s, spec.split_point));
  if (before.count() == 0 || after.count() == 0) return v;
  v.visible = hide_cells(s, after);
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < s.length(); ++t) {
    for (std::size_t c = 0; c < s.channels(); ++c) {
      if (after(t, c)) {
        rows.push_back(t);
        break;
      }
    }
  }
  v.targets = Matrix(rows.size(), s.channels());
  v.support = Mask(rows.size(), s.channels());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    v.times.push_back(s.timestamps[rows[r]]);
    for (std::size_t c = 0; c < s.channels(); ++c) {
      v.targets(r, c) = s.values(rows[r], c);
      v.support(r, c) = after(rows[r], c);
    }
  }
  v.usable = true;
  return v;
}

// Predictions run in parallel across instances; the error sums are reduced
// serially in instance order so the result does not depend on threading.
SeedMetrics score_views(const Predictor& predict, const std::vector<View>& views) {
  std::vector<Matrix> preds(views.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(views.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const View& v = views[static_cast<std::size_t>(i)];
    if (!v.usable) continue;
    try {
      preds[static_cast<std::size_t>(i)] = predict(v.visible, v.times);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  SeedMetrics out;
  double se = 0.0, ae = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const View& v = views[i];
    if (!v.usable) {
      ++out.excluded;
      continue;
    }
    if (!(preds[i].shape() == v.targets.shape())) {
      throw ShapeError("predictor returned " + preds[i].shape().str() + ", expected " + v.targets.shape().str());
    }
    for (std::size_t k = 0; k < v.targets.size(); ++k) {
      if (!v.support[k]) continue;
      const double d = preds[i][k] - v.targets[k];
      se += d * d;
      ae += std::abs(d);
      ++cells;
    }
  }
  if (cells == 0) throw TaskError("no scorable cells in the test split");
  out.values["mse"] = se / static_cast<double>(cells);
  out.values["mae"] = ae / static_cast<double>(cells);
  return out;
}

std::vector<IrregularSeries> test_split(const Dataset& ds) {
  auto test = ds.subset(SplitTag::Test);
  if (test.empty()) throw TaskError("empty test split");
  return test;
}

}  // namespace

SeedMetrics run_interpolation(const Predictor& predict, const Dataset& ds, const TaskSpec& spec) {
  spec.validate();
  std::vector<View> views;
  for (const auto& s : test_split(ds)) views.push_back(interpolation_view(s, spec, spec.seed));
  return score_views(predict, views);
}

SeedMetrics run_forecasting(const Predictor& predict, const Dataset& ds, const TaskSpec& spec) {
  spec.validate();
  std::vector<View> views;
  for (const auto& s : test_split(ds)) views.push_back(forecasting_view(s, spec));
  return score_views(predict, views);
}

// --- fine-tuning --------------------------------------------------------------------------------

namespace {

using ViewFn = std::function<View(const IrregularSeries&, std::size_t epoch)>;

// Trains every encoder/decoder weight on the train split to reconstruct the
// supported cells of each view.
ModelParams finetune_reconstruction(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec,
                                    const ViewFn& make_view) {
  ModelParams params = ckpt.state.params;
  const EncoderConfig& enc = ckpt.state.encoder;
  const auto train = ds.subset(SplitTag::Train);
  AdamState opt;
  opt.learning_rate = spec.finetune_learning_rate;
  for (std::size_t epoch = 0; epoch < spec.finetune_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), epoch, mix_seed(spec.seed, 0xF17E));
    for (std::size_t b0 = 0; b0 < order.size(); b0 += spec.batch_size) {
      ad::Tape tape;
      BoundParams p(tape, params, true);
      std::vector<Matrix> xs;
      std::vector<ad::Tensor> preds;
      std::vector<Mask> masks;
      for (std::size_t i = b0; i < std::min(order.size(), b0 + spec.batch_size); ++i) {
        View v = make_view(train[order[i]], epoch);
        if (!v.usable) continue;
        preds.push_back(decode(tape, p, enc, encode(tape, p, enc, v.visible), v.times));
        xs.push_back(std::move(v.targets));
        masks.push_back(std::move(v.support));
      }
      if (preds.empty()) continue;
      const auto loss = masked_reconstruction_loss(tape, xs, preds, masks);
      if (loss.empty()) continue;
      if (!std::isfinite(loss.value.item())) throw NumericalAbort("non-finite fine-tuning loss");
      const auto g = tape.backward(loss.value);
      std::map<std::string, Matrix> grads;
      for (const auto& [name, t] : p.all()) grads.emplace(name, g[t]);
      adam_update(opt, params, grads);
    }
  }
  return params;
}

}  // namespace

SeedMetrics eval_interpolation(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec) {
  spec.validate();
  check_compatible(ckpt, ds);
  ModelParams params = ckpt.state.params;
  if (spec.mode == FinetuneMode::FullFinetune) {
    params = finetune_reconstruction(ckpt, ds, spec, [&](const IrregularSeries& s, std::size_t epoch) {
      return interpolation_view(s, spec, mix_seed(spec.seed, 0x1000 + epoch));
    });
  }
  return run_interpolation(model_predictor(params, ckpt.state.encoder), ds, spec);
}

SeedMetrics eval_forecasting(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec) {
  spec.validate();
  check_compatible(ckpt, ds);
  ModelParams params = ckpt.state.params;
  if (spec.mode == FinetuneMode::FullFinetune) {
    params = finetune_reconstruction(ckpt, ds, spec,
                                     [&](const IrregularSeries& s, std::size_t) { return forecasting_view(s, spec); });
  }
  return run_forecasting(model_predictor(params, ckpt.state.encoder), ds, spec);
}

// --- classification --------------------------------------------------------------------------

namespace {

ad::Tensor pool(const ad::Tensor& rep) {
  return ad::scale(ad::sum_rows(rep), 1.0 / static_cast<double>(rep.rows()));
}

std::vector<int> labels_of(std::span<const IrregularSeries> xs) {
  std::vector<int> y;
  for (const auto& s : xs) {
    if (!s.label) throw TaskError("labels required: instance '" + s.id + "' has no label");
    y.push_back(*s.label);
  }
  return y;
}

Matrix one_hot(std::span<const int> y, std::size_t k) {
  Matrix m(y.size(), k);
  for (std::size_t i = 0; i < y.size(); ++i) m(i, static_cast<std::size_t>(y[i])) = 1.0;
  return m;
}

// Mean cross-entropy of softmax(f W + b) against one-hot targets.
ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& f, const ad::Tensor& w, const ad::Tensor& b,
                         const Matrix& targets) {
  auto probs = ad::softmax_rows(ad::matmul(f, w) + b);
  const double scale = -1.0 / static_cast<double>(targets.rows());
  return ad::scale(ad::sum(ad::log(probs, /*clamp=*/true) * tape.constant(targets)), scale);
}

Matrix softmax(const Matrix& f, const Matrix& w, const Matrix& b) {
  ad::Tape tape;
  return ad::softmax_rows(ad::matmul(tape.constant(f), tape.constant(w)) + tape.constant(b)).value();
}

struct Head {
  Matrix w, b;
};

Head init_head(std::size_t d, std::size_t k, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x4EAD));
  const double bound = std::sqrt(6.0 / static_cast<double>(d + k));
  Head h{Matrix(d, k), Matrix(1, k)};
  for (std::size_t i = 0; i < h.w.size(); ++i) h.w[i] = rng.uniform(-bound, bound);
  return h;
}

SeedMetrics classification_metrics(const Matrix& probs, std::span<const int> y) {
  const std::size_t k = probs.cols();
  std::vector<int> preds(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (probs(i, c) > probs(i, best)) best = c;
    }
    preds[i] = static_cast<int>(best);
  }
  SeedMetrics out;
  out.values["accuracy"] = accuracy(preds, y);
  if (k == 2) {
    std::vector<double> s(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) s[i] = probs(i, 1);
    out.values["auroc"] = auroc(s, y);
    out.values["auprc"] = auprc(s, y);
    out.values["precision"] = precision(preds, y);
    out.values["recall"] = recall(preds, y);
    out.values["f1"] = f1(preds, y);
    return out;
  }
  // Macro average, one-vs-rest.
  double a = 0, ap = 0, p = 0, r = 0, f = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> s(y.size());
    std::vector<int> yc(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      s[i] = probs(i, c);
      yc[i] = y[i] == static_cast<int>(c);
    }
    a += auroc(s, yc);
    ap += auprc(s, yc);
    p += precision(preds, y, static_cast<int>(c));
    r += recall(preds, y, static_cast<int>(c));
    f += f1(preds, y, static_cast<int>(c));
  }
  const double kk = static_cast<double>(k);
  out.values["auroc"] = a / kk;
  out.values["auprc"] = ap / kk;
  out.values["precision"] = p / kk;
  out.values["recall"] = r / kk;
  out.values["f1"] = f / kk;
  return out;
}

}  // namespace

Matrix pooled_features(const ModelParams& params, const EncoderConfig& enc,
                       std::span<const IrregularSeries> xs) {
  Matrix out(xs.size(), enc.d_model);
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(xs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Matrix r = encode(params, enc, xs[static_cast<std::size_t>(i)]);
      for (std::size_t d = 0; d < r.cols(); ++d) {
        double s = 0.0;
        for (std::size_t t = 0; t < r.rows(); ++t) s += r(t, d);
        out(static_cast<std::size_t>(i), d) = s / static_cast<double>(r.rows());
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

SeedMetrics eval_classification(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec) {
  spec.validate();
  check_compatible(ckpt, ds);
  const EncoderConfig& enc = ckpt.state.encoder;
  const auto train = ds.subset(SplitTag::Train);
  const auto test = test_split(ds);
  const auto y_train = labels_of(train);
  const auto y_test = labels_of(test);
  int max_label = 0;
  for (int y : y_train) {
    if (y < 0) throw TaskError("labels must be nonnegative");
    max_label = std::max(max_label, y);
  }
  for (int y : y_test) {
    if (y < 0) throw TaskError("labels must be nonnegative");
    max_label = std::max(max_label, y);
  }
  if (std::all_of(y_train.begin(), y_train.end(), [&](int y) { return y == y_train.front(); })) {
    throw TaskError("training split contains a single class");
  }
  const auto k = static_cast<std::size_t>(max_label + 1);
  const Matrix targets = one_hot(y_train, k);
  Head head = init_head(enc.d_model, k, spec.seed);

  if (spec.mode == FinetuneMode::LinearProbe) {
    // Frozen features, standardized with train-split moments.
    Matrix f_train = pooled_features(ckpt.state.params, enc, train);
    Matrix f_test = pooled_features(ckpt.state.params, enc, test);
    for (std::size_t d = 0; d < f_train.cols(); ++d) {
      double m = 0.0, ss = 0.0;
      for (std::size_t i = 0; i < f_train.rows(); ++i) m += f_train(i, d);
      m /= static_cast<double>(f_train.rows());
      for (std::size_t i = 0; i < f_train.rows(); ++i) ss += (f_train(i, d) - m) * (f_train(i, d) - m);
      double sd = std::sqrt(ss / static_cast<double>(f_train.rows()));
      if (sd < 1e-12) sd = 1.0;
      for (std::size_t i = 0; i < f_train.rows(); ++i) f_train(i, d) = (f_train(i, d) - m) / sd;
      for (std::size_t i = 0; i < f_test.rows(); ++i) f_test(i, d) = (f_test(i, d) - m) / sd;
    }
    ModelParams hp;
    hp.tensors = {{"w", head.w}, {"b", head.b}};
    AdamState opt;
    opt.learning_rate = spec.head_learning_rate;
    for (std::size_t e = 0; e < spec.head_epochs; ++e) {
      ad::Tape tape;
      BoundParams p(tape, hp, true);
      auto loss = cross_entropy(tape, tape.constant(f_train), p["w"], p["b"], targets);
      const auto g = tape.backward(loss);
      adam_update(opt, hp, {{"w", g[p["w"]]}, {"b", g[p["b"]]}});
    }
    return classification_metrics(softmax(f_test, hp.at("w"), hp.at("b")), y_test);
  }

  // Full fine-tuning: encoder and head trained jointly on raw pooled features.
  ModelParams params = ckpt.state.params;
  params.tensors.emplace("head.w", head.w);
  params.tensors.emplace("head.b", head.b);
  AdamState opt;
  opt.learning_rate = spec.finetune_learning_rate;
  for (std::size_t epoch = 0; epoch < spec.finetune_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), epoch, mix_seed(spec.seed, 0xC1A5));
    for (std::size_t b0 = 0; b0 < order.size(); b0 += spec.batch_size) {
      ad::Tape tape;
      BoundParams p(tape, params, true);
      std::vector<ad::Tensor> rows;
      std::vector<int> yb;
      for (std::size_t i = b0; i < std::min(order.size(), b0 + spec.batch_size); ++i) {
        rows.push_back(pool(encode(tape, p, enc, train[order[i]])));
        yb.push_back(y_train[order[i]]);
      }
      auto f = rows.size() == 1 ? rows[0] : ad::concat(rows, ad::Axis::Rows);
      auto loss = cross_entropy(tape, f, p["head.w"], p["head.b"], one_hot(yb, k));
      if (!std::isfinite(loss.item())) throw NumericalAbort("non-finite fine-tuning loss");
      const auto g = tape.backward(loss);
      std::map<std::string, Matrix> grads;
      for (const auto& [name, t] : p.all()) grads.emplace(name, g[t]);
      adam_update(opt, params, grads);
    }
  }
  const Matrix head_w = params.at("head.w"), head_b = params.at("head.b");
  params.tensors.erase("head.w");
  params.tensors.erase("head.b");
  return classification_metrics(softmax(pooled_features(params, enc, test), head_w, head_b), y_test);
}

MetricsReport evaluate(const Checkpoint& ckpt, const Dataset& ds, const TaskSpec& spec,
                       std::size_t n_seeds, std::string config_echo) {
  if (n_seeds < 1) throw ConfigError("at least one seed is required");
  std::vector<SeedMetrics> runs;
  for (std::size_t k = 0; k < n_seeds; ++k) {
    TaskSpec s = spec;
    s.seed = spec.seed + k;
    switch (spec.kind) {
      case TaskKind::Classification: runs.push_back(eval_classification(ckpt, ds, s)); break;
      case TaskKind::Interpolation: runs.push_back(eval_interpolation(ckpt, ds, s)); break;
      case TaskKind::Forecasting: runs.push_back(eval_forecasting(ckpt, ds, s)); break;
    }
  }
  return summarize(spec.kind, runs, std::move(config_echo));
}

}  // namespace itimer
