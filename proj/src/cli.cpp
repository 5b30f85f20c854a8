#include "itimer/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "itimer/errors.hpp"

namespace itimer::cli {

namespace {

using nlohmann::ordered_json;

template <class E>
using Names = std::map<std::string, E>;

const Names<ContrastiveForm> kForms{{"exp_form", ContrastiveForm::Exp},
                                    {"literal_form", ContrastiveForm::Literal}};
const Names<ReconstructionReduce> kReduce{{"mean", ReconstructionReduce::Mean},
                                          {"sum", ReconstructionReduce::Sum}};
const Names<PseudoRecMask> kRecMask{{"observed", PseudoRecMask::Observed},
                                    {"complement", PseudoRecMask::Complement}};
const Names<StatsMode> kStats{{"per_variable", StatsMode::PerVariable}, {"pooled", StatsMode::Pooled}};
const Names<AnchorStrategy::Kind> kAnchors{{"last_obs", AnchorStrategy::Kind::LastObs},
                                           {"zero", AnchorStrategy::Kind::Zero},
                                           {"global_mean", AnchorStrategy::Kind::GlobalMean},
                                           {"moving_average", AnchorStrategy::Kind::MovingAverage}};
const Names<TaskKind> kTasks{{"classification", TaskKind::Classification},
                             {"interpolation", TaskKind::Interpolation},
                             {"forecasting", TaskKind::Forecasting}};
const Names<FinetuneMode> kModes{{"linear_probe", FinetuneMode::LinearProbe},
                                 {"full_finetune", FinetuneMode::FullFinetune}};

template <class E>
std::string name_of(const Names<E>& names, E v) {
  for (const auto& [k, e] : names) {
    if (e == v) return k;
  }
  return "?";
}

// Raw option values that need post-processing into the library structs.
struct Pending {
  std::string variant = "full";
  std::string split = "0.6,0.2,0.2";
  std::string variants;
  AnchorStrategy::Kind anchor = AnchorStrategy::Kind::LastObs;
  int anchor_window = 5;
};

void add_split(CLI::App* app, Pending& p) {
  app->add_option("--split", p.split, "train,valid,test ratios")->capture_default_str();
}

void add_encoder(CLI::App* app, RunConfig& c) {
  app->add_option("--tau", c.encoder.tau, "reference points")->capture_default_str();
  app->add_option("--d-model", c.encoder.d_model, "representation width")->capture_default_str();
  app->add_option("--time-embed-dim", c.encoder.time_embed_dim)->capture_default_str();
  app->add_option("--hidden-dim", c.encoder.hidden_dim)->capture_default_str();
  app->add_option("--time-scale", c.encoder.time_scale)->capture_default_str();
  app->add_option("--time-kernel-gain", c.encoder.time_kernel_gain)->capture_default_str();
}

void add_training(CLI::App* app, RunConfig& c, Pending& p) {
  TrainConfig& t = c.train;
  app->add_option("--variant", p.variant, "full|random|constant|only_error|zero|mean|mave(w)|no_w|no_contrast|baseline")
      ->capture_default_str();
  app->add_option("--epochs", t.epochs)->capture_default_str();
  app->add_option("--batch-size", t.batch_size)->capture_default_str();
  app->add_option("--lr", t.learning_rate)->capture_default_str();
  app->add_option("--max-steps", t.max_steps, "stop at this global step (0 = no limit)")->capture_default_str();
  app->add_option("--rho", t.rho, "momentum of the error statistics")->capture_default_str();
  app->add_option("--mix-alpha", t.mix.alpha)->capture_default_str();
  app->add_flag("--mix-uniform", t.mix.per_cell_uniform, "draw alpha ~ U(lo, hi) per cell");
  app->add_option("--mix-alpha-lo", t.mix.alpha_lo)->capture_default_str();
  app->add_option("--mix-alpha-hi", t.mix.alpha_hi)->capture_default_str();
  app->add_option("--anchor", p.anchor)->transform(CLI::CheckedTransformer(kAnchors, CLI::ignore_case));
  app->add_option("--anchor-window", p.anchor_window)->capture_default_str();
  app->add_option("--stats-mode", t.stats_mode)->transform(CLI::CheckedTransformer(kStats, CLI::ignore_case));
  app->add_option("--alpha-w", t.loss.alpha_w, "weight of the Wasserstein term")->capture_default_str();
  app->add_option("--beta", t.loss.beta_c, "weight of the contrastive term")->capture_default_str();
  app->add_option("--temperature", t.loss.temperature)->capture_default_str();
  app->add_option("--contrastive-form", t.loss.contrastive_form)
      ->transform(CLI::CheckedTransformer(kForms, CLI::ignore_case));
  app->add_option("--reduce", t.loss.reduce)->transform(CLI::CheckedTransformer(kReduce, CLI::ignore_case));
  app->add_option("--pseudo-rec-mask", t.loss.pseudo_rec_mask)
      ->transform(CLI::CheckedTransformer(kRecMask, CLI::ignore_case));
}

void add_task(CLI::App* app, RunConfig& c) {
  TaskSpec& t = c.task;
  app->add_option("--task", t.kind)->transform(CLI::CheckedTransformer(kTasks, CLI::ignore_case));
  app->add_option("--mask-frac", t.mask_fraction)->capture_default_str();
  app->add_option("--split-point", t.split_point)->capture_default_str();
  app->add_option("--mode", t.mode)->transform(CLI::CheckedTransformer(kModes, CLI::ignore_case));
  app->add_option("--seeds", c.n_seeds, "number of evaluation seeds")->capture_default_str();
  app->add_option("--head-epochs", t.head_epochs)->capture_default_str();
  app->add_option("--head-lr", t.head_learning_rate)->capture_default_str();
  app->add_option("--finetune-epochs", t.finetune_epochs)->capture_default_str();
  app->add_option("--finetune-lr", t.finetune_learning_rate)->capture_default_str();
}

std::array<double, 3> parse_ratios(const std::string& s) {
  std::array<double, 3> r{};
  std::stringstream ss(s);
  std::string part;
  std::size_t k = 0;
  while (std::getline(ss, part, ',')) {
    if (k == 3) throw ConfigError("--split takes three ratios, got '" + s + "'");
    try {
      r[k++] = std::stod(part);
    } catch (const std::exception&) {
      throw ConfigError("bad ratio '" + part + "' in --split");
    }
  }
  if (k != 3) throw ConfigError("--split takes three ratios, got '" + s + "'");
  return r;
}

void finish(RunConfig& c, const Pending& p) {
  c.split_ratios = parse_ratios(p.split);
  c.train.variant = VariantSpec::parse(p.variant);
  c.train.anchor = p.anchor == AnchorStrategy::Kind::MovingAverage ? AnchorStrategy::moving_average(p.anchor_window)
                                                                   : AnchorStrategy{p.anchor, 0};
  c.train.seed = c.seed;
  c.encoder.seed = c.seed;
  c.synth.seed = c.seed;
  c.task.seed = c.seed;
  c.variants.clear();
  std::stringstream ss(p.variants);
  std::string v;
  while (std::getline(ss, v, ',')) {
    if (!v.empty()) c.variants.push_back(VariantSpec::parse(v).str());
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path or_default(const std::filesystem::path& p, const RunConfig& c, const char* name) {
  return p.empty() ? c.out_dir / name : p;
}

// --- commands ------------------------------------------------------------------------------

int cmd_generate(RunConfig& c, std::ostream& out) {
  c.output = or_default(c.output, c, "data.csv");
  const Dataset ds = generate_synthetic(c.synth);
  {
    auto f = open_out(c.output);
    write_long_format(ds, f);
    if (!f) throw IoError("write failed for " + c.output.string());
  }
  auto sidecar = c.output;
  sidecar.replace_extension(".json");
  write_text(sidecar, ordered_json::parse(config_json(c)).dump(2) + "\n");
  out << "generated " << ds.size() << " instances -> " << c.output.string() << "\n";
  return 0;
}

Checkpoint train_one(const Dataset& ds, RunConfig& c, std::ostream* loss_csv) {
  PretrainOptions opts;
  opts.meta = config_json(c);
  opts.loss_csv = loss_csv;
  EncoderConfig enc = c.encoder;
  enc.channels = ds.channels();
  if (!c.resume.empty()) {
    Checkpoint prev = load_checkpoint(c.resume);
    if (prev.state.encoder.channels != enc.channels) {
      throw ShapeError("resume checkpoint expects " + std::to_string(prev.state.encoder.channels) +
                       " variables but the data has " + std::to_string(enc.channels));
    }
    enc = prev.state.encoder;
    opts.resume = std::move(prev.state);
  }
  if (c.epoch_checkpoints) opts.epoch_checkpoint_dir = c.out_dir;
  auto res = pretrain(ds, enc, c.train, opts);
  return {kCheckpointVersion, std::move(res.state), opts.meta};
}

int cmd_pretrain(RunConfig& c, std::ostream& out) {
  if (c.data.empty()) throw ConfigError("pretrain needs --data");
  c.checkpoint = or_default(c.checkpoint, c, "model.ckpt");
  c.output = or_default(c.output, c, "loss.csv");
  // Fail on bad settings before any output file is created.
  apply_variant(c.train).validate();
  const Dataset ds = prepare_dataset(c.data, c.split_ratios, c.seed);
  auto csv = open_out(c.output);
  csv << "# config=" << config_json(c) << "\n";
  write_loss_csv_header(csv);
  const Checkpoint ck = train_one(ds, c, &csv);
  csv.flush();
  if (!csv) throw IoError("write failed for " + c.output.string());
  save_checkpoint(ck, c.checkpoint);
  out << "pretrained " << c.train.variant.str() << ": " << ck.state.step << " steps, params "
      << std::hex << params_checksum(ck.state.params) << std::dec << " -> " << c.checkpoint.string() << "\n";
  return 0;
}

std::string summary_line(const MetricsReport& r) {
  std::string s = to_string(r.task);
  for (const auto& [name, m] : r.metrics) s += "  " + name + " " + fmt(m.mean) + " +- " + fmt(m.std);
  return s;
}

int cmd_evaluate(RunConfig& c, std::ostream& out) {
  if (c.data.empty()) throw ConfigError("evaluate needs --data");
  c.checkpoint = or_default(c.checkpoint, c, "model.ckpt");
  c.output = or_default(c.output, c, "metrics.json");
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  const Dataset ds = prepare_dataset(c.data, c.split_ratios, c.seed);
  const MetricsReport r = evaluate(ck, ds, c.task, c.n_seeds, config_json(c));
  write_text(c.output, r.to_json());
  out << summary_line(r) << "\n";
  return 0;
}

int cmd_ablate(RunConfig& c, std::ostream& out) {
  if (c.data.empty()) throw ConfigError("ablate needs --data");
  c.output = or_default(c.output, c, "ablation.csv");
  std::vector<VariantSpec> grid;
  if (c.variants.empty()) {
    grid = ablation_grid();
    for (const auto& v : grid) c.variants.push_back(v.str());
  } else {
    for (const auto& v : c.variants) grid.push_back(VariantSpec::parse(v));
  }
  const std::string echo = config_json(c);

  // Seeds are paired: every variant sees the same split, initialization and
  // evaluation holdout for a given seed.
  std::vector<Dataset> data;
  for (std::size_t k = 0; k < c.n_seeds; ++k) data.push_back(prepare_dataset(c.data, c.split_ratios, c.seed + k));

  std::vector<MetricsReport> reports;
  for (const auto& v : grid) {
    std::vector<SeedMetrics> runs;
    for (std::size_t k = 0; k < c.n_seeds; ++k) {
      RunConfig rc = c;
      rc.train.variant = v;
      rc.train.seed = rc.encoder.seed = rc.task.seed = c.seed + k;
      const Checkpoint ck = train_one(data[k], rc, nullptr);
      TaskSpec ts = rc.task;
      switch (ts.kind) {
        case TaskKind::Classification: runs.push_back(eval_classification(ck, data[k], ts)); break;
        case TaskKind::Interpolation: runs.push_back(eval_interpolation(ck, data[k], ts)); break;
        case TaskKind::Forecasting: runs.push_back(eval_forecasting(ck, data[k], ts)); break;
      }
    }
    reports.push_back(summarize(c.task.kind, runs, echo));
    out << v.str() << ": " << summary_line(reports.back()) << "\n";
  }

  std::vector<std::string> metrics;
  for (const auto& [name, _] : reports.front().metrics) metrics.push_back(name);

  std::string csv = "# config=" + echo + "\nvariant";
  for (const auto& m : metrics) csv += "," + m + "_mean," + m + "_std";
  csv += "\n";
  std::vector<std::vector<std::string>> rows{{"variant"}};
  for (const auto& m : metrics) rows[0].push_back(m);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv += grid[i].str();
    std::vector<std::string> row{grid[i].str()};
    for (const auto& m : metrics) {
      const auto& s = reports[i].metrics.at(m);
      csv += "," + fmt(s.mean) + "," + fmt(s.std);
      row.push_back(fmt(s.mean) + " +- " + fmt(s.std));
    }
    csv += "\n";
    rows.push_back(std::move(row));
  }
  write_text(c.output, csv);

  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
  }
  std::string table = "# " + std::string(to_string(c.task.kind)) + ", " + std::to_string(c.n_seeds) +
                      " seeds, config=" + echo + "\n";
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      table += r[j] + std::string(width[j] - r[j].size() + (j + 1 < r.size() ? 2 : 0), ' ');
    }
    while (!table.empty() && table.back() == ' ') table.pop_back();
    table += "\n";
  }
  auto txt = c.output;
  txt.replace_extension(".txt");
  write_text(txt, table);

  ordered_json j;
  j["task"] = to_string(c.task.kind);
  j["config_echo"] = ordered_json::parse(echo);
  j["variants"] = ordered_json::object();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    j["variants"][grid[i].str()] = ordered_json::parse(reports[i].to_json());
  }
  auto js = c.output;
  js.replace_extension(".json");
  write_text(js, j.dump(2) + "\n");
  return 0;
}

}  // namespace

std::string config_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  ordered_json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["data"] = c.data.string();
  j["checkpoint"] = c.checkpoint.string();
  j["resume"] = c.resume.string();
  j["output"] = c.output.string();
  j["split"] = c.split_ratios;
  j["synth"] = {{"n_instances", c.synth.n_instances}, {"t_max", c.synth.t_max},
                {"channels", c.synth.channels},       {"missing_rate", c.synth.missing_rate},
                {"n_classes", c.synth.n_classes},     {"noise_std", c.synth.noise_std},
                {"class_separation", c.synth.class_separation}, {"seed", c.synth.seed}};
  j["encoder"] = {{"tau", c.encoder.tau},
                  {"d_model", c.encoder.d_model},
                  {"time_embed_dim", c.encoder.time_embed_dim},
                  {"hidden_dim", c.encoder.hidden_dim},
                  {"time_scale", c.encoder.time_scale},
                  {"time_kernel_gain", c.encoder.time_kernel_gain},
                  {"seed", c.encoder.seed}};
  j["train"] = {{"variant", t.variant.str()},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"max_steps", t.max_steps},
                {"rho", t.rho},
                {"mix_alpha", t.mix.alpha},
                {"mix_uniform", t.mix.per_cell_uniform},
                {"mix_alpha_lo", t.mix.alpha_lo},
                {"mix_alpha_hi", t.mix.alpha_hi},
                {"anchor", t.anchor.str()},
                {"stats_mode", name_of(kStats, t.stats_mode)},
                {"alpha_w", t.loss.alpha_w},
                {"beta_c", t.loss.beta_c},
                {"temperature", t.loss.temperature},
                {"contrastive_form", name_of(kForms, t.loss.contrastive_form)},
                {"reduce", name_of(kReduce, t.loss.reduce)},
                {"pseudo_rec_mask", name_of(kRecMask, t.loss.pseudo_rec_mask)},
                {"epoch_checkpoints", c.epoch_checkpoints},
                {"seed", t.seed}};
  j["task"] = {{"kind", name_of(kTasks, c.task.kind)},
               {"mask_fraction", c.task.mask_fraction},
               {"split_point", c.task.split_point},
               {"mode", name_of(kModes, c.task.mode)},
               {"seeds", c.n_seeds},
               {"head_epochs", c.task.head_epochs},
               {"head_learning_rate", c.task.head_learning_rate},
               {"finetune_epochs", c.task.finetune_epochs},
               {"finetune_learning_rate", c.task.finetune_learning_rate},
               {"batch_size", c.task.batch_size},
               {"seed", c.task.seed}};
  j["variants"] = c.variants;
  return j.dump();
}

Dataset prepare_dataset(const std::filesystem::path& path, const std::array<double, 3>& ratios,
                        std::uint64_t seed) {
  return normalize_min_max(split(load_long_format(path), ratios, seed));
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  Pending p;
  CLI::App app{"Self-supervised pre-training for irregularly sampled time series"};
  app.set_config("--config", "", "TOML-style config file; command-line flags win");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  app.add_option("--seed", c.seed)->capture_default_str();
  app.add_option("--out-dir", c.out_dir)->capture_default_str();

  auto* gen = app.add_subcommand("generate", "write a synthetic long-format dataset");
  gen->add_option("--n", c.synth.n_instances, "instances")->capture_default_str();
  gen->add_option("--t", c.synth.t_max, "grid length")->capture_default_str();
  gen->add_option("--c", c.synth.channels, "variables")->capture_default_str();
  gen->add_option("--missing", c.synth.missing_rate)->capture_default_str();
  gen->add_option("--classes", c.synth.n_classes)->capture_default_str();
  gen->add_option("--noise", c.synth.noise_std)->capture_default_str();
  gen->add_option("--class-sep", c.synth.class_separation)->capture_default_str();
  gen->add_option("--out", c.output, "CSV path (default <out-dir>/data.csv)");

  auto* pre = app.add_subcommand("pretrain", "pre-train an encoder");
  pre->add_option("--data", c.data)->required();
  pre->add_option("--ckpt", c.checkpoint, "checkpoint path (default <out-dir>/model.ckpt)");
  pre->add_option("--loss-csv", c.output, "loss log (default <out-dir>/loss.csv)");
  pre->add_option("--resume", c.resume, "continue from this checkpoint");
  pre->add_flag("--epoch-checkpoints", c.epoch_checkpoints, "also save <out-dir>/epoch_<k>.ckpt");
  add_split(pre, p);
  add_encoder(pre, c);
  add_training(pre, c, p);

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a downstream task");
  ev->add_option("--data", c.data)->required();
  ev->add_option("--ckpt", c.checkpoint, "checkpoint path (default <out-dir>/model.ckpt)");
  ev->add_option("--metrics-out", c.output, "metrics JSON (default <out-dir>/metrics.json)");
  add_split(ev, p);
  add_task(ev, c);

  auto* ab = app.add_subcommand("ablate", "pre-train and evaluate a grid of variants");
  ab->add_option("--data", c.data)->required();
  ab->add_option("--variants", p.variants, "comma-separated subset of the grid (default: all ten)");
  ab->add_option("--table", c.output, "CSV path (default <out-dir>/ablation.csv)");
  add_split(ab, p);
  add_encoder(ab, c);
  add_training(ab, c, p);
  add_task(ab, c);

  for (auto* sub : {gen, pre, ev, ab}) {
    sub->fallthrough();
    sub->configurable();
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    finish(c, p);
    if (gen->parsed()) {
      c.command = "generate";
      return cmd_generate(c, out);
    }
    if (pre->parsed()) {
      c.command = "pretrain";
      return cmd_pretrain(c, out);
    }
    if (ev->parsed()) {
      c.command = "evaluate";
      return cmd_evaluate(c, out);
    }
    c.command = "ablate";
    return cmd_ablate(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace itimer::cli
