#include "itimer/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "itimer/errors.hpp"
#include "itimer/rng.hpp"

namespace itimer {

void IrregularSeries::validate() const {
  const std::size_t t = timestamps.size();
  if (t < 1 || values.cols() < 1) throw ValidationError("series " + id + " has an empty grid");
  if (values.rows() != t || !(mask.shape() == values.shape())) {
    throw ValidationError("series " + id + ": values " + values.shape().str() + ", mask " +
                          mask.shape().str() + ", " + std::to_string(t) + " timestamps");
  }
  for (std::size_t i = 1; i < t; ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) {
      throw ValidationError("series " + id + ": timestamps not strictly increasing at row " +
                            std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) throw ValidationError("series " + id + ": mask entry not 0/1");
  }
}

const char* to_string(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Valid: return "valid";
    case SplitTag::Test: return "test";
  }
  return "?";
}

std::size_t Dataset::channels() const {
  return instances.empty() ? 0 : instances.front().channels();
}

std::vector<std::size_t> Dataset::indices(SplitTag t) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (tag(i) == t) out.push_back(i);
  return out;
}

std::vector<IrregularSeries> Dataset::subset(SplitTag t) const {
  std::vector<IrregularSeries> out;
  for (std::size_t i : indices(t)) out.push_back(instances[i]);
  return out;
}

bool Dataset::labeled() const {
  return !instances.empty() &&
         std::all_of(instances.begin(), instances.end(), [](const auto& s) { return s.label.has_value(); });
}

// --- long format --------------------------------------------------------------

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

// Exact decimal text for a double (shortest round-trip form).
std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

struct Row {
  double t;
  std::size_t var;
  double value;
};

struct Pending {
  std::string id;
  std::vector<Row> rows;
  std::optional<int> label;
};

}  // namespace

Dataset read_long_format(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  bool has_label = false;

  std::vector<Pending> pending;
  std::unordered_map<std::string, std::size_t> by_id;
  std::size_t channels = 0;

  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view sv = trim(line);
    if (sv.empty()) continue;
    const auto fields = split_csv(sv);
    if (!header_seen) {
      header_seen = true;
      std::vector<std::string_view> names;
      for (auto f : fields) names.push_back(trim(f));
      const bool base = names.size() >= 4 && names[0] == "instance_id" && names[1] == "timestamp" &&
                        names[2] == "variable" && names[3] == "value";
      if (!base || names.size() > 5 || (names.size() == 5 && names[4] != "label")) {
        throw ParseError("line " + std::to_string(lineno) +
                         ": expected header instance_id,timestamp,variable,value[,label]");
      }
      has_label = names.size() == 5;
      continue;
    }
    const std::size_t expected = has_label ? 5 : 4;
    if (fields.size() != expected) {
      throw ParseError("line " + std::to_string(lineno) + ": expected " +
                       std::to_string(expected) + " fields, got " + std::to_string(fields.size()));
    }
    const std::string id(trim(fields[0]));
    if (id.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty instance_id");
    Row r{};
    if (!parse_number(fields[1], r.t)) {
      throw ParseError("line " + std::to_string(lineno) + ": bad timestamp '" +
                       std::string(fields[1]) + "'");
    }
    if (!parse_number(fields[2], r.var)) {
      throw ParseError("line " + std::to_string(lineno) + ": bad variable index '" +
                       std::string(fields[2]) + "'");
    }
    if (!parse_number(fields[3], r.value)) {
      throw ParseError("line " + std::to_string(lineno) + ": bad value '" +
                       std::string(fields[3]) + "'");
    }
    if (!std::isfinite(r.value) || !std::isfinite(r.t)) {
      throw ValidationError("line " + std::to_string(lineno) + ": non-finite timestamp or value");
    }
    auto [it, inserted] = by_id.try_emplace(id, pending.size());
    if (inserted) pending.push_back({id, {}, std::nullopt});
    Pending& p = pending[it->second];
    if (has_label && !trim(fields[4]).empty()) {
      int lab = 0;
      if (!parse_number(fields[4], lab)) {
        throw ParseError("line " + std::to_string(lineno) + ": bad label '" +
                         std::string(fields[4]) + "'");
      }
      if (p.label && *p.label != lab) {
        throw ConflictError("line " + std::to_string(lineno) + ": label changes within instance " + id);
      }
      p.label = lab;
    }
    channels = std::max(channels, r.var + 1);
    p.rows.push_back(r);
  }

  for (auto& p : pending) {
    std::vector<double> times;
    for (const auto& r : p.rows) times.push_back(r.t);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    IrregularSeries s;
    s.id = p.id;
    s.label = p.label;
    s.timestamps = times;
    s.values = Matrix(times.size(), channels);
    s.mask = Mask(times.size(), channels);
    for (const auto& r : p.rows) {
      const auto row = static_cast<std::size_t>(
          std::lower_bound(times.begin(), times.end(), r.t) - times.begin());
      if (s.mask(row, r.var)) {
        throw ConflictError("duplicate observation for instance " + p.id + " at timestamp " +
                            format_double(r.t) + ", variable " + std::to_string(r.var));
      }
      s.mask(row, r.var) = 1;
      s.values(row, r.var) = r.value;
    }
    ds.instances.push_back(std::move(s));
  }
  return ds;
}

Dataset load_long_format(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_long_format(in);
}

void write_long_format(const Dataset& ds, std::ostream& out) {
  const bool with_label = std::any_of(ds.instances.begin(), ds.instances.end(),
                                      [](const auto& s) { return s.label.has_value(); });
  out << "instance_id,timestamp,variable,value" << (with_label ? ",label" : "") << '\n';
  for (const auto& s : ds.instances) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t c = 0; c < s.channels(); ++c) {
        if (!s.mask(t, c)) continue;
        out << s.id << ',' << format_double(s.timestamps[t]) << ',' << c << ','
            << format_double(s.values(t, c));
        if (with_label) {
          out << ',';
          if (s.label) out << *s.label;
        }
        out << '\n';
      }
    }
  }
}

void save_long_format(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_long_format(ds, out);
  if (!out) throw IoError("write failed for " + path.string());
}

// --- synthetic generator --------------------------------------------------------

std::array<double, 2> class_frequencies(int k, double separation) {
  return {1.0 + separation * k, 3.0 + 1.5 * separation * k};
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (!(cfg.missing_rate >= 0.0 && cfg.missing_rate < 1.0)) {
    throw ConfigError("missing_rate must lie in [0, 1), got " + std::to_string(cfg.missing_rate));
  }
  if (cfg.t_max < 1 || cfg.channels < 1) throw ConfigError("t_max and channels must be >= 1");
  if (cfg.n_classes < 1) throw ConfigError("n_classes must be >= 1");
  if (!(cfg.class_separation > 0.0)) throw ConfigError("class_separation must be positive");

  Rng rng(cfg.seed);
  Dataset ds;
  ds.instances.reserve(cfg.n_instances);
  const double two_pi = 2.0 * std::numbers::pi;

  for (std::size_t n = 0; n < cfg.n_instances; ++n) {
    const int label = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_classes)));
    const auto freqs = class_frequencies(label, cfg.class_separation);

    std::vector<double> times(cfg.t_max);
    do {
      for (auto& t : times) t = rng.uniform();
      std::sort(times.begin(), times.end());
    } while (std::adjacent_find(times.begin(), times.end()) != times.end());

    Matrix values(cfg.t_max, cfg.channels);
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const double offset = 0.5 * static_cast<double>(c);
      const double gain = 1.0 + 0.5 * static_cast<double>(c);
      std::array<double, 2> amp{}, phase{};
      for (std::size_t f = 0; f < freqs.size(); ++f) {
        amp[f] = rng.uniform(0.5, 1.5);
        phase[f] = rng.uniform(0.0, two_pi);
      }
      for (std::size_t t = 0; t < cfg.t_max; ++t) {
        double v = offset;
        for (std::size_t f = 0; f < freqs.size(); ++f)
          v += gain * amp[f] * std::sin(two_pi * freqs[f] * times[t] + phase[f]);
        values(t, c) = v + cfg.noise_std * rng.normal();
      }
    }

    Mask mask(cfg.t_max, cfg.channels);
    const double p_obs = 1.0 - cfg.missing_rate;
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      bool any = false;
      while (!any) {
        for (std::size_t t = 0; t < cfg.t_max; ++t) {
          mask(t, c) = rng.uniform() < p_obs ? 1 : 0;
          any = any || mask(t, c);
        }
      }
    }

    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < cfg.t_max; ++t) {
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        if (mask(t, c)) {
          keep.push_back(t);
          break;
        }
      }
    }
    IrregularSeries s;
    s.id = "s" + std::to_string(n);
    s.label = label;
    s.values = Matrix(keep.size(), cfg.channels);
    s.mask = Mask(keep.size(), cfg.channels);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      s.timestamps.push_back(times[keep[r]]);
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        if (mask(keep[r], c)) {
          s.mask(r, c) = 1;
          s.values(r, c) = values(keep[r], c);
        }
      }
    }
    ds.instances.push_back(std::move(s));
  }
  return ds;
}

// --- normalization ------------------------------------------------------------

Dataset normalize_min_max(Dataset ds) {
  const std::size_t C = ds.channels();
  std::vector<MinMax> mm(C, MinMax{std::numeric_limits<double>::infinity(),
                                   -std::numeric_limits<double>::infinity()});
  std::vector<std::size_t> seen(C, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.tag(i) != SplitTag::Train) continue;
    const auto& s = ds.instances[i];
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < C; ++c) {
        if (!s.mask(t, c)) continue;
        mm[c].min = std::min(mm[c].min, s.values(t, c));
        mm[c].max = std::max(mm[c].max, s.values(t, c));
        ++seen[c];
      }
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (seen[c] == 0) {
      throw ValidationError("variable " + std::to_string(c) +
                            " has no observed entries in the training split");
    }
  }
  for (auto& s : ds.instances) {
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < C; ++c) {
        if (!s.mask(t, c)) {
          s.values(t, c) = 0.0;
          continue;
        }
        const double range = mm[c].max - mm[c].min;
        s.values(t, c) = range > 0.0 ? (s.values(t, c) - mm[c].min) / range : 0.5;
      }
  }
  ds.normalization = std::move(mm);
  return ds;
}

double denormalize(const Dataset& ds, std::size_t variable, double v) {
  if (variable >= ds.normalization.size()) throw ContractError("dataset is not normalized");
  const auto& mm = ds.normalization[variable];
  const double range = mm.max - mm.min;
  return range > 0.0 ? mm.min + v * range : mm.min;
}

// --- split ------------------------------------------------------------------------

Dataset split(Dataset ds, std::array<double, 3> ratios, std::uint64_t seed) {
  double total = 0.0;
  int nonzero = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw SplitError("split ratios must be nonnegative");
    total += r;
    nonzero += r > 0.0;
  }
  if (std::abs(total - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
  if (ratios[0] <= 0.0) throw SplitError("train ratio must be positive");
  const std::size_t n = ds.size();
  if (nonzero == 3 && n < 3) {
    throw SplitError("cannot split " + std::to_string(n) + " instances three ways");
  }

  const auto count = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_valid = count(ratios[1]);
  const std::size_t n_test = count(ratios[2]);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());

  ds.split_assignment.assign(n, SplitTag::Train);
  for (std::size_t k = 0; k < n_valid; ++k) ds.split_assignment[perm[k]] = SplitTag::Valid;
  for (std::size_t k = n_valid; k < n_valid + n_test; ++k) ds.split_assignment[perm[k]] = SplitTag::Test;
  return ds;
}

}  // namespace itimer
