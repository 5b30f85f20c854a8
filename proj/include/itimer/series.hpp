#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "itimer/matrix.hpp"

namespace itimer {

// One irregularly sampled instance: a T x C value grid, its observation mask
// and strictly increasing timestamps. Unobserved cells carry 0.
struct IrregularSeries {
  std::string id;
  Matrix values;
  Mask mask;
  std::vector<double> timestamps;
  std::optional<int> label;

  std::size_t length() const { return timestamps.size(); }
  std::size_t channels() const { return values.cols(); }
  std::size_t observed() const { return mask.count(); }

  // Throws ValidationError when any structural invariant is broken.
  void validate() const;
};

enum class SplitTag : std::uint8_t { Train, Valid, Test };

const char* to_string(SplitTag t);

struct MinMax {
  double min = 0.0;
  double max = 0.0;
  bool operator==(const MinMax&) const = default;
};

struct Dataset {
  std::vector<IrregularSeries> instances;
  // Per-variable (min, max) once normalized; empty before.
  std::vector<MinMax> normalization;
  // One tag per instance once split; empty means every instance is Train.
  std::vector<SplitTag> split_assignment;

  std::size_t size() const { return instances.size(); }
  std::size_t channels() const;
  SplitTag tag(std::size_t i) const {
    return split_assignment.empty() ? SplitTag::Train : split_assignment[i];
  }
  std::vector<std::size_t> indices(SplitTag t) const;
  std::vector<IrregularSeries> subset(SplitTag t) const;
  bool labeled() const;
};

// Long format: CSV with header `instance_id,timestamp,variable,value[,label]`.
Dataset read_long_format(std::istream& in);
Dataset load_long_format(const std::filesystem::path& path);
void write_long_format(const Dataset& ds, std::ostream& out);
void save_long_format(const Dataset& ds, const std::filesystem::path& path);

struct SynthConfig {
  std::size_t n_instances = 1000;
  std::size_t t_max = 48;
  std::size_t channels = 4;
  double missing_rate = 0.6;
  int n_classes = 2;
  std::uint64_t seed = 0;
  double noise_std = 0.1;
  // Spacing between consecutive classes' frequencies; larger is easier.
  double class_separation = 1.0;
};

// Class-conditioned sums of sinusoids on [0, 1] with independent per-cell
// missingness. Timestamps where every variable is unobserved are dropped so
// the grid matches what the long format can express.
Dataset generate_synthetic(const SynthConfig& cfg);

// Frequencies (cycles per unit time) used for class k.
std::array<double, 2> class_frequencies(int k, double separation = 1.0);

// Min-max over observed training-split entries; constant variables map to 0.5.
Dataset normalize_min_max(Dataset ds);
double denormalize(const Dataset& ds, std::size_t variable, double v);

// Instance-level random partition. Valid/test sizes are floor(ratio * N), the
// remainder goes to train.
Dataset split(Dataset ds, std::array<double, 3> ratios, std::uint64_t seed);

}  // namespace itimer
