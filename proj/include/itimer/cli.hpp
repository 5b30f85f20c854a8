#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "itimer/downstream.hpp"
#include "itimer/encoder.hpp"
#include "itimer/series.hpp"
#include "itimer/trainer.hpp"

namespace itimer::cli {

// Everything a run can be configured with. Each field has a default and a
// matching command-line flag / config-file key.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";

  SynthConfig synth;
  EncoderConfig encoder;
  TrainConfig train;
  TaskSpec task;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  std::size_t n_seeds = 1;
  std::vector<std::string> variants;  // ablate; empty = full grid
  bool epoch_checkpoints = false;

  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::filesystem::path resume;
  std::filesystem::path output;  // command-specific main artifact
};

// Effective configuration as JSON text (stable key order).
std::string config_json(const RunConfig& cfg);

// Loads `path`, applies the split for `seed` and train-split min-max scaling.
Dataset prepare_dataset(const std::filesystem::path& path, const std::array<double, 3>& ratios,
                        std::uint64_t seed);

// Parses `args` (args[0] is the program name) and runs the subcommand.
// Returns the process exit code: 0 ok, 1 usage/config, 2 numerical abort, 3 IO.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace itimer::cli
