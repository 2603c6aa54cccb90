#pragma once

// Subcommands of the `cml` executable. Every experiment parameter lives in
// the JSON config; flags only pick the config, output directory, parallelism
// and seed override.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "cml/config.hpp"
#include "cml/data.hpp"

namespace cml {

struct CliOptions {
  std::string config_path;
  std::string out_dir;  // overrides config.output_dir
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;  // overrides CML_SEED, which overrides config
  std::string sweep_kind;             // "lambda" | "noise"
  std::string baseline_run;           // compare overrides
  std::string cml_run;
  std::string test_manifest;
};

// Parses argv and dispatches. Returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int cmd_generate(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_train(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_compare(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliOptions& options, std::ostream& out, std::ostream& err);

// Loads the config and applies the seed override chain.
ExperimentConfig resolve_config(const CliOptions& options);

struct RawSplit {
  Dataset train;
  Dataset test;
};

// Generates or loads the configured dataset and performs the stratified split.
RawSplit load_and_split(const ExperimentConfig& config);

}  // namespace cml
