#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "bib/run_config.hpp"
#include "bib/synthetic.hpp"

namespace bib::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitInput = 2;

/// Per-layer bit statistics and histograms: `stats_layer_<l>.csv`.
int cmd_stats(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Threshold sweep on every layer: `scheme_layer_<l>.txt`,
/// `trace_layer_<l>.csv`, and `summary.csv`.
int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Best-subset vs. path vs. truncation distortion per support size:
/// `oracle_layer_<l>.csv`.
int cmd_oracle(const RunConfig& config, int eta, std::ostream& out, std::ostream& err);

/// Efficiency table. Without bits or schemes, the rows 1..8 and 32 bits.
/// Scheme files contribute one row at their average effective rate.
int cmd_efficiency(const RunConfig& config, const std::vector<double>& bits,
                   const std::vector<std::filesystem::path>& schemes, std::ostream& out, std::ostream& err);

/// Applies one scheme per layer to every sample and writes a container of
/// reconstructed tensors to config.output.
int cmd_reconstruct(const RunConfig& config, const std::vector<std::filesystem::path>& schemes, std::ostream& out,
                    std::ostream& err);

/// Writes the built-in synthetic dataset.
int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& root, std::ostream& out, std::ostream& err);

/// Scheme files given directly or as directories holding `scheme_layer_*.txt`.
std::vector<std::filesystem::path> expand_scheme_paths(const std::vector<std::filesystem::path>& inputs);

}  // namespace bib::cli
