#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bib/bitplane_codec.hpp"
#include "bib/tensor_store.hpp"

namespace bib {

/// Mean squared difference over all elements of all aligned tensors.
double mse(std::span<const ActivationTensor> x, std::span<const ActivationTensor> recon);
double mse(std::span<const float> x, std::span<const double> recon);

/// 10 log10((2^D - 1)^2 / mse); +inf when mse == 0. `mse_value` is in code
/// units (squared quantization steps).
double psnr(double mse_value, int bits);

inline constexpr double kDefaultBaselineOps = 285.0;  // billions of operations at 32 bit
inline constexpr double kDefaultBaselineMem = 34.0;   // megabytes of activations at 32 bit

struct EfficiencyReport {
    double bits = 32.0;
    double ops_count = 0.0;          // billions
    double mem_bytes = 0.0;          // megabytes
    double improvement = 1.0;        // exact: baseline / current = 32 / bits
    double improvement_table = 1.0;  // ratio of the one-decimal memory figures
    double baseline_ops = kDefaultBaselineOps;
    double baseline_mem = kDefaultBaselineMem;
};

/// Costs scale linearly with the code rate relative to a 32-bit baseline.
EfficiencyReport efficiency(double bits, double baseline_ops = kDefaultBaselineOps,
                            double baseline_mem = kDefaultBaselineMem);

/// Rounds half away from zero to one decimal place.
double round1(double v);

/// Table rows as `bits,operations_B,memory_M,improvement,improvement_exact`.
std::string efficiency_csv(std::span<const EfficiencyReport> rows);

/// Transposed table, one column per code rate, one-decimal display.
std::string efficiency_table(std::span<const EfficiencyReport> rows);

struct BitStatistics {
    std::vector<double> rate_of_one;        // mean of plane j, j = 1..D
    std::vector<double> coefficient_ratio;  // alpha_j / (2^(j-1) scale)
};

BitStatistics bit_statistics(std::span<const BitplaneCodebook> codebooks, std::span<const double> alpha);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::uint64_t> counts;
};

/// Equal-width bins over [min, max] of all values.
Histogram value_histogram(std::span<const ActivationTensor> tensors, int bins);

/// counts[c] = number of elements with code c, c in [0, 2^D - 1].
std::vector<std::uint64_t> code_histogram(std::span<const BitplaneCodebook> codebooks);

}  // namespace bib
