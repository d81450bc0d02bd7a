#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "bib/bitplane_codec.hpp"
#include "bib/bottleneck.hpp"
#include "bib/kvtext.hpp"
#include "bib/metrics.hpp"

namespace bib {

inline constexpr int kConfigVersion = 1;
inline constexpr int kDefaultFitSamples = 64;

struct RunConfig {
    std::filesystem::path dataset;
    QuantizerKind quantizer = QuantizerKind::clip_scale;
    int bits = 8;
    ClipRule clip;
    double threshold_db = 24.0;
    double lambda_min_factor = 1e-4;
    double lambda_max_factor = 1.0;
    int lambda_points = 32;
    int n_fit = 0;  // 0: min(N, 64)
    bool nonnegative = false;
    LossReference loss_reference = LossReference::initial_quantization;
    std::filesystem::path output = "bib_out";
    std::uint64_t seed = 0;
    int jobs = 1;
    double baseline_ops = kDefaultBaselineOps;
    double baseline_mem = kDefaultBaselineMem;

    /// Range checks; throws ConfigError.
    void validate() const;

    int fit_samples(int num_samples) const;
    QuantizerPlan plan() const;
    BottleneckOptions bottleneck_options() const;

    KeyValueDoc to_doc() const;
    static RunConfig from_doc(const KeyValueDoc& doc);

    void save(const std::filesystem::path& path) const;
    static RunConfig load(const std::filesystem::path& path);

    friend bool operator==(const RunConfig&, const RunConfig&);
};

}  // namespace bib
