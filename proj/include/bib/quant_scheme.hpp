#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bib/bitplane_codec.hpp"
#include "bib/sparse_solver.hpp"

namespace bib {

/// Per-layer outcome of the threshold sweep.
struct QuantScheme {
    int layer_id = 1;
    InitQuantizerSpec spec;
    CoefficientVector alpha;
    int effective_rate = 0;  // |support|
    double lambda = 0.0;
    double psnr_db = 0.0;       // over all fitting samples
    double psnr_loss_db = 0.0;  // max_i t_i
    std::vector<double> t_per_sample;
    double threshold_db = 0.0;
    bool threshold_unmet = false;

    /// Throws DatasetError on a broken invariant.
    void validate() const;
};

struct SweepPoint {
    double lambda = 0.0;
    int rate = 0;
    double psnr_db = 0.0;
    double psnr_loss_db = 0.0;
};

/// Every lambda evaluated by a sweep, in ascending order.
struct SweepTrace {
    std::vector<SweepPoint> points;

    std::string to_csv() const;
};

inline constexpr int kSchemeVersion = 1;

void write_scheme(const QuantScheme& scheme, const std::filesystem::path& path);
std::string scheme_to_string(const QuantScheme& scheme);
QuantScheme read_scheme(const std::filesystem::path& path);
QuantScheme parse_scheme(const std::string& text, const std::string& source = "<scheme>");

void write_trace(const SweepTrace& trace, const std::filesystem::path& path);

}  // namespace bib
