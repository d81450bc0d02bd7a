#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bib/bitplane_codec.hpp"
#include "bib/quant_scheme.hpp"
#include "bib/sparse_solver.hpp"
#include "bib/tensor_store.hpp"

namespace bib {

/// What the per-sample PSNR loss t_i is measured against.
enum class LossReference {
    initial_quantization,  // PSNR of the natural D-bit dequantization
    least_squares,         // PSNR of the unpenalized (lambda = 0) fit
};

std::string_view to_string(LossReference ref);
LossReference parse_loss_reference(std::string_view text);

struct LambdaGrid {
    double min_factor = 1e-4;  // relative to lambda_max
    double max_factor = 1.0;
    int points = 32;
    std::vector<double> explicit_lambdas;  // absolute values; overrides the factors when non-empty

    std::vector<double> resolve(double lambda_max) const;
};

struct BottleneckOptions {
    double threshold_db = 24.0;
    LambdaGrid grid;
    SolverOptions solver;
    LossReference reference = LossReference::initial_quantization;
};

struct BottleneckResult {
    QuantScheme scheme;
    SweepTrace trace;
};

/// t = reference - candidate, with +-inf handled so that two perfect
/// reconstructions give 0.
double psnr_loss(double reference_db, double candidate_db);

/// Sweeps lambda upward over one layer's fitting samples and keeps the largest
/// lambda whose worst per-sample PSNR loss stays within the threshold. The
/// sweep stops at the first lambda that exceeds it. When even the first grid
/// point fails, that point is returned with threshold_unmet set.
BottleneckResult run_bottleneck(std::span<const ActivationTensor> samples, const InitQuantizerSpec& spec,
                                const BottleneckOptions& options);

/// How each layer's initial quantizer is derived from its calibration data.
struct QuantizerPlan {
    QuantizerKind kind = QuantizerKind::clip_scale;
    int bits = 8;
    ClipRule clip;

    InitQuantizerSpec resolve(std::span<const ActivationTensor> calibration) const;
};

struct LayerFailure {
    int layer_id = 0;
    std::string message;
};

struct AllLayersResult {
    std::vector<BottleneckResult> layers;  // successful layers, ascending layer_id
    std::vector<LayerFailure> failures;
};

/// Layers are independent; `jobs` > 1 runs them on worker threads. Output
/// order is by layer_id regardless of scheduling.
AllLayersResult run_all_layers(std::span<const std::vector<ActivationTensor>> layers, const QuantizerPlan& plan,
                               const BottleneckOptions& options, int jobs = 1);

/// Reads the first n_fit samples of every layer and runs them.
AllLayersResult run_all_layers(const DatasetManifest& manifest, const QuantizerPlan& plan,
                               const BottleneckOptions& options, int n_fit, int jobs = 1);

}  // namespace bib
