#include "bib/bottleneck.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "bib/error.hpp"
#include "bib/metrics.hpp"

namespace bib {

std::string_view to_string(LossReference ref) {
    switch (ref) {
        case LossReference::initial_quantization:
            return "initial";
        case LossReference::least_squares:
            return "least_squares";
    }
    return "?";
}

LossReference parse_loss_reference(std::string_view text) {
    if (text == "initial") return LossReference::initial_quantization;
    if (text == "least_squares") return LossReference::least_squares;
    throw ConfigError("unknown loss reference `" + std::string(text) + "` (initial|least_squares)");
}

std::vector<double> LambdaGrid::resolve(double lambda_max) const {
    std::vector<double> grid;
    if (!explicit_lambdas.empty()) {
        grid = explicit_lambdas;
        std::sort(grid.begin(), grid.end());
    } else if (lambda_max == 0.0) {
        grid = {0.0};  // y is orthogonal to every plane; only alpha = 0 exists
    } else {
        grid = geometric_grid(lambda_max, min_factor, max_factor, points);
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i]) || grid[i] < 0.0) throw ConfigError("lambda grid values must be finite and >= 0");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("lambda grid must be strictly ascending");
    }
    return grid;
}

double psnr_loss(double reference_db, double candidate_db) {
    if (reference_db == candidate_db) return 0.0;  // covers inf == inf
    return reference_db - candidate_db;
}

namespace {

struct SampleScores {
    std::vector<double> psnr_db;  // per sample
    double overall_db = 0.0;
};

SampleScores score(std::span<const ActivationTensor> samples, std::span<const BitplaneCodebook> codebooks,
                   std::span<const double> alpha) {
    const auto& spec = codebooks.front().spec();
    const double step2 = spec.scale * spec.scale;
    SampleScores out;
    double total_sq = 0.0;
    std::size_t total_n = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto recon = reconstruct_values(codebooks[i], alpha);
        const double m = mse(samples[i].values, recon);
        out.psnr_db.push_back(psnr(m / step2, spec.bits));
        total_sq += m * static_cast<double>(recon.size());
        total_n += recon.size();
    }
    out.overall_db = psnr(total_sq / static_cast<double>(total_n) / step2, spec.bits);
    return out;
}

}  // namespace

BottleneckResult run_bottleneck(std::span<const ActivationTensor> samples, const InitQuantizerSpec& spec,
                                const BottleneckOptions& options) {
    if (samples.empty()) throw DatasetError("run_bottleneck: layer has no fitting samples");
    if (!(options.threshold_db >= 0.0)) throw ConfigError("PSNR-loss threshold must be >= 0");
    const int layer_id = samples.front().layer_id;

    std::vector<BitplaneCodebook> codebooks;
    codebooks.reserve(samples.size());
    for (const auto& x : samples) {
        if (!(x.shape == samples.front().shape)) throw DatasetError("samples of one layer differ in shape", layer_id);
        codebooks.push_back(init_quantize(x, spec));
    }
    const auto sys = build_design(codebooks, samples);
    const auto grid = options.grid.resolve(lambda_max(sys, options.solver.nonnegative));

    std::vector<double> reference;
    if (options.reference == LossReference::initial_quantization) {
        reference = score(samples, codebooks, natural_coefficients(spec)).psnr_db;
    } else {
        reference = score(samples, codebooks, solve_lasso(sys, 0.0, options.solver).alpha).psnr_db;
    }

    BottleneckResult result;
    std::optional<QuantScheme> accepted;
    std::optional<QuantScheme> first;
    std::vector<double> warm;
    for (const double lambda : grid) {
        CoefficientVector cv;
        try {
            cv = solve_lasso(sys, lambda, options.solver, warm);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("layer " + std::to_string(layer_id) + ": " + e.what(), e.last_alpha(),
                                   e.last_change(), lambda);
        }
        warm = cv.alpha;
        const auto scores = score(samples, codebooks, cv.alpha);

        QuantScheme s;
        s.layer_id = layer_id;
        s.spec = spec;
        s.effective_rate = cv.rate();
        s.lambda = lambda;
        s.psnr_db = scores.overall_db;
        s.threshold_db = options.threshold_db;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            s.t_per_sample.push_back(psnr_loss(reference[i], scores.psnr_db[i]));
        }
        s.psnr_loss_db = *std::max_element(s.t_per_sample.begin(), s.t_per_sample.end());
        s.alpha = std::move(cv);
        result.trace.points.push_back({lambda, s.effective_rate, s.psnr_db, s.psnr_loss_db});

        if (!first) first = s;
        if (s.psnr_loss_db > options.threshold_db) break;
        accepted = std::move(s);
    }

    if (accepted) {
        result.scheme = std::move(*accepted);
    } else {
        result.scheme = std::move(*first);
        result.scheme.threshold_unmet = true;
    }
    return result;
}

InitQuantizerSpec QuantizerPlan::resolve(std::span<const ActivationTensor> calibration) const {
    return InitQuantizerSpec::make(kind, bits, 0.0, compute_clip_hi(calibration, clip));
}

AllLayersResult run_all_layers(std::span<const std::vector<ActivationTensor>> layers, const QuantizerPlan& plan,
                               const BottleneckOptions& options, int jobs) {
    const std::size_t n = layers.size();
    std::vector<std::optional<BottleneckResult>> done(n);
    std::vector<std::string> errors(n);

    auto run_one = [&](std::size_t l) {
        try {
            if (layers[l].empty()) throw DatasetError("layer has no samples", static_cast<int>(l + 1));
            const auto spec = plan.resolve(layers[l]);
            done[l] = run_bottleneck(layers[l], spec, options);
        } catch (const std::exception& e) {
            errors[l] = e.what();
        }
    };

    const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
    if (workers <= 1) {
        for (std::size_t l = 0; l < n; ++l) run_one(l);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t l = next++; l < n; l = next++) run_one(l);
            });
        }
    }

    AllLayersResult out;
    for (std::size_t l = 0; l < n; ++l) {
        if (done[l]) {
            out.layers.push_back(std::move(*done[l]));
        } else {
            const int id = layers[l].empty() ? static_cast<int>(l + 1) : layers[l].front().layer_id;
            out.failures.push_back({id, errors[l]});
        }
    }
    return out;
}

AllLayersResult run_all_layers(const DatasetManifest& manifest, const QuantizerPlan& plan,
                               const BottleneckOptions& options, int n_fit, int jobs) {
    if (n_fit < 1) throw ConfigError("n_fit must be >= 1");
    const int count = std::min(n_fit, manifest.num_samples);
    std::vector<std::vector<ActivationTensor>> layers(static_cast<std::size_t>(manifest.num_layers));
    AllLayersResult failed_reads;
    for (int l = 1; l <= manifest.num_layers; ++l) {
        try {
            layers[static_cast<std::size_t>(l - 1)] = read_layer(manifest, l, count);
        } catch (const std::exception& e) {
            failed_reads.failures.push_back({l, e.what()});
        }
    }
    // Layers whose data could not be read are reported, not run.
    std::vector<std::vector<ActivationTensor>> runnable;
    for (auto& layer : layers) {
        if (!layer.empty()) runnable.push_back(std::move(layer));
    }
    auto out = run_all_layers(runnable, plan, options, jobs);
    out.failures.insert(out.failures.end(), failed_reads.failures.begin(), failed_reads.failures.end());
    std::sort(out.failures.begin(), out.failures.end(),
              [](const LayerFailure& a, const LayerFailure& b) { return a.layer_id < b.layer_id; });
    return out;
}

}  // namespace bib
