// Command-line front end: stats, sweep, oracle, efficiency, reconstruct, synth.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bib/commands.hpp"
#include "bib/error.hpp"
#include "bib/run_config.hpp"

namespace {

// Flags mirror RunConfig; values left unset on the command line keep the
// config-file (or default) value.
struct ConfigFlags {
    std::string config;
    std::string save_config;
    std::optional<std::string> dataset, quantizer, clip, loss_reference, output;
    std::optional<int> bits, lambda_points, n_fit, jobs;
    std::optional<double> threshold, lambda_min_factor, lambda_max_factor, baseline_ops, baseline_mem;
    std::optional<std::uint64_t> seed;
    bool nonnegative = false;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "Run config file (key = value)");
        app->add_option("--save-config", save_config, "Write the effective config to this file");
        app->add_option("--dataset", dataset, "Dataset directory or manifest file");
        app->add_option("--quantizer", quantizer, "Initial quantizer: clip_scale | rounding");
        app->add_option("--bits,-D", bits, "Initial bit depth D");
        app->add_option("--clip", clip, "Clip rule: percentile:<q> | max");
        app->add_option("--threshold,-T", threshold, "PSNR-loss threshold T in dB");
        app->add_option("--lambda-min-factor", lambda_min_factor, "Smallest lambda as a fraction of lambda_max");
        app->add_option("--lambda-max-factor", lambda_max_factor, "Largest lambda as a fraction of lambda_max");
        app->add_option("--lambda-points", lambda_points, "Number of geometric grid points");
        app->add_option("--n-fit", n_fit, "Fitting samples per layer (0: min(N, 64))");
        app->add_flag("--nonnegative", nonnegative, "Constrain coefficients to be >= 0");
        app->add_option("--loss-reference", loss_reference, "PSNR-loss reference: initial | least_squares");
        app->add_option("--output,-o", output, "Output directory");
        app->add_option("--seed", seed, "Seed for synthetic data");
        app->add_option("--jobs,-j", jobs, "Layers processed in parallel");
        app->add_option("--baseline-ops", baseline_ops, "32-bit operation count (billions)");
        app->add_option("--baseline-mem", baseline_mem, "32-bit activation memory (megabytes)");
    }

    bib::RunConfig resolve() const {
        bib::RunConfig c = config.empty() ? bib::RunConfig{} : bib::RunConfig::load(config);
        if (dataset) c.dataset = *dataset;
        if (quantizer) c.quantizer = bib::parse_quantizer_kind(*quantizer);
        if (bits) c.bits = *bits;
        if (clip) c.clip = bib::ClipRule::parse(*clip);
        if (threshold) c.threshold_db = *threshold;
        if (lambda_min_factor) c.lambda_min_factor = *lambda_min_factor;
        if (lambda_max_factor) c.lambda_max_factor = *lambda_max_factor;
        if (lambda_points) c.lambda_points = *lambda_points;
        if (n_fit) c.n_fit = *n_fit;
        if (nonnegative) c.nonnegative = true;
        if (loss_reference) c.loss_reference = bib::parse_loss_reference(*loss_reference);
        if (output) c.output = *output;
        if (seed) c.seed = *seed;
        if (jobs) c.jobs = *jobs;
        if (baseline_ops) c.baseline_ops = *baseline_ops;
        if (baseline_mem) c.baseline_mem = *baseline_mem;
        c.validate();
        if (!save_config.empty()) c.save(save_config);
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    using namespace bib::cli;

    CLI::App app{"Bitwise information bottleneck activation quantization toolkit"};
    app.require_subcommand(1);

    ConfigFlags flags;
    int eta = -1;
    std::vector<double> bits_rows;
    std::vector<std::string> scheme_inputs;
    int synth_layers = 4;
    int synth_samples = 16;

    auto* stats = app.add_subcommand("stats", "Per-layer activation histograms and bitwise rate-of-one tables");
    auto* sweep = app.add_subcommand("sweep", "Threshold-driven lambda sweep; writes schemes and traces");
    auto* oracle = app.add_subcommand("oracle", "Compare best-subset, path and truncation distortions");
    oracle->add_option("--eta", eta, "Largest support size to enumerate (default D)");
    auto* eff = app.add_subcommand("efficiency", "Memory/operation estimates against a 32-bit baseline");
    eff->add_option("--rate", bits_rows, "Code rates to tabulate (repeatable)");
    eff->add_option("--scheme", scheme_inputs, "Scheme files or sweep output directories");
    auto* recon = app.add_subcommand("reconstruct", "Apply scheme files and write reconstructed tensors");
    recon->add_option("--scheme", scheme_inputs, "Scheme files or sweep output directories")->required();
    auto* synth = app.add_subcommand("synth", "Write the built-in synthetic rectified-sparse dataset");
    synth->add_option("--layers", synth_layers, "Number of layers (1..4)")->check(CLI::Range(1, 4));
    synth->add_option("--samples", synth_samples, "Samples per layer")->check(CLI::PositiveNumber);

    for (auto* sub : {stats, sweep, oracle, eff, recon, synth}) flags.attach(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    bib::RunConfig config;
    try {
        config = flags.resolve();
    } catch (const bib::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    std::vector<std::filesystem::path> schemes(scheme_inputs.begin(), scheme_inputs.end());
    if (stats->parsed()) return cmd_stats(config, std::cout, std::cerr);
    if (sweep->parsed()) return cmd_sweep(config, std::cout, std::cerr);
    if (oracle->parsed()) return cmd_oracle(config, eta, std::cout, std::cerr);
    if (eff->parsed()) {
        if (!flags.output) config.output.clear();
        return cmd_efficiency(config, bits_rows, schemes, std::cout, std::cerr);
    }
    if (recon->parsed()) return cmd_reconstruct(config, schemes, std::cout, std::cerr);

    auto spec = bib::SyntheticSpec::default_four_layer(synth_samples, config.seed);
    spec.layers.resize(static_cast<std::size_t>(synth_layers));
    return cmd_synth(spec, config.output, std::cout, std::cerr);
}
