#include "bib/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "bib/error.hpp"
#include "bib/metrics.hpp"
#include "bib/quant_scheme.hpp"

namespace fs = std::filesystem;

namespace bib::cli {

namespace {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

std::string num(double v, const char* fmt = "%.6f") {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string layer_file(const char* stem, int layer, const char* ext) {
    return std::string(stem) + "_layer_" + std::to_string(layer) + ext;
}

std::vector<ActivationTensor> fit_samples(const RunConfig& config, const DatasetManifest& m, int layer) {
    return read_layer(m, layer, config.fit_samples(m.num_samples));
}

}  // namespace

std::vector<fs::path> expand_scheme_paths(const std::vector<fs::path>& inputs) {
    std::vector<fs::path> out;
    for (const auto& p : inputs) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                const auto name = e.path().filename().string();
                if (name.rfind("scheme_layer_", 0) == 0 && e.path().extension() == ".txt") found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(p);
        }
    }
    return out;
}

int cmd_stats(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        config.validate();
        const auto m = load_dataset(config.dataset);
        fs::create_directories(config.output);
        const auto plan = config.plan();
        for (int l = 1; l <= m.num_layers; ++l) {
            const auto samples = fit_samples(config, m, l);
            const auto spec = plan.resolve(samples);
            std::vector<BitplaneCodebook> books;
            for (const auto& s : samples) books.push_back(init_quantize(s, spec));
            const auto st = bit_statistics(books, {});
            const auto values = value_histogram(samples, 64);
            const auto codes = code_histogram(books);

            std::string text;
            text += "# layer " + std::to_string(l) + " shape " + to_string(m.layer(l).shape) + " samples " +
                    std::to_string(samples.size()) + "\n";
            text += "# quantizer " + std::string(to_string(spec.kind)) + " D " + std::to_string(spec.bits) +
                    " clip_lo " + format_real(spec.clip_lo) + " clip_hi " + format_real(spec.clip_hi) + " scale " +
                    format_real(spec.scale) + "\n";
            text += "# rate_of_one\nbit,rate_of_one\n";
            for (std::size_t j = 0; j < st.rate_of_one.size(); ++j) {
                text += std::to_string(j + 1) + "," + num(st.rate_of_one[j], "%.9f") + "\n";
            }
            text += "# value_histogram\nbin_lo,bin_hi,count\n";
            const double width = (values.hi - values.lo) / static_cast<double>(values.counts.size());
            for (std::size_t b = 0; b < values.counts.size(); ++b) {
                text += num(values.lo + width * static_cast<double>(b), "%.9g") + "," +
                        num(values.lo + width * static_cast<double>(b + 1), "%.9g") + "," +
                        std::to_string(values.counts[b]) + "\n";
            }
            text += "# code_histogram\ncode,count\n";
            for (std::size_t c = 0; c < codes.size(); ++c) {
                text += std::to_string(c) + "," + std::to_string(codes[c]) + "\n";
            }
            write_file_atomic(config.output / layer_file("stats", l, ".csv"), text);

            out << "layer " << l << " rate of one (bit 1..D):";
            for (double r : st.rate_of_one) out << " " << num(r, "%.4f");
            out << "\n";
        }
        return kExitOk;
    });
}

int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        config.validate();
        const auto m = load_dataset(config.dataset);
        fs::create_directories(config.output);
        const auto result = run_all_layers(m, config.plan(), config.bottleneck_options(),
                                           config.fit_samples(m.num_samples), config.jobs);

        std::string summary = "layer,d,lambda,psnr_db,psnr_loss_db,threshold_unmet\n";
        double rate_sum = 0.0;
        for (const auto& r : result.layers) {
            const auto& s = r.scheme;
            write_scheme(s, config.output / layer_file("scheme", s.layer_id, ".txt"));
            write_trace(r.trace, config.output / layer_file("trace", s.layer_id, ".csv"));
            summary += std::to_string(s.layer_id) + "," + std::to_string(s.effective_rate) + "," +
                       num(s.lambda, "%.17g") + "," + num(s.psnr_db, "%.17g") + "," + num(s.psnr_loss_db, "%.17g") +
                       "," + (s.threshold_unmet ? "true" : "false") + "\n";
            rate_sum += s.effective_rate;
            out << "layer " << s.layer_id << ": d = " << s.effective_rate << ", lambda = " << num(s.lambda, "%.6g")
                << ", PSNR loss = " << num(s.psnr_loss_db, "%.3f") << " dB"
                << (s.threshold_unmet ? " (threshold unmet)" : "") << "\n";
        }
        for (const auto& f : result.failures) {
            summary += "# failed layer " + std::to_string(f.layer_id) + ": " + f.message + "\n";
            err << "layer " << f.layer_id << " failed: " << f.message << "\n";
        }
        if (!result.layers.empty()) {
            const double avg = rate_sum / static_cast<double>(result.layers.size());
            summary += "# average_d = " + num(avg, "%.6f") + "\n";
            out << "average d = " << num(avg, "%.3f") << " over " << result.layers.size() << " layer(s)\n";
        }
        write_file_atomic(config.output / "summary.csv", summary);
        return result.failures.empty() ? kExitOk : kExitPartial;
    });
}

int cmd_oracle(const RunConfig& config, int eta, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        config.validate();
        if (config.bits > kMaxOracleBits) {
            throw ConfigError("oracle enumeration needs D <= " + std::to_string(kMaxOracleBits));
        }
        const int max_eta = eta < 0 ? config.bits : std::min(eta, config.bits);
        const auto m = load_dataset(config.dataset);
        fs::create_directories(config.output);
        const auto opts = config.bottleneck_options();
        for (int l = 1; l <= m.num_layers; ++l) {
            const auto samples = fit_samples(config, m, l);
            const auto spec = config.plan().resolve(samples);
            std::vector<BitplaneCodebook> books;
            for (const auto& s : samples) books.push_back(init_quantize(s, spec));
            const auto sys = build_design(books, samples);
            const auto grid = opts.grid.resolve(lambda_max(sys, opts.solver.nonnegative));
            const auto path = lasso_path(sys, grid, opts.solver);

            std::map<int, double> best_path;
            for (const auto& p : path) {
                auto it = best_path.find(p.rate());
                if (it == best_path.end() || p.residual_sse < it->second) best_path[p.rate()] = p.residual_sse;
            }

            std::string text = "d,oracle_sse,path_sse,truncation_sse\n";
            out << "layer " << l << "\n  d      oracle        path  truncation\n";
            for (int d = 0; d <= max_eta; ++d) {
                const double oracle = oracle_l0(sys, d).residual_sse;
                const double trunc = residual_sse(sys, truncation_coefficients(spec, d));
                const auto it = best_path.find(d);
                const double path_sse = it == best_path.end() ? NAN : it->second;
                text += std::to_string(d) + "," + num(oracle, "%.17g") + "," +
                        (std::isnan(path_sse) ? std::string("nan") : num(path_sse, "%.17g")) + "," +
                        num(trunc, "%.17g") + "\n";
                char line[160];
                std::snprintf(line, sizeof line, "  %-2d %11.5g %11s %11.5g\n", d, oracle,
                              std::isnan(path_sse) ? "-" : num(path_sse, "%.5g").c_str(), trunc);
                out << line;
            }
            write_file_atomic(config.output / layer_file("oracle", l, ".csv"), text);
        }
        return kExitOk;
    });
}

int cmd_efficiency(const RunConfig& config, const std::vector<double>& bits, const std::vector<fs::path>& schemes,
                   std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        config.validate();
        std::vector<double> rates = bits;
        const auto files = expand_scheme_paths(schemes);
        if (!schemes.empty() && files.empty()) throw ConfigError("no scheme files found");
        if (!files.empty()) {
            double sum = 0.0;
            for (const auto& f : files) sum += read_scheme(f).effective_rate;
            const double avg = sum / static_cast<double>(files.size());
            out << "average effective rate over " << files.size() << " scheme(s): " << num(avg, "%.4f") << "\n";
            rates.push_back(avg);
        }
        if (rates.empty()) rates = {1, 2, 3, 4, 5, 6, 7, 8, 32};

        std::vector<EfficiencyReport> rows;
        for (double b : rates) rows.push_back(efficiency(b, config.baseline_ops, config.baseline_mem));
        out << efficiency_table(rows);
        if (!config.output.empty()) {
            fs::create_directories(config.output);
            write_file_atomic(config.output / "efficiency.csv", efficiency_csv(rows));
        }
        return kExitOk;
    });
}

int cmd_reconstruct(const RunConfig& config, const std::vector<fs::path>& schemes, std::ostream& out,
                    std::ostream& err) {
    return guarded(err, [&] {
        config.validate();
        const auto m = load_dataset(config.dataset);
        std::map<int, QuantScheme> by_layer;
        for (const auto& f : expand_scheme_paths(schemes)) {
            auto s = read_scheme(f);
            if (!by_layer.emplace(s.layer_id, s).second) {
                throw ConfigError("two scheme files for layer " + std::to_string(s.layer_id));
            }
        }
        std::vector<Shape> shapes;
        for (int l = 1; l <= m.num_layers; ++l) {
            if (!by_layer.count(l)) throw ConfigError("no scheme file for layer " + std::to_string(l));
            shapes.push_back(m.layer(l).shape);
        }
        DatasetWriter writer(config.output, m.num_samples, shapes);
        writer.add_comment("reconstructed activations");
        for (int l = 1; l <= m.num_layers; ++l) {
            const auto& s = by_layer.at(l);
            const auto mse_scale = s.spec.scale * s.spec.scale;
            double sq = 0.0;
            std::size_t n = 0;
            for (int i = 1; i <= m.num_samples; ++i) {
                const auto x = read_tensor(m, l, i);
                const auto cb = init_quantize(x, s.spec);
                const auto recon = reconstruct(cb, s.alpha.alpha);
                writer.write_tensor(recon);
                const auto values = reconstruct_values(cb, s.alpha.alpha);
                sq += mse(x.values, values) * static_cast<double>(x.values.size());
                n += x.values.size();
            }
            out << "layer " << l << ": d = " << s.effective_rate << ", PSNR over " << m.num_samples
                << " sample(s) = " << num(psnr(sq / static_cast<double>(n) / mse_scale, s.spec.bits), "%.3f")
                << " dB\n";
        }
        writer.finish();
        return kExitOk;
    });
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& root, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto m = write_synthetic_dataset(spec, root);
        out << "wrote " << m.num_layers << " layer(s) x " << m.num_samples << " sample(s) to " << root.string()
            << "\n";
        return kExitOk;
    });
}

}  // namespace bib::cli
