#include "bib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bib/error.hpp"

namespace bib {

double mse(std::span<const float> x, std::span<const double> recon) {
    if (x.size() != recon.size()) throw DatasetError("mse: length mismatch");
    if (x.empty()) throw DatasetError("mse: empty input");
    double sum = 0.0;
    double carry = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - recon[i];
        const double v = d * d;
        const double t = sum + v;
        carry += sum >= v ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    return (sum + carry) / static_cast<double>(x.size());
}

double mse(std::span<const ActivationTensor> x, std::span<const ActivationTensor> recon) {
    if (x.size() != recon.size()) throw DatasetError("mse: tensor lists differ in length");
    if (x.empty()) throw DatasetError("mse: empty input");
    double sum = 0.0;
    double carry = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < x.size(); ++s) {
        if (!(x[s].shape == recon[s].shape) || x[s].values.size() != recon[s].values.size()) {
            throw DatasetError("mse: shape mismatch at tensor " + std::to_string(s + 1), x[s].layer_id);
        }
        for (std::size_t i = 0; i < x[s].values.size(); ++i) {
            const double d = static_cast<double>(x[s].values[i]) - static_cast<double>(recon[s].values[i]);
            const double v = d * d;
            const double t = sum + v;
            carry += sum >= v ? (sum - t) + v : (v - t) + sum;
            sum = t;
        }
        count += x[s].values.size();
    }
    if (count == 0) throw DatasetError("mse: empty tensors");
    return (sum + carry) / static_cast<double>(count);
}

double psnr(double mse_value, int bits) {
    if (!(mse_value >= 0.0)) throw DatasetError("psnr: mse must be >= 0");
    if (bits < 1 || bits > 31) throw ConfigError("psnr: bit depth out of range");
    if (mse_value == 0.0) return INFINITY;
    const double peak = std::ldexp(1.0, bits) - 1.0;
    return 10.0 * std::log10(peak * peak / mse_value);
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

EfficiencyReport efficiency(double bits, double baseline_ops, double baseline_mem) {
    if (!(bits > 0.0 && bits <= 32.0)) {
        throw ConfigError("efficiency: bits must be in (0, 32], got " + std::to_string(bits));
    }
    if (!(baseline_ops > 0.0) || !(baseline_mem > 0.0)) throw ConfigError("efficiency: baselines must be positive");
    EfficiencyReport r;
    r.bits = bits;
    r.baseline_ops = baseline_ops;
    r.baseline_mem = baseline_mem;
    r.ops_count = baseline_ops * bits / 32.0;
    r.mem_bytes = baseline_mem * bits / 32.0;
    r.improvement = 32.0 / bits;
    r.improvement_table = round1(baseline_mem) / round1(r.mem_bytes);
    return r;
}

namespace {

std::string fixed1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", round1(v));
    return buf;
}

std::string bits_label(double bits) {
    char buf[64];
    if (bits == std::floor(bits)) {
        std::snprintf(buf, sizeof buf, "%d", static_cast<int>(bits));
    } else {
        std::snprintf(buf, sizeof buf, "%.3f", bits);
    }
    return buf;
}

}  // namespace

std::string efficiency_csv(std::span<const EfficiencyReport> rows) {
    std::string out = "bits,operations_B,memory_M,improvement,improvement_exact\n";
    for (const auto& r : rows) {
        char exact[64];
        std::snprintf(exact, sizeof exact, "%.6f", r.improvement);
        out += bits_label(r.bits) + "," + fixed1(r.ops_count) + "," + fixed1(r.mem_bytes) + "," +
               fixed1(r.improvement_table) + "," + exact + "\n";
    }
    return out;
}

std::string efficiency_table(std::span<const EfficiencyReport> rows) {
    auto line = [&](const std::string& head, auto cell) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-16s", head.c_str());
        std::string s = buf;
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%10s", cell(r).c_str());
            s += buf;
        }
        return s + "\n";
    };
    std::string out;
    out += line("Number of Bits", [](const EfficiencyReport& r) { return bits_label(r.bits) + " bit"; });
    out += line("Operation", [](const EfficiencyReport& r) { return fixed1(r.ops_count) + "B"; });
    out += line("Memory", [](const EfficiencyReport& r) { return fixed1(r.mem_bytes) + "M"; });
    out += line("Improvement", [](const EfficiencyReport& r) { return fixed1(r.improvement_table) + "x"; });
    return out;
}

BitStatistics bit_statistics(std::span<const BitplaneCodebook> codebooks, std::span<const double> alpha) {
    if (codebooks.empty()) throw DatasetError("bit_statistics: no codebooks");
    const auto& spec = codebooks.front().spec();
    const auto D = static_cast<std::size_t>(spec.bits);
    BitStatistics st;
    st.rate_of_one.assign(D, 0.0);
    std::uint64_t total = 0;
    std::vector<std::uint64_t> ones(D, 0);
    for (const auto& cb : codebooks) {
        if (!(cb.spec() == spec)) throw DatasetError("bit_statistics: codebooks use different specs", cb.layer_id());
        total += cb.size();
        for (std::size_t j = 0; j < D; ++j) ones[j] += cb.count_ones(static_cast<int>(j + 1));
    }
    for (std::size_t j = 0; j < D; ++j) {
        st.rate_of_one[j] = total ? static_cast<double>(ones[j]) / static_cast<double>(total) : 0.0;
    }
    if (!alpha.empty()) {
        if (alpha.size() != D) throw DatasetError("bit_statistics: coefficient length mismatch");
        const auto natural = natural_coefficients(spec);
        st.coefficient_ratio.resize(D);
        for (std::size_t j = 0; j < D; ++j) st.coefficient_ratio[j] = alpha[j] / natural[j];
    }
    return st;
}

Histogram value_histogram(std::span<const ActivationTensor> tensors, int bins) {
    if (bins < 1) throw ConfigError("histogram needs at least one bin");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    bool first = true;
    for (const auto& t : tensors) {
        for (float v : t.values) {
            if (first) {
                h.lo = h.hi = v;
                first = false;
            }
            h.lo = std::min<double>(h.lo, v);
            h.hi = std::max<double>(h.hi, v);
        }
    }
    if (first) return h;
    const double width = (h.hi - h.lo) / bins;
    for (const auto& t : tensors) {
        for (float v : t.values) {
            auto b = width > 0.0 ? static_cast<std::size_t>((v - h.lo) / width) : 0;
            h.counts[std::min(b, h.counts.size() - 1)]++;
        }
    }
    return h;
}

std::vector<std::uint64_t> code_histogram(std::span<const BitplaneCodebook> codebooks) {
    if (codebooks.empty()) return {};
    std::vector<std::uint64_t> counts(std::size_t{1} << codebooks.front().bits(), 0);
    for (const auto& cb : codebooks) {
        if (cb.bits() != codebooks.front().bits()) throw DatasetError("code_histogram: bit depths differ");
        for (auto c : cb.codes()) counts[c]++;
    }
    return counts;
}

}  // namespace bib
