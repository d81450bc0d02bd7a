#include "bib/bitplane_codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "bib/error.hpp"
#include "bib/kvtext.hpp"

namespace bib {

std::string_view to_string(QuantizerKind kind) {
    switch (kind) {
        case QuantizerKind::rounding:
            return "rounding";
        case QuantizerKind::clip_scale:
            return "clip_scale";
    }
    return "?";
}

QuantizerKind parse_quantizer_kind(std::string_view text) {
    if (text == "rounding") return QuantizerKind::rounding;
    if (text == "clip_scale") return QuantizerKind::clip_scale;
    throw ConfigError("unknown quantizer kind `" + std::string(text) + "` (rounding|clip_scale)");
}

InitQuantizerSpec InitQuantizerSpec::make(QuantizerKind kind, int bits, double clip_lo, double clip_hi) {
    InitQuantizerSpec s;
    s.kind = kind;
    s.bits = bits;
    s.clip_lo = clip_lo;
    s.clip_hi = clip_hi;
    if (bits < 1 || bits > kMaxBits) {
        throw ConfigError("bit depth must be in [1, " + std::to_string(kMaxBits) + "], got " + std::to_string(bits));
    }
    s.scale = (clip_hi - clip_lo) / static_cast<double>(s.max_code());
    s.validate();
    return s;
}

void InitQuantizerSpec::validate() const {
    if (bits < 1 || bits > kMaxBits) {
        throw ConfigError("bit depth must be in [1, " + std::to_string(kMaxBits) + "], got " + std::to_string(bits));
    }
    if (!std::isfinite(clip_lo) || !std::isfinite(clip_hi) || !(clip_lo < clip_hi)) {
        throw ConfigError("clip range must satisfy clip_lo < clip_hi");
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("scale must be positive");
    if (kind == QuantizerKind::rounding && clip_lo != 0.0) {
        throw ConfigError("rounding quantizer requires clip_lo = 0");
    }
    if (kind == QuantizerKind::clip_scale) {
        const double expected = (clip_hi - clip_lo) / static_cast<double>(max_code());
        if (std::fabs(scale - expected) > 1e-12 * expected) {
            throw ConfigError("clip_scale quantizer requires scale = (clip_hi - clip_lo) / (2^D - 1)");
        }
    }
}

std::string ClipRule::to_string() const {
    if (kind == Kind::exact_max) return "max";
    return "percentile:" + format_real(percentile);
}

ClipRule ClipRule::parse(std::string_view text) {
    ClipRule r;
    if (text == "max") {
        r.kind = Kind::exact_max;
        return r;
    }
    constexpr std::string_view prefix = "percentile:";
    if (text.substr(0, prefix.size()) == prefix) {
        r.kind = Kind::percentile;
        r.percentile = parse_real(text.substr(prefix.size()), "clip");
        if (!(r.percentile > 0.0 && r.percentile <= 100.0)) {
            throw ConfigError("clip percentile must be in (0, 100]");
        }
        return r;
    }
    throw ConfigError("unknown clip rule `" + std::string(text) + "` (percentile:<q>|max)");
}

double compute_clip_hi(std::span<const ActivationTensor> calibration, const ClipRule& rule) {
    std::vector<double> mags;
    for (const auto& t : calibration) {
        for (float v : t.values) mags.push_back(std::fabs(static_cast<double>(v)));
    }
    if (mags.empty()) throw DatasetError("no calibration data for clipping");

    double hi = 0.0;
    if (rule.kind == ClipRule::Kind::exact_max || rule.percentile >= 100.0) {
        hi = *std::max_element(mags.begin(), mags.end());
    } else {
        const double pos = rule.percentile / 100.0 * static_cast<double>(mags.size() - 1);
        const auto lo_idx = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(lo_idx);
        std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(lo_idx), mags.end());
        const double lo_val = mags[lo_idx];
        double hi_val = lo_val;
        if (lo_idx + 1 < mags.size()) {
            hi_val = *std::min_element(mags.begin() + static_cast<std::ptrdiff_t>(lo_idx + 1), mags.end());
        }
        hi = lo_val + frac * (hi_val - lo_val);
    }
    return hi > 0.0 ? hi : 1.0;
}

double round_half_away(double v) { return std::round(v); }

BitplaneCodebook::BitplaneCodebook(InitQuantizerSpec spec, Shape shape, std::vector<std::uint16_t> codes,
                                   int layer_id, int sample_id)
    : spec_(spec), shape_(shape), codes_(std::move(codes)), layer_id_(layer_id), sample_id_(sample_id) {
    spec_.validate();
    if (codes_.size() != shape_.numel()) throw DatasetError("code count does not match shape", layer_id);
    const auto words = (codes_.size() + 63) / 64;
    planes_.assign(static_cast<std::size_t>(spec_.bits), std::vector<std::uint64_t>(words, 0));
    const auto max_code = spec_.max_code();
    for (std::size_t i = 0; i < codes_.size(); ++i) {
        const std::uint32_t c = codes_[i];
        if (c > max_code) {
            throw IndexError("code " + std::to_string(c) + " at index " + std::to_string(i) + " exceeds 2^D - 1");
        }
        for (int j = 0; j < spec_.bits; ++j) {
            if ((c >> j) & 1u) planes_[static_cast<std::size_t>(j)][i / 64] |= std::uint64_t{1} << (i % 64);
        }
    }
}

bool BitplaneCodebook::bit(int j, std::size_t index) const {
    return (codes_[index] >> (j - 1)) & 1u;
}

std::span<const std::uint64_t> BitplaneCodebook::plane_words(int j) const {
    if (j < 1 || j > spec_.bits) throw IndexError("bit index " + std::to_string(j) + " out of range");
    return planes_[static_cast<std::size_t>(j - 1)];
}

std::vector<std::uint8_t> BitplaneCodebook::plane(int j) const {
    if (j < 1 || j > spec_.bits) throw IndexError("bit index " + std::to_string(j) + " out of range");
    std::vector<std::uint8_t> out(codes_.size());
    for (std::size_t i = 0; i < codes_.size(); ++i) out[i] = static_cast<std::uint8_t>(bit(j, i));
    return out;
}

std::uint64_t BitplaneCodebook::count_ones(int j) const {
    std::uint64_t n = 0;
    for (auto w : plane_words(j)) n += static_cast<std::uint64_t>(std::popcount(w));
    return n;
}

std::vector<std::uint16_t> quantize_codes(std::span<const float> x, const InitQuantizerSpec& spec) {
    spec.validate();
    const double max_code = spec.max_code();
    std::vector<std::uint16_t> codes(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        double c = 0.0;
        if (spec.kind == QuantizerKind::clip_scale) {
            c = round_half_away((std::clamp(v, spec.clip_lo, spec.clip_hi) - spec.clip_lo) / spec.scale);
            c = std::min(c, max_code);  // guards (hi - lo) / scale landing a hair above 2^D - 1
        } else {
            c = std::clamp(round_half_away(v / spec.scale), 0.0, max_code);
        }
        codes[i] = static_cast<std::uint16_t>(c);
    }
    return codes;
}

BitplaneCodebook init_quantize(const ActivationTensor& x, const InitQuantizerSpec& spec) {
    return BitplaneCodebook(spec, x.shape, quantize_codes(x.values, spec), x.layer_id, x.sample_id);
}

std::vector<std::vector<std::uint8_t>> decompose_bits(std::span<const std::uint32_t> codes, int bits) {
    if (bits < 1 || bits > 31) throw ConfigError("bit depth out of range");
    const std::uint32_t max_code = (std::uint32_t{1} << bits) - 1;
    std::vector<std::vector<std::uint8_t>> planes(static_cast<std::size_t>(bits),
                                                  std::vector<std::uint8_t>(codes.size()));
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > max_code) {
            throw IndexError("code " + std::to_string(codes[i]) + " at index " + std::to_string(i) +
                             " exceeds 2^D - 1 = " + std::to_string(max_code));
        }
        for (int j = 0; j < bits; ++j) planes[static_cast<std::size_t>(j)][i] = (codes[i] >> j) & 1u;
    }
    return planes;
}

std::vector<std::uint32_t> compose_bits(const std::vector<std::vector<std::uint8_t>>& planes) {
    if (planes.empty()) return {};
    std::vector<std::uint32_t> codes(planes.front().size(), 0);
    for (std::size_t j = 0; j < planes.size(); ++j) {
        if (planes[j].size() != codes.size()) throw DatasetError("plane sizes differ");
        for (std::size_t i = 0; i < codes.size(); ++i) codes[i] += std::uint32_t{planes[j][i]} << j;
    }
    return codes;
}

std::vector<double> natural_coefficients(const InitQuantizerSpec& spec) {
    std::vector<double> alpha(static_cast<std::size_t>(spec.bits));
    for (int j = 0; j < spec.bits; ++j) alpha[static_cast<std::size_t>(j)] = std::ldexp(spec.scale, j);
    return alpha;
}

std::vector<double> truncation_coefficients(const InitQuantizerSpec& spec, int d) {
    if (d < 0 || d > spec.bits) throw ConfigError("truncation rate out of range");
    auto alpha = natural_coefficients(spec);
    for (int j = 0; j < spec.bits - d; ++j) alpha[static_cast<std::size_t>(j)] = 0.0;
    return alpha;
}

std::vector<double> reconstruct_values(const BitplaneCodebook& codebook, std::span<const double> alpha) {
    const int bits = codebook.bits();
    if (alpha.size() != static_cast<std::size_t>(bits)) {
        throw DatasetError("coefficient vector has length " + std::to_string(alpha.size()) + ", expected " +
                           std::to_string(bits));
    }
    // Every code maps to one value, so tabulate once per codebook.
    std::vector<double> table(std::size_t{1} << bits);
    for (std::size_t c = 0; c < table.size(); ++c) {
        double v = 0.0;
        for (int j = 0; j < bits; ++j) {
            if ((c >> j) & 1u) v += alpha[static_cast<std::size_t>(j)];
        }
        table[c] = codebook.spec().clip_lo + v;
    }
    std::vector<double> out(codebook.size());
    const auto codes = codebook.codes();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = table[codes[i]];
    return out;
}

ActivationTensor reconstruct(const BitplaneCodebook& codebook, std::span<const double> alpha) {
    const auto values = reconstruct_values(codebook, alpha);
    ActivationTensor t;
    t.layer_id = codebook.layer_id();
    t.sample_id = codebook.sample_id();
    t.shape = codebook.shape();
    t.values.assign(values.begin(), values.end());
    return t;
}

ActivationTensor dequantize_natural(const BitplaneCodebook& codebook) {
    ActivationTensor t;
    t.layer_id = codebook.layer_id();
    t.sample_id = codebook.sample_id();
    t.shape = codebook.shape();
    t.values.resize(codebook.size());
    const auto& spec = codebook.spec();
    const auto codes = codebook.codes();
    for (std::size_t i = 0; i < codes.size(); ++i) {
        t.values[i] = static_cast<float>(spec.clip_lo + spec.scale * codes[i]);
    }
    return t;
}

}  // namespace bib
