#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bib/tensor_store.hpp"

namespace bib {

inline constexpr int kMaxBits = 16;

enum class QuantizerKind {
    rounding,    // c = clamp(round(x / scale), 0, 2^D - 1), clip_lo fixed at 0
    clip_scale,  // c = round((clamp(x, lo, hi) - lo) / scale)
};

std::string_view to_string(QuantizerKind kind);
QuantizerKind parse_quantizer_kind(std::string_view text);

struct InitQuantizerSpec {
    QuantizerKind kind = QuantizerKind::clip_scale;
    int bits = 8;
    double clip_lo = 0.0;
    double clip_hi = 1.0;
    double scale = 1.0 / 255.0;

    /// Derives scale = (hi - lo) / (2^D - 1) and validates.
    static InitQuantizerSpec make(QuantizerKind kind, int bits, double clip_lo, double clip_hi);

    void validate() const;
    std::uint32_t max_code() const { return (std::uint32_t{1} << bits) - 1; }

    friend bool operator==(const InitQuantizerSpec&, const InitQuantizerSpec&) = default;
};

/// How clip_hi is chosen from calibration data (clip_lo is always 0).
struct ClipRule {
    enum class Kind { percentile, exact_max };
    Kind kind = Kind::percentile;
    double percentile = 99.9;

    std::string to_string() const;
    static ClipRule parse(std::string_view text);  // "percentile:99.9" or "max"
};

/// Percentile (linear interpolation between order statistics) or maximum of
/// |x| over all calibration tensors. Falls back to 1.0 when that is zero.
double compute_clip_hi(std::span<const ActivationTensor> calibration, const ClipRule& rule);

/// Round half away from zero.
double round_half_away(double v);

/// Binary expansion of a D-bit code tensor, bit j = 1 is the least significant.
/// Planes are held packed, 64 elements per word; codes are kept alongside.
class BitplaneCodebook {
public:
    BitplaneCodebook(InitQuantizerSpec spec, Shape shape, std::vector<std::uint16_t> codes,
                     int layer_id = 1, int sample_id = 1);

    const InitQuantizerSpec& spec() const { return spec_; }
    const Shape& shape() const { return shape_; }
    int bits() const { return spec_.bits; }
    std::size_t size() const { return codes_.size(); }
    int layer_id() const { return layer_id_; }
    int sample_id() const { return sample_id_; }

    std::span<const std::uint16_t> codes() const { return codes_; }

    /// j in [1, D].
    bool bit(int j, std::size_t index) const;
    std::span<const std::uint64_t> plane_words(int j) const;
    std::vector<std::uint8_t> plane(int j) const;
    std::uint64_t count_ones(int j) const;

private:
    InitQuantizerSpec spec_;
    Shape shape_;
    std::vector<std::uint16_t> codes_;
    std::vector<std::vector<std::uint64_t>> planes_;
    int layer_id_;
    int sample_id_;
};

std::vector<std::uint16_t> quantize_codes(std::span<const float> x, const InitQuantizerSpec& spec);

BitplaneCodebook init_quantize(const ActivationTensor& x, const InitQuantizerSpec& spec);

/// planes[j - 1][idx] = bit (j - 1) of codes[idx]. Throws IndexError naming
/// the first code outside [0, 2^D - 1].
std::vector<std::vector<std::uint8_t>> decompose_bits(std::span<const std::uint32_t> codes, int bits);

/// Inverse of decompose_bits with natural coefficients 2^(j-1).
std::vector<std::uint32_t> compose_bits(const std::vector<std::vector<std::uint8_t>>& planes);

/// alpha_j = 2^(j-1) * scale, i.e. the fixed-point expansion in real units.
std::vector<double> natural_coefficients(const InitQuantizerSpec& spec);

/// Keeps the top `d` natural coefficients, zeroing bits 1..D-d.
std::vector<double> truncation_coefficients(const InitQuantizerSpec& spec, int d);

/// clip_lo + sum_j alpha_j * plane_j, evaluated in double precision.
std::vector<double> reconstruct_values(const BitplaneCodebook& codebook, std::span<const double> alpha);

ActivationTensor reconstruct(const BitplaneCodebook& codebook, std::span<const double> alpha);

/// clip_lo + scale * code.
ActivationTensor dequantize_natural(const BitplaneCodebook& codebook);

}  // namespace bib
