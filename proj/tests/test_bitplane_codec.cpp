#include <Eigen/Dense>
#include <cmath>

#include "bib/bitplane_codec.hpp"
#include "bib/error.hpp"
#include "bib/metrics.hpp"
#include "bib/sparse_solver.hpp"
#include "bib/synthetic.hpp"
#include "doctest.h"

using namespace bib;

namespace {

ActivationTensor make_tensor(std::vector<float> v) {
    ActivationTensor t;
    t.shape = {1, 1, v.size()};
    t.values = std::move(v);
    return t;
}

}  // namespace

TEST_CASE("endpoints map to 0 and 2^D - 1") {
    const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, 3, 0.0, 1.0);
    const auto cb = init_quantize(make_tensor({0.0f, 1.0f}), spec);
    CHECK(cb.codes()[0] == 0);
    CHECK(cb.codes()[1] == 7);
    for (int j = 1; j <= 3; ++j) CHECK(cb.plane(j) == std::vector<std::uint8_t>{0, 1});
}

TEST_CASE("0.5 at D = 3 rounds 3.5 up to code 4") {
    const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, 3, 0.0, 1.0);
    const auto cb = init_quantize(make_tensor({0.5f}), spec);
    CHECK(cb.codes()[0] == 4);
    CHECK(cb.plane(1) == std::vector<std::uint8_t>{0});
    CHECK(cb.plane(2) == std::vector<std::uint8_t>{0});
    CHECK(cb.plane(3) == std::vector<std::uint8_t>{1});
}

TEST_CASE("ties round half away from zero") {
    const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, 3, 0.0, 7.0);
    const auto codes = quantize_codes(std::vector<float>{2.5f, 3.5f, 0.49f, 9.0f, -1.0f}, spec);
    CHECK(codes == std::vector<std::uint16_t>{3, 4, 0, 7, 0});

    const auto r = InitQuantizerSpec::make(QuantizerKind::rounding, 3, 0.0, 7.0);
    CHECK(quantize_codes(std::vector<float>{-0.5f, 0.5f, 6.5f, 100.f}, r) == std::vector<std::uint16_t>{0, 1, 7, 7});
    CHECK(round_half_away(-2.5) == -3.0);
}

TEST_CASE("quantizer spec validation") {
    CHECK_THROWS_AS(InitQuantizerSpec::make(QuantizerKind::clip_scale, 0, 0, 1), ConfigError);
    CHECK_THROWS_AS(InitQuantizerSpec::make(QuantizerKind::clip_scale, 17, 0, 1), ConfigError);
    CHECK_THROWS_AS(InitQuantizerSpec::make(QuantizerKind::clip_scale, 8, 1, 1), ConfigError);
    CHECK_THROWS_AS(InitQuantizerSpec::make(QuantizerKind::rounding, 8, 0.5, 1), ConfigError);
    auto s = InitQuantizerSpec::make(QuantizerKind::clip_scale, 8, 0, 1);
    s.scale *= 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("decompose_bits") {
    const std::vector<std::uint32_t> five{5};
    const auto p = decompose_bits(five, 3);
    CHECK(p[0][0] == 1);
    CHECK(p[1][0] == 0);
    CHECK(p[2][0] == 1);

    for (int D : {1, 4, 9}) {
        const std::vector<std::uint32_t> zero{0}, full{(1u << D) - 1};
        for (const auto& plane : decompose_bits(zero, D)) CHECK(plane[0] == 0);
        for (const auto& plane : decompose_bits(full, D)) CHECK(plane[0] == 1);
    }

    const std::vector<std::uint32_t> bad{1, 2, 8};
    CHECK_THROWS_WITH_AS(decompose_bits(bad, 3), doctest::Contains("index 2"), IndexError);
}

TEST_CASE("decompose then natural recomposition is the identity for every code, D <= 10") {
    for (int D = 1; D <= 10; ++D) {
        std::vector<std::uint32_t> codes(std::size_t{1} << D);
        for (std::size_t c = 0; c < codes.size(); ++c) codes[c] = static_cast<std::uint32_t>(c);
        CHECK(compose_bits(decompose_bits(codes, D)) == codes);

        // the packed codebook agrees with the unpacked definition
        const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, D, 0.0, 1.0);
        std::vector<std::uint16_t> c16(codes.begin(), codes.end());
        const BitplaneCodebook cb(spec, {1, 1, c16.size()}, c16);
        const auto planes = decompose_bits(codes, D);
        for (int j = 1; j <= D; ++j) CHECK(cb.plane(j) == planes[static_cast<std::size_t>(j - 1)]);
    }
}

TEST_CASE("natural coefficients reproduce dequantization; zero coefficients give clip_lo") {
    SplitRng rng(5);
    std::vector<float> v(257);
    for (auto& x : v) x = static_cast<float>(rng.uniform() * 3.0 - 0.5);
    const auto x = make_tensor(v);
    const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, 6, -0.25, 2.0);
    const auto cb = init_quantize(x, spec);

    const auto nat = natural_coefficients(spec);
    const auto a = reconstruct(cb, nat);
    const auto b = dequantize_natural(cb);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-6));

    const std::vector<double> zeros(6, 0.0);
    for (float r : reconstruct(cb, zeros).values) CHECK(r == static_cast<float>(-0.25));

    const std::vector<double> short_alpha(5, 1.0);
    CHECK_THROWS_AS(reconstruct(cb, short_alpha), DatasetError);
}

TEST_CASE("clip_scale error bound and monotonicity (property)") {
    SplitRng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const int D = 1 + static_cast<int>(rng.uniform() * 12);
        const double lo = rng.uniform() - 0.5;
        const double hi = lo + 0.1 + 4 * rng.uniform();
        const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, D, lo, hi);
        std::vector<float> v(200);
        for (auto& x : v) x = static_cast<float>(lo - 1 + (hi - lo + 2) * rng.uniform());
        std::sort(v.begin(), v.end());
        const auto cb = init_quantize(make_tensor(v), spec);
        const auto deq = reconstruct_values(cb, natural_coefficients(spec));
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double clamped = std::clamp<double>(v[i], lo, hi);
            CHECK(std::fabs(deq[i] - clamped) <= spec.scale / 2 * (1 + 1e-9));
            if (i > 0) CHECK(cb.codes()[i] >= cb.codes()[i - 1]);
        }
    }
}

TEST_CASE("least-squares coefficients never do worse than natural dequantization") {
    SplitRng rng(21);
    std::vector<float> v(100);
    for (auto& x : v) x = static_cast<float>(std::max(0.0, rng.normal() + 0.3));
    const auto x = make_tensor(v);
    const auto spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, 5, 0.0, 2.0);
    const std::vector<BitplaneCodebook> books{init_quantize(x, spec)};
    const std::vector<ActivationTensor> xs{x};
    const auto sys = build_design(books, xs);

    // independent route: dense design matrix and Eigen least squares
    Eigen::MatrixXd B(100, 5);
    Eigen::VectorXd y(100);
    for (int i = 0; i < 100; ++i) {
        y(i) = v[static_cast<std::size_t>(i)];
        for (int j = 0; j < 5; ++j) B(i, j) = books[0].bit(j + 1, static_cast<std::size_t>(i));
    }
    const Eigen::VectorXd ls = B.colPivHouseholderQr().solve(y);
    const double ls_mse = (y - B * ls).squaredNorm() / 100.0;

    const auto cv = solve_lasso(sys, 0.0);
    const auto recon = reconstruct_values(books[0], cv.alpha);
    const double bib_mse = mse(v, recon);
    const double nat_mse = mse(v, reconstruct_values(books[0], natural_coefficients(spec)));
    CHECK(bib_mse <= nat_mse);
    CHECK(bib_mse == doctest::Approx(ls_mse).epsilon(1e-10));
}

TEST_CASE("clip rules") {
    std::vector<float> v(1001);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) * (i % 2 ? -1.0f : 1.0f);
    const std::vector<ActivationTensor> cal{make_tensor(v)};
    CHECK(compute_clip_hi(cal, ClipRule::parse("max")) == 1000.0);
    CHECK(compute_clip_hi(cal, ClipRule::parse("percentile:99.9")) == doctest::Approx(999.0));
    CHECK(compute_clip_hi(cal, ClipRule::parse("percentile:50")) == doctest::Approx(500.0));
    CHECK(compute_clip_hi(cal, ClipRule::parse("percentile:99.95")) == doctest::Approx(999.5));

    const std::vector<ActivationTensor> zeros{make_tensor(std::vector<float>(10, 0.0f))};
    CHECK(compute_clip_hi(zeros, ClipRule{}) == 1.0);

    CHECK(ClipRule::parse(ClipRule::parse("percentile:97.5").to_string()).percentile == 97.5);
    CHECK_THROWS_AS(ClipRule::parse("percentile:0"), ConfigError);
    CHECK_THROWS_AS(ClipRule::parse("median"), ConfigError);
}
