#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "bib/error.hpp"
#include "bib/sparse_solver.hpp"
#include "bib/synthetic.hpp"
#include "doctest.h"

using namespace bib;

namespace {

// One codebook per sample with explicit codes; targets are y + clip_lo.
struct Fixture {
    InitQuantizerSpec spec;
    std::vector<BitplaneCodebook> books;
    std::vector<ActivationTensor> xs;

    Fixture(int bits, double lo = 0.0) : spec(InitQuantizerSpec::make(QuantizerKind::clip_scale, bits, lo, lo + 1.0)) {}

    void add(std::vector<std::uint16_t> codes, const std::vector<double>& y) {
        ActivationTensor t;
        t.shape = {1, 1, codes.size()};
        for (double v : y) t.values.push_back(static_cast<float>(v + spec.clip_lo));
        xs.push_back(t);
        books.emplace_back(spec, t.shape, std::move(codes));
    }
    DesignSystem system() const { return build_design(books, xs); }

    Eigen::MatrixXd dense_b() const {
        std::size_t rows = 0;
        for (const auto& b : books) rows += b.codes().size();
        Eigen::MatrixXd B(static_cast<Eigen::Index>(rows), spec.bits);
        Eigen::Index r = 0;
        for (const auto& b : books) {
            for (std::size_t i = 0; i < b.codes().size(); ++i, ++r) {
                for (int j = 0; j < spec.bits; ++j) B(r, j) = (b.codes()[i] >> j) & 1u;
            }
        }
        return B;
    }
    Eigen::VectorXd dense_y() const {
        std::vector<double> y;
        for (const auto& t : xs) {
            for (float v : t.values) y.push_back(static_cast<double>(v) - spec.clip_lo);
        }
        return Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    }
};

Fixture random_fixture(SplitRng& rng, int bits, int rows, int samples = 1) {
    Fixture f(bits, rng.uniform() - 0.5);
    // correlated planes: codes drawn from a skewed distribution
    for (int s = 0; s < samples; ++s) {
        std::vector<std::uint16_t> codes;
        std::vector<double> y;
        for (int i = 0; i < rows; ++i) {
            const double u = std::pow(rng.uniform(), 1.5);
            const auto c = static_cast<std::uint16_t>(std::min<double>(u * (1 << bits), (1 << bits) - 1));
            codes.push_back(c);
            y.push_back(0.01 * c + 0.3 * rng.normal());
        }
        f.add(std::move(codes), y);
    }
    return f;
}

double dense_sse(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, std::span<const double> alpha) {
    const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    return (y - B * a).squaredNorm();
}

// Slow reference: FISTA on the dense problem ||y - B a||^2 + lambda ||a||_1.
std::vector<double> proximal_gradient(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, double lambda) {
    const Eigen::MatrixXd H = 2.0 * B.transpose() * B;
    const double L = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(B.cols()), z = a;
    double t = 1.0;
    for (int it = 0; it < 200000; ++it) {
        const Eigen::VectorXd g = 2.0 * B.transpose() * (B * z - y);
        Eigen::VectorXd next = z - g / L;
        for (Eigen::Index j = 0; j < next.size(); ++j) {
            const double v = next(j), k = lambda / L;
            next(j) = v > k ? v - k : (v < -k ? v + k : 0.0);
        }
        const double tn = (1 + std::sqrt(1 + 4 * t * t)) / 2;
        z = next + ((t - 1) / tn) * (next - a);
        a = next;
        t = tn;
    }
    return {a.data(), a.data() + a.size()};
}

}  // namespace

TEST_CASE("gram of two hand-countable planes") {
    Fixture f(2);
    // plane 1 = [1,0,1,1], plane 2 = [0,0,1,0]
    f.add({1, 0, 3, 1}, {0.3, -1.0, 2.0, 0.5});
    const auto sys = f.system();
    CHECK(sys.rows == 4);
    CHECK(sys.gram_counts == std::vector<std::uint64_t>{3, 1, 1, 1});
    CHECK(sys.bty[0] == doctest::Approx(0.3 + 2.0 + 0.5));
    CHECK(sys.bty[1] == doctest::Approx(2.0));
}

TEST_CASE("identical planes give a rank-deficient gram") {
    Fixture f(2);
    f.add({3, 0, 3, 3, 0}, {1, 2, 3, 4, 5});
    const auto sys = f.system();
    CHECK(sys.gram(0, 1) == sys.gram(0, 0));
    CHECK(sys.gram(0, 0) == 3);
    // the solver still finds a minimizer; oracle drops the dependent column
    const auto cv = solve_lasso(sys, 0.0);
    CHECK(cv.alpha[0] + cv.alpha[1] == doctest::Approx((1 + 3 + 4) / 3.0));
    const std::vector<int> both{0, 1};
    const auto ls = restricted_least_squares(sys, both);
    CHECK(ls[1] == 0.0);
    CHECK(ls[0] == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("popcount gram equals floating-point B^T B; bty and yty match a dense computation") {
    SplitRng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const int D = 1 + trial % 9;
        auto f = random_fixture(rng, D, 37 + 29 * trial, 1 + trial % 3);
        const auto sys = f.system();
        const auto B = f.dense_b();
        const auto y = f.dense_y();
        const Eigen::MatrixXd G = B.transpose() * B;
        const Eigen::VectorXd bty = B.transpose() * y;
        CHECK(sys.rows == static_cast<std::uint64_t>(B.rows()));
        for (int j = 0; j < D; ++j) {
            std::uint64_t ones = 0;
            for (const auto& b : f.books) ones += b.count_ones(j + 1);
            CHECK(sys.gram_counts[static_cast<std::size_t>(j * D + j)] == ones);
            CHECK(sys.bty[static_cast<std::size_t>(j)] == doctest::Approx(bty(j)).epsilon(1e-12));
            for (int k = 0; k < D; ++k) CHECK(sys.gram(j, k) == G(j, k));
        }
        CHECK(sys.yty == doctest::Approx(y.squaredNorm()).epsilon(1e-12));
    }
}

TEST_CASE("build_design input errors") {
    Fixture f(3);
    CHECK_THROWS_AS(build_design(f.books, f.xs), DatasetError);
    f.add({1, 2}, {0.0, 1.0});
    Fixture g(4);
    g.add({1, 2}, {0.0, 1.0});
    std::vector<BitplaneCodebook> mixed{f.books[0], g.books[0]};
    std::vector<ActivationTensor> xs{f.xs[0], g.xs[0]};
    CHECK_THROWS_AS(build_design(mixed, xs), DatasetError);
    std::vector<ActivationTensor> one{f.xs[0]};
    CHECK_THROWS_AS(build_design(mixed, one), DatasetError);
}

TEST_CASE("lambda = 0 on disjoint planes gives per-bit conditional means") {
    Fixture f(3);
    f.add({0, 1, 2, 4, 1, 4, 2, 1}, {0.1, 1.0, 2.5, 4.25, 1.5, 3.75, 2.0, 0.75});
    const auto sys = f.system();
    const auto cv = solve_lasso(sys, 0.0);
    for (int j = 0; j < 3; ++j) {
        CHECK(cv.alpha[static_cast<std::size_t>(j)] == sys.bty[static_cast<std::size_t>(j)] / sys.gram(j, j));
    }
    CHECK(cv.support == std::vector<int>{1, 2, 3});
}

TEST_CASE("an all-zero plane keeps a zero coefficient") {
    Fixture f(3);
    f.add({0, 2, 4, 6, 2}, {0.0, 1.0, 2.0, 3.0, 1.5});
    const auto sys = f.system();
    CHECK(sys.gram(0, 0) == 0);
    const auto cv = solve_lasso(sys, 0.0);
    CHECK(cv.alpha[0] == 0.0);
    CHECK(cv.support == std::vector<int>{2, 3});
}

TEST_CASE("lambda at or above lambda_max gives exactly zero") {
    SplitRng rng(2);
    auto f = random_fixture(rng, 6, 300);
    const auto sys = f.system();
    const double lmax = lambda_max(sys);
    double top = 0.0;
    for (double b : sys.bty) top = std::max(top, std::fabs(b));
    CHECK(lmax == 2 * top);
    for (double l : {lmax, lmax * 1.5, lmax * 1e6}) {
        const auto cv = solve_lasso(sys, l);
        for (double a : cv.alpha) CHECK(a == 0.0);
        CHECK(cv.rate() == 0);
        CHECK(cv.residual_sse == doctest::Approx(sys.yty));
    }
    CHECK(solve_lasso(sys, lmax * 0.99).rate() > 0);
    CHECK_THROWS_AS(solve_lasso(sys, -1.0), ConfigError);
}

TEST_CASE("D = 4, M = 64, lambda = lambda_max / 2 matches a slow proximal-gradient solver") {
    SplitRng rng(4);
    Fixture f(4);
    std::vector<std::uint16_t> codes;
    std::vector<double> y;
    for (int i = 0; i < 64; ++i) {
        codes.push_back(static_cast<std::uint16_t>(rng.uniform() * 16));
        y.push_back(rng.normal() + 0.1 * codes.back());
    }
    f.add(codes, y);
    const auto sys = f.system();
    const double lambda = 0.5 * lambda_max(sys);
    const auto B = f.dense_b();
    const auto yv = f.dense_y();

    const auto ref = proximal_gradient(B, yv, lambda);
    const auto cv = solve_lasso(sys, lambda);
    auto objective = [&](std::span<const double> a) {
        double l1 = 0.0;
        for (double v : a) l1 += std::fabs(v);
        return dense_sse(B, yv, a) + lambda * l1;
    };
    CHECK(objective(cv.alpha) == doctest::Approx(objective(ref)).epsilon(1e-6));
    CHECK(objective(cv.alpha) <= objective(ref) * (1 + 1e-12));
}

TEST_CASE("residual_sse agrees with the dense residual") {
    SplitRng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        auto f = random_fixture(rng, 8, 500);
        const auto sys = f.system();
        std::vector<double> alpha(8);
        for (auto& a : alpha) a = rng.normal() * 0.05;
        CHECK(residual_sse(sys, alpha) == doctest::Approx(dense_sse(f.dense_b(), f.dense_y(), alpha)).epsilon(1e-6));
        const auto cv = solve_lasso(sys, 0.01 * lambda_max(sys));
        CHECK(cv.residual_sse >= 0.0);
        CHECK(cv.residual_sse == doctest::Approx(dense_sse(f.dense_b(), f.dense_y(), cv.alpha)).epsilon(1e-6));
    }
}

TEST_CASE("lasso_path endpoints, ordering, and monotonicity") {
    SplitRng rng(7);
    auto f = random_fixture(rng, 8, 800, 2);
    const auto sys = f.system();
    const double lmax = lambda_max(sys);

    SUBCASE("[0, lambda_max] in descending order") {
        const std::vector<double> lambdas{lmax, 0.0};
        const auto path = lasso_path(sys, lambdas);
        REQUIRE(path.size() == 2);
        CHECK(path[0].lambda == 0.0);
        CHECK(path[1].lambda == lmax);
        const auto B = f.dense_b();
        const Eigen::VectorXd ls = B.colPivHouseholderQr().solve(f.dense_y());
        for (int j = 0; j < 8; ++j) CHECK(path[0].alpha[static_cast<std::size_t>(j)] == doctest::Approx(ls(j)).epsilon(1e-8));
        for (double a : path[1].alpha) CHECK(a == 0.0);
    }
    SUBCASE("geometric grid of 20 points") {
        const auto grid = geometric_grid(lmax, 1e-4, 1.0, 20);
        REQUIRE(grid.size() == 20);
        CHECK(grid.front() == doctest::Approx(1e-4 * lmax));
        CHECK(grid.back() == lmax);
        const auto path = lasso_path(sys, grid);
        for (std::size_t k = 1; k < path.size(); ++k) {
            CHECK(path[k].lambda > path[k - 1].lambda);
            CHECK(path[k].residual_sse >= path[k - 1].residual_sse - 1e-9);
            CHECK(path[k].l1_norm() <= path[k - 1].l1_norm() + 1e-9);
        }
        CHECK(path.back().rate() == 0);
    }
    SUBCASE("invalid lambdas") {
        const std::vector<double> bad{0.1, std::numeric_limits<double>::infinity()};
        CHECK_THROWS_AS(lasso_path(sys, bad), ConfigError);
    }
}

TEST_CASE("subgradient optimality holds along random paths, signed and nonnegative") {
    SplitRng rng(8);
    for (int trial = 0; trial < 25; ++trial) {
        const int D = 2 + trial % 7;
        auto f = random_fixture(rng, D, 64 + 37 * trial);
        const auto sys = f.system();
        for (bool nonneg : {false, true}) {
            SolverOptions opts;
            opts.nonnegative = nonneg;
            const auto path = lasso_path(sys, geometric_grid(lambda_max(sys, nonneg)), opts);
            for (const auto& cv : path) {
                CHECK(kkt_violation(sys, cv, nonneg) <= 1e-8);
                if (nonneg) {
                    for (double a : cv.alpha) CHECK(a >= 0.0);
                }
                for (std::size_t j = 0; j < cv.alpha.size(); ++j) {
                    const bool in = std::find(cv.support.begin(), cv.support.end(), int(j) + 1) != cv.support.end();
                    CHECK(in == (std::fabs(cv.alpha[j]) > kZeroThreshold));
                }
            }
        }
    }
}

TEST_CASE("non-convergence reports the last iterate and lambda") {
    SplitRng rng(10);
    auto f = random_fixture(rng, 8, 400);
    const auto sys = f.system();
    SolverOptions opts;
    opts.max_iter = 1;
    const double lambda = 1e-3 * lambda_max(sys);
    const std::vector<double> lambdas{lambda};
    try {
        lasso_path(sys, lambdas, opts);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.lambda() == lambda);
        CHECK(e.last_alpha().size() == 8);
        CHECK(e.last_change() > 0.0);
    }
}

TEST_CASE("oracle endpoints") {
    SplitRng rng(11);
    auto f = random_fixture(rng, 6, 256);
    const auto sys = f.system();
    const auto zero = oracle_l0(sys, 0);
    CHECK(zero.rate() == 0);
    CHECK(zero.residual_sse == doctest::Approx(sys.yty));

    const auto full = oracle_l0(sys, 6);
    const auto ls = solve_lasso(sys, 0.0);
    CHECK(full.residual_sse == doctest::Approx(ls.residual_sse).epsilon(1e-10));

    CHECK_THROWS_AS(oracle_l0(sys, 7), ConfigError);
    CHECK_THROWS_AS(oracle_l0(sys, -1), ConfigError);
}

TEST_CASE("oracle matches an independent subset search and dominates lasso and truncation") {
    SplitRng rng(12);
    for (int trial = 0; trial < 8; ++trial) {
        auto f = random_fixture(rng, 6, 256);
        const auto sys = f.system();
        const auto B = f.dense_b();
        const auto y = f.dense_y();

        std::vector<double> best(7, std::numeric_limits<double>::infinity());
        best[0] = y.squaredNorm();
        for (unsigned mask = 1; mask < 64; ++mask) {
            std::vector<int> cols;
            for (int j = 0; j < 6; ++j) {
                if (mask >> j & 1u) cols.push_back(j);
            }
            Eigen::MatrixXd S(B.rows(), static_cast<Eigen::Index>(cols.size()));
            for (std::size_t c = 0; c < cols.size(); ++c) S.col(static_cast<Eigen::Index>(c)) = B.col(cols[c]);
            const Eigen::VectorXd a = S.colPivHouseholderQr().solve(y);
            const double sse = (y - S * a).squaredNorm();
            for (std::size_t k = cols.size(); k < best.size(); ++k) best[k] = std::min(best[k], sse);
        }

        const auto path = lasso_path(sys, geometric_grid(lambda_max(sys)));
        for (int eta = 0; eta <= 6; ++eta) {
            const auto o = oracle_l0(sys, eta);
            CHECK(o.rate() <= eta);
            CHECK(o.residual_sse == doctest::Approx(best[static_cast<std::size_t>(eta)]).epsilon(1e-9));
            for (const auto& cv : path) {
                if (cv.rate() <= eta) CHECK(o.residual_sse <= cv.residual_sse + 1e-9);
            }
            CHECK(o.residual_sse <= residual_sse(sys, truncation_coefficients(f.spec, eta)) + 1e-9);
        }
    }
}

TEST_CASE("oracle ties prefer the smaller, then lexicographically first support") {
    // y equals plane 1 exactly and plane 2 is a copy of plane 1
    Fixture f(3);
    f.add({3, 0, 3, 4, 0, 3}, {1, 0, 1, 0, 0, 1});
    const auto sys = f.system();
    const auto o = oracle_l0(sys, 3);
    CHECK(o.support == std::vector<int>{1});
    CHECK(o.residual_sse == doctest::Approx(0.0).epsilon(1e-12));
}
