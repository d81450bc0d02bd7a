#include "bib/sparse_solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "bib/error.hpp"

namespace bib {

namespace {

// Neumaier-compensated running sum.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) {
        const double t = sum + v;
        if (std::fabs(sum) >= std::fabs(v)) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + carry; }
};

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Cholesky of the symmetric k x k matrix `a` in long double. Pivots below
// `rel_tol * a_ii` mark a column as dependent; its row/column of L is zeroed.
struct Cholesky {
    std::size_t n = 0;
    std::vector<long double> l;
    std::vector<bool> dependent;

    explicit Cholesky(const std::vector<long double>& a, std::size_t k, long double rel_tol = 1e-10L)
        : n(k), l(k * k, 0.0L), dependent(k, false) {
        for (std::size_t i = 0; i < n; ++i) {
            long double d = a[i * n + i];
            for (std::size_t p = 0; p < i; ++p) d -= l[i * n + p] * l[i * n + p];
            if (!(d > rel_tol * std::max(1.0L, a[i * n + i]))) {
                dependent[i] = true;
                continue;
            }
            const long double root = std::sqrt(d);
            l[i * n + i] = root;
            for (std::size_t r = i + 1; r < n; ++r) {
                long double v = a[r * n + i];
                for (std::size_t p = 0; p < i; ++p) v -= l[r * n + p] * l[i * n + p];
                l[r * n + i] = v / root;
            }
        }
    }

    bool full_rank() const { return std::none_of(dependent.begin(), dependent.end(), [](bool b) { return b; }); }

    std::vector<long double> solve(const std::vector<long double>& rhs) const {
        std::vector<long double> z(n, 0.0L);
        for (std::size_t i = 0; i < n; ++i) {
            if (dependent[i]) continue;
            long double v = rhs[i];
            for (std::size_t p = 0; p < i; ++p) v -= l[i * n + p] * z[p];
            z[i] = v / l[i * n + i];
        }
        std::vector<long double> x(n, 0.0L);
        for (std::size_t ii = n; ii-- > 0;) {
            if (dependent[ii]) continue;
            long double v = z[ii];
            for (std::size_t p = ii + 1; p < n; ++p) v -= l[p * n + ii] * x[p];
            x[ii] = v / l[ii * n + ii];
        }
        return x;
    }
};

// Solves G_SS a = rhs with one step of iterative refinement.
std::vector<long double> solve_subsystem(const DesignSystem& sys, std::span<const int> cols,
                                         const std::vector<long double>& rhs, bool* full_rank) {
    const auto k = cols.size();
    std::vector<long double> a(k * k);
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < k; ++c) a[r * k + c] = sys.gram(cols[r], cols[c]);
    }
    const Cholesky chol(a, k);
    if (full_rank) *full_rank = chol.full_rank();
    auto x = chol.solve(rhs);
    std::vector<long double> resid(k);
    for (std::size_t r = 0; r < k; ++r) {
        if (chol.dependent[r]) continue;
        long double v = rhs[r];
        for (std::size_t c = 0; c < k; ++c) v -= a[r * k + c] * x[c];
        resid[r] = v;
    }
    const auto dx = chol.solve(resid);
    for (std::size_t r = 0; r < k; ++r) x[r] += dx[r];
    return x;
}

CoefficientVector finish(const DesignSystem& sys, std::vector<double> alpha, double lambda, int sweeps) {
    CoefficientVector cv;
    cv.support = support_of(alpha);
    for (auto& a : alpha) {
        if (std::fabs(a) <= kZeroThreshold) a = 0.0;
    }
    cv.alpha = std::move(alpha);
    cv.lambda = lambda;
    cv.residual_sse = residual_sse(sys, cv.alpha);
    cv.sweeps = sweeps;
    return cv;
}

}  // namespace

double CoefficientVector::l1_norm() const {
    double s = 0.0;
    for (double a : alpha) s += std::fabs(a);
    return s;
}

DesignSystem build_design(std::span<const BitplaneCodebook> codebooks, std::span<const ActivationTensor> originals) {
    if (codebooks.empty()) throw DatasetError("build_design: no samples");
    if (codebooks.size() != originals.size()) {
        throw DatasetError("build_design: " + std::to_string(codebooks.size()) + " codebooks but " +
                           std::to_string(originals.size()) + " original tensors");
    }
    DesignSystem sys;
    sys.spec = codebooks.front().spec();
    const auto D = static_cast<std::size_t>(sys.spec.bits);
    sys.gram_counts.assign(D * D, 0);
    std::vector<CompensatedSum> bty(D);
    CompensatedSum yty;

    for (std::size_t s = 0; s < codebooks.size(); ++s) {
        const auto& cb = codebooks[s];
        const auto& x = originals[s];
        if (!(cb.spec() == sys.spec)) {
            throw DatasetError("build_design: codebook " + std::to_string(s + 1) + " uses a different quantizer spec",
                               cb.layer_id());
        }
        if (cb.size() != x.values.size()) {
            throw DatasetError("build_design: sample " + std::to_string(s + 1) + " size mismatch", cb.layer_id());
        }
        sys.rows += cb.size();

        for (std::size_t j = 0; j < D; ++j) {
            const auto wj = cb.plane_words(static_cast<int>(j + 1));
            for (std::size_t k = j; k < D; ++k) {
                const auto wk = cb.plane_words(static_cast<int>(k + 1));
                std::uint64_t n = 0;
                for (std::size_t w = 0; w < wj.size(); ++w) n += static_cast<std::uint64_t>(std::popcount(wj[w] & wk[w]));
                sys.gram_counts[j * D + k] += n;
            }
        }

        const auto codes = cb.codes();
        const double lo = sys.spec.clip_lo;
        for (std::size_t i = 0; i < codes.size(); ++i) {
            const double y = static_cast<double>(x.values[i]) - lo;
            yty.add(y * y);
            for (std::uint32_t c = codes[i]; c != 0; c &= c - 1) {
                bty[static_cast<std::size_t>(std::countr_zero(c))].add(y);
            }
        }
    }
    if (sys.rows == 0) throw DatasetError("build_design: empty tensors");
    for (std::size_t j = 0; j < D; ++j) {
        for (std::size_t k = 0; k < j; ++k) sys.gram_counts[j * D + k] = sys.gram_counts[k * D + j];
    }
    sys.bty.resize(D);
    for (std::size_t j = 0; j < D; ++j) sys.bty[j] = bty[j].value();
    sys.yty = yty.value();
    return sys;
}

std::vector<int> support_of(std::span<const double> alpha) {
    std::vector<int> s;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        if (std::fabs(alpha[j]) > kZeroThreshold) s.push_back(static_cast<int>(j + 1));
    }
    return s;
}

double residual_sse(const DesignSystem& sys, std::span<const double> alpha) {
    const int D = sys.bits();
    if (alpha.size() != static_cast<std::size_t>(D)) throw DatasetError("coefficient length mismatch");
    long double quad = 0.0L;
    long double lin = 0.0L;
    for (int j = 0; j < D; ++j) {
        if (alpha[static_cast<std::size_t>(j)] == 0.0) continue;
        long double row = 0.0L;
        for (int k = 0; k < D; ++k) row += sys.gram(j, k) * static_cast<long double>(alpha[static_cast<std::size_t>(k)]);
        quad += row * alpha[static_cast<std::size_t>(j)];
        lin += static_cast<long double>(alpha[static_cast<std::size_t>(j)]) * sys.bty[static_cast<std::size_t>(j)];
    }
    const long double sse = static_cast<long double>(sys.yty) - 2.0L * lin + quad;
    return static_cast<double>(std::max(sse, 0.0L));
}

double lambda_max(const DesignSystem& sys, bool nonnegative) {
    double m = 0.0;
    for (double b : sys.bty) m = std::max(m, nonnegative ? b : std::fabs(b));
    return 2.0 * m;
}

CoefficientVector solve_lasso(const DesignSystem& sys, double lambda, const SolverOptions& opts,
                              std::span<const double> warm_start) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("lambda must be finite and >= 0");
    }
    const int D = sys.bits();
    const auto uD = static_cast<std::size_t>(D);
    std::vector<double> alpha(uD, 0.0);
    if (!warm_start.empty()) {
        if (warm_start.size() != uD) throw DatasetError("warm start length mismatch");
        alpha.assign(warm_start.begin(), warm_start.end());
        for (std::size_t j = 0; j < uD; ++j) {
            if (opts.nonnegative) alpha[j] = std::max(alpha[j], 0.0);
            if (sys.gram(static_cast<int>(j), static_cast<int>(j)) == 0.0) alpha[j] = 0.0;
        }
    }
    if (lambda >= lambda_max(sys, opts.nonnegative)) {
        return finish(sys, std::vector<double>(uD, 0.0), lambda, 0);
    }

    const double half = 0.5 * lambda;
    std::vector<double> g_alpha(uD);
    int sweep = 0;
    double last_change = INFINITY;
    bool converged = false;
    while (sweep < opts.max_iter) {
        ++sweep;
        for (int j = 0; j < D; ++j) {
            double v = 0.0;
            for (int k = 0; k < D; ++k) v += sys.gram(j, k) * alpha[static_cast<std::size_t>(k)];
            g_alpha[static_cast<std::size_t>(j)] = v;
        }
        double max_change = 0.0;
        for (int j = 0; j < D; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            const double gjj = sys.gram(j, j);
            if (gjj == 0.0) continue;  // unused bit: alpha_j stays 0
            const double r = sys.bty[uj] - (g_alpha[uj] - gjj * alpha[uj]);
            double next = 0.0;
            if (opts.nonnegative) {
                next = std::max(r - half, 0.0) / gjj;
            } else if (r > half) {
                next = (r - half) / gjj;
            } else if (r < -half) {
                next = (r + half) / gjj;
            }
            const double delta = next - alpha[uj];
            if (delta != 0.0) {
                for (int k = 0; k < D; ++k) g_alpha[static_cast<std::size_t>(k)] += delta * sys.gram(k, j);
                alpha[uj] = next;
                max_change = std::max(max_change, std::fabs(delta));
            }
        }
        double inf_norm = 0.0;
        for (double a : alpha) inf_norm = std::max(inf_norm, std::fabs(a));
        last_change = max_change;
        if (max_change < opts.tol * (1.0 + inf_norm)) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw ConvergenceError("coordinate descent did not converge in " + std::to_string(opts.max_iter) +
                                   " sweeps at lambda " + std::to_string(lambda) + " (last change " +
                                   std::to_string(last_change) + ")",
                               alpha, last_change, lambda);
    }

    auto cd = finish(sys, alpha, lambda, sweep);

    // Exact re-solve on the CD support with the signs held fixed.
    if (!cd.support.empty()) {
        std::vector<int> cols;
        std::vector<long double> rhs;
        for (int j1 : cd.support) {
            const auto j = static_cast<std::size_t>(j1 - 1);
            cols.push_back(j1 - 1);
            rhs.push_back(static_cast<long double>(sys.bty[j]) - half * sign(cd.alpha[j]));
        }
        bool full_rank = false;
        const auto sol = solve_subsystem(sys, cols, rhs, &full_rank);
        bool signs_kept = full_rank;
        std::vector<double> polished(uD, 0.0);
        for (std::size_t i = 0; i < cols.size() && signs_kept; ++i) {
            const double v = static_cast<double>(sol[i]);
            const auto j = static_cast<std::size_t>(cols[i]);
            signs_kept = sign(v) == sign(cd.alpha[j]) && std::fabs(v) > kZeroThreshold;
            polished[j] = v;
        }
        if (signs_kept) {
            auto refined = finish(sys, polished, lambda, sweep);
            if (kkt_violation(sys, refined, opts.nonnegative) <= kkt_violation(sys, cd, opts.nonnegative)) {
                return refined;
            }
        }
    }
    return cd;
}

std::vector<CoefficientVector> lasso_path(const DesignSystem& sys, std::span<const double> lambdas,
                                          const SolverOptions& opts) {
    std::vector<double> sorted(lambdas.begin(), lambdas.end());
    for (double l : sorted) {
        if (!std::isfinite(l) || l < 0.0) throw ConfigError("lambda grid values must be finite and >= 0");
    }
    std::stable_sort(sorted.begin(), sorted.end());
    std::vector<CoefficientVector> path;
    path.reserve(sorted.size());
    std::vector<double> warm;
    for (double l : sorted) {
        try {
            path.push_back(solve_lasso(sys, l, opts, warm));
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(std::string("lasso_path at lambda ") + std::to_string(l) + ": " + e.what(),
                                   e.last_alpha(), e.last_change(), l);
        }
        warm = path.back().alpha;
    }
    return path;
}

std::vector<double> geometric_grid(double lambda_max, double min_factor, double max_factor, int points) {
    if (points < 1) throw ConfigError("lambda grid needs at least one point");
    if (!(min_factor > 0.0) || !(max_factor >= min_factor)) {
        throw ConfigError("lambda grid factors must satisfy 0 < min <= max");
    }
    if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) throw ConfigError("lambda_max must be finite");
    std::vector<double> grid(static_cast<std::size_t>(points));
    const double lo = std::log(min_factor);
    const double hi = std::log(max_factor);
    for (int i = 0; i < points; ++i) {
        const double f = points == 1 ? max_factor
                                     : std::exp(lo + (hi - lo) * static_cast<double>(i) / (points - 1));
        grid[static_cast<std::size_t>(i)] = lambda_max * f;
    }
    // exp(log(x)) need not return x exactly; pin the endpoints
    grid.front() = lambda_max * (points == 1 ? max_factor : min_factor);
    grid.back() = lambda_max * max_factor;
    return grid;
}

double kkt_violation(const DesignSystem& sys, const CoefficientVector& cv, bool nonnegative) {
    const int D = sys.bits();
    double worst = 0.0;
    for (int j = 0; j < D; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        long double gj = 0.0L;
        for (int k = 0; k < D; ++k) gj += sys.gram(j, k) * static_cast<long double>(cv.alpha[static_cast<std::size_t>(k)]);
        const double g = static_cast<double>(2.0L * (gj - sys.bty[uj]));
        double v = 0.0;
        if (cv.alpha[uj] != 0.0) {
            v = std::fabs(g + cv.lambda * sign(cv.alpha[uj]));
        } else if (sys.gram(j, j) == 0.0) {
            v = 0.0;
        } else if (nonnegative) {
            v = std::max(0.0, -(g + cv.lambda));
        } else {
            v = std::max(0.0, std::fabs(g) - cv.lambda);
        }
        worst = std::max(worst, v);
    }
    return worst;
}

std::vector<double> restricted_least_squares(const DesignSystem& sys, std::span<const int> support) {
    const auto D = static_cast<std::size_t>(sys.bits());
    std::vector<double> alpha(D, 0.0);
    if (support.empty()) return alpha;
    std::vector<long double> rhs;
    for (int j : support) {
        if (j < 0 || static_cast<std::size_t>(j) >= D) throw IndexError("support index out of range");
        rhs.push_back(sys.bty[static_cast<std::size_t>(j)]);
    }
    const auto sol = solve_subsystem(sys, support, rhs, nullptr);
    for (std::size_t i = 0; i < support.size(); ++i) alpha[static_cast<std::size_t>(support[i])] = static_cast<double>(sol[i]);
    return alpha;
}

CoefficientVector oracle_l0(const DesignSystem& sys, int eta) {
    const int D = sys.bits();
    if (D > kMaxOracleBits) {
        throw ConfigError("oracle_l0 enumerates 2^D supports; D = " + std::to_string(D) + " exceeds " +
                          std::to_string(kMaxOracleBits));
    }
    if (eta < 0 || eta > D) throw ConfigError("eta must be in [0, D]");

    // Differences below this are round-off, so the earlier candidate is kept.
    const double tie_eps = 1e-12 * std::max(1.0, sys.yty);
    std::vector<double> best(static_cast<std::size_t>(D), 0.0);
    double best_sse = residual_sse(sys, best);

    std::vector<int> combo;
    for (int k = 1; k <= eta; ++k) {
        combo.resize(static_cast<std::size_t>(k));
        std::iota(combo.begin(), combo.end(), 0);
        while (true) {
            auto alpha = restricted_least_squares(sys, combo);
            const double sse = residual_sse(sys, alpha);
            if (sse < best_sse - tie_eps) {
                best_sse = sse;
                best = std::move(alpha);
            }
            // next k-combination of {0..D-1} in lexicographic order
            int i = k - 1;
            while (i >= 0 && combo[static_cast<std::size_t>(i)] == D - k + i) --i;
            if (i < 0) break;
            ++combo[static_cast<std::size_t>(i)];
            for (int r = i + 1; r < k; ++r) combo[static_cast<std::size_t>(r)] = combo[static_cast<std::size_t>(r - 1)] + 1;
        }
    }
    return finish(sys, std::move(best), 0.0, 0);
}

}  // namespace bib
