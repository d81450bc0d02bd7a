#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bib/bitplane_codec.hpp"
#include "bib/tensor_store.hpp"

namespace bib {

/// Coefficients with magnitude at or below this are exactly zero after a solve.
inline constexpr double kZeroThreshold = 1e-8;

/// Normal-equation summary of the stacked bit-plane regression
///   y = x - clip_lo  ~  B alpha,   B in {0,1}^{M x D}.
/// Only the Gram system is kept; B itself is never materialized.
struct DesignSystem {
    InitQuantizerSpec spec;
    std::uint64_t rows = 0;                 // M
    std::vector<std::uint64_t> gram_counts; // D x D, row-major, popcounts
    std::vector<double> bty;                // B^T y
    double yty = 0.0;                       // y^T y

    int bits() const { return spec.bits; }
    double gram(int j, int k) const {
        return static_cast<double>(gram_counts[static_cast<std::size_t>(j * spec.bits + k)]);
    }
};

DesignSystem build_design(std::span<const BitplaneCodebook> codebooks, std::span<const ActivationTensor> originals);

struct CoefficientVector {
    std::vector<double> alpha;
    std::vector<int> support;  // 1-based bit indices with |alpha_j| > kZeroThreshold
    double lambda = 0.0;
    double residual_sse = 0.0;
    int sweeps = 0;

    int rate() const { return static_cast<int>(support.size()); }
    double l1_norm() const;
};

struct SolverOptions {
    bool nonnegative = false;
    int max_iter = 100000;  // full sweeps over j = 1..D
    double tol = 1e-10;     // on max |delta alpha_j| / (1 + ||alpha||_inf)
};

std::vector<int> support_of(std::span<const double> alpha);

/// ||y - B alpha||^2 = yty - 2 alpha^T bty + alpha^T G alpha.
double residual_sse(const DesignSystem& sys, std::span<const double> alpha);

/// Smallest lambda for which alpha = 0 is optimal: 2 max_j |bty_j|
/// (2 max_j max(bty_j, 0) under the sign constraint).
double lambda_max(const DesignSystem& sys, bool nonnegative = false);

/// Minimizes residual_sse(alpha) + lambda ||alpha||_1 by cyclic coordinate
/// descent on the Gram system, optionally warm started. On convergence the
/// support is re-solved exactly (sign-fixed normal equations) when that keeps
/// the optimality conditions, which removes the last CD round-off.
CoefficientVector solve_lasso(const DesignSystem& sys, double lambda, const SolverOptions& opts = {},
                              std::span<const double> warm_start = {});

/// Solves every lambda in ascending order with warm starts; the result is
/// ordered by ascending lambda whatever the input order.
std::vector<CoefficientVector> lasso_path(const DesignSystem& sys, std::span<const double> lambdas,
                                          const SolverOptions& opts = {});

/// `points` values from min_factor * lambda_max to max_factor * lambda_max,
/// geometrically spaced, ascending.
std::vector<double> geometric_grid(double lambda_max, double min_factor = 1e-4, double max_factor = 1.0,
                                   int points = 32);

/// Largest violation of the subgradient optimality conditions:
///   j off support: |g_j| <= lambda,  j on support: g_j + lambda sign(alpha_j) = 0,
/// with g = 2 (G alpha - bty). Under the sign constraint, off-support needs
/// g_j + lambda >= 0.
double kkt_violation(const DesignSystem& sys, const CoefficientVector& cv, bool nonnegative = false);

inline constexpr int kMaxOracleBits = 16;

/// Best-subset least squares: minimum residual over all supports of size
/// <= eta, exact LS per support. Ties go to the smaller support, then the
/// lexicographically smallest one.
CoefficientVector oracle_l0(const DesignSystem& sys, int eta);

/// Least squares restricted to `support` (0-based column indices). Columns
/// that are linearly dependent on earlier ones get coefficient 0.
std::vector<double> restricted_least_squares(const DesignSystem& sys, std::span<const int> support);

}  // namespace bib
