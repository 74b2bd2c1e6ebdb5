#pragma once

// Reference solvers used to check the consensus engine. They share no update
// logic with market.hpp.

#include "p2pm/grid.hpp"
#include "p2pm/policy.hpp"

#include <Eigen/Dense>

#include <span>

namespace p2pm {

struct OracleResult {
    double clearing_price = 0.0;  ///< €/MW; NaN when no common price exists
    Eigen::VectorXd net_powers;
    Eigen::MatrixXd trades;  ///< agent by agent, skew-symmetric; empty for bisection
    double social_welfare = 0.0;
    double objective = 0.0;     ///< social welfare plus grid charges
    double stationarity = 0.0;  ///< €/MW, first-order measure at the returned point
    int iterations = 0;
    bool converged = false;
};

/// Uniform-wedge dispatch: producers see λ - u/2 and consumers λ + u/2.
/// Requires full producer/consumer partnerships. Throws InfeasibleError when
/// no price balances the bounds.
OracleResult bisection_clearing(const Community& community, double wedge);

struct QpOptions {
    double stationarity_tol = 1e-4;  ///< €/MW
    double projection_tol = 1e-8;    ///< MW
    int max_iterations = 200000;
    int max_projection_sweeps = 100000;
};

/// Projected gradient on nonnegative producer to consumer trades with
/// per-agent bound constraints, for any gamma.
OracleResult qp_reference(const Community& community, const GammaMatrix& gamma, const QpOptions& options = {});

/// Σ f_n(P_n); lower is better.
double social_welfare(const Community& community, std::span<const double> net_powers);

/// Euclidean projection of `v` onto {x >= 0, low <= Σx <= high}.
void project_capped_simplex(std::span<double> v, double low, double high);

}  // namespace p2pm
