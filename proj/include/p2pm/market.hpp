#pragma once

#include "p2pm/grid.hpp"
#include "p2pm/policy.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace p2pm {

/// Gains follow alpha0 * k^-alpha_decay and beta0 * k^-beta_decay, k >= 1.
struct SolverConfig {
    double alpha0 = 0.1;
    double beta0 = 0.1;
    double alpha_decay = 0.05;
    double beta_decay = 0.05;
    double rho = 0.05;
    double tau = 100.0;
    double delta = 0.5;
    int max_iterations = 20000;
    double eps_price = 1e-3;   ///< €/MW
    double eps_primal = 1e-2;  ///< MW
    /// Worker threads for the per-agent phases. Results do not depend on it.
    unsigned threads = 1;

    void validate() const;
    double alpha(int k) const;
    double beta(int k) const;
};

/// Iterate of the consensus+innovations scheme. Matrices are agent by agent;
/// entries outside the partnership graph stay 0.
struct MarketState {
    int k = 1;
    Eigen::MatrixXd trades;       // P
    Eigen::MatrixXd coordinator;  // Z
    Eigen::MatrixXd prices;       // y
    Eigen::VectorXd mu_hi;
    Eigen::VectorXd mu_lo;
};

/// P = Z = 0, mu = 0, every partner price at the mean of all b_n.
MarketState initial_state(const Community& community);

struct ResidualRecord {
    double price = 0.0;         ///< max |y_nm - y_mn|
    double primal = 0.0;        ///< max |P_nm - Z_nm|
    double stationarity = 0.0;  ///< KKT residual of the iterate
    double bound = 0.0;         ///< max MW by which a net power leaves [p_min, p_max]
};

struct ClearingResult {
    Eigen::MatrixXd trades;
    Eigen::MatrixXd prices;
    Eigen::VectorXd net_powers;
    Eigen::VectorXd mu_hi;
    Eigen::VectorXd mu_lo;
    int iterations = 0;
    bool converged = false;
    std::vector<ResidualRecord> history;
    double kkt_residual = 0.0;
};

// Single-pair kernels of one iteration.

double price_update(double y_nm, double y_mn, double p_nm, double z_nm, double alpha, double beta);
double price_update(const MarketState& state, const SolverConfig& config, std::size_t n, std::size_t m);

struct BoundMultipliers {
    double hi = 0.0;
    double lo = 0.0;
};

BoundMultipliers bounds_update(double mu_hi, double mu_lo, double z_n, double p_min, double p_max, double rho);
BoundMultipliers bounds_update(const MarketState& state, const SolverConfig& config, const Agent& agent,
                               std::size_t n);

/// Fills `out[i]` with the weight of partners[i]. Weights sum to 1.
void gradient_weights(const Eigen::MatrixXd& coordinator, std::size_t n, std::span<const int> partners, double tau,
                      double delta, int k, std::span<double> out);
double gradient_step(const MarketState& state, const SolverConfig& config, const Community& community, std::size_t n,
                     std::size_t m);

/// Power at which the agent's marginal cost equals the pair price net of
/// gamma and bound multipliers.
double trade_target(const Agent& agent, double y_nm, double gamma_nm, double mu_hi, double mu_lo);
/// Sign-projected move of Z_nm toward the target.
double trade_update(Role role, double z_nm, double z_n, double weight, double target);

/// Z = (P - P^T) / 2, exactly skew-symmetric.
Eigen::MatrixXd coordinator_update(const Eigen::MatrixXd& trades);

/// Runs until prices agree within eps_price, P and Z agree within eps_primal,
/// the KKT residual is within eps_price, every net power is within eps_primal
/// of its bounds and |Σ P_n| <= N eps_primal, or until max_iterations.
/// Non-convergence is reported, not thrown.
ClearingResult clear_market(const Community& community, const GammaMatrix& gamma, const SolverConfig& config = {});

/// Max stationarity violation over partner pairs (€/MW). Trades above
/// `active_threshold` MW count as active; zero trades only need the sign the
/// projection implies.
double kkt_residual(const Community& community, const GammaMatrix& gamma, const Eigen::MatrixXd& trades,
                    const Eigen::MatrixXd& prices, const Eigen::VectorXd& mu_hi, const Eigen::VectorXd& mu_lo,
                    double active_threshold = 1e-2);
double kkt_residual(const ClearingResult& result, const Community& community, const GammaMatrix& gamma,
                    double active_threshold = 1e-2);

/// Mean pair price over trades above `active_threshold` MW; NaN when no trade
/// is active.
double clearing_price(const ClearingResult& result, const Community& community, double active_threshold = 1e-2);

/// Σ f_n(P_n) + Σ γ_nm P_nm, the quantity the market minimizes.
double market_objective(const Community& community, const GammaMatrix& gamma, const Eigen::MatrixXd& trades);

}  // namespace p2pm
