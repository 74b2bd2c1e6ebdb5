#include "p2pm/market.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <barrier>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace p2pm {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

// Per-row scratch results reduced serially after each iteration.
struct RowResiduals {
    double price = 0.0;
    double primal = 0.0;
    double stationarity = 0.0;
    double bound = 0.0;
    double net_power = 0.0;
};

double pair_stationarity(const Agent& agent, double net_power, double y, double gamma, double mu_hi, double mu_lo,
                         double p_nm, double active_threshold) {
    const double r = agent.marginal_cost(net_power) - y + gamma + mu_hi - mu_lo;
    if (std::abs(p_nm) > active_threshold) return std::abs(r);
    return agent.role == Role::producer ? std::max(0.0, -r) : std::max(0.0, r);
}

// Runs the iteration one agent row at a time. Every row touches only its own
// outputs, and reductions over rows happen in `finish`, so the arithmetic is
// the same whether rows run on one thread or many.
class Engine {
public:
    Engine(const Community& community, const GammaMatrix& gamma, const SolverConfig& config)
        : community_(community), gamma_(gamma), config_(config), state_(initial_state(community)),
          next_prices_(state_.prices), rows_(community.size()), weights_(community.size()) {
        for (std::size_t n = 0; n < community.size(); ++n) weights_[n].resize(community.partners(n).size());
        // finish() runs as a barrier completion and must not allocate past this.
        history_.reserve(static_cast<std::size_t>(config.max_iterations));
    }

    // Prices, bound multipliers and trades for row n, from the frozen k-state.
    void advance_row(std::size_t n) {
        const auto& agent = community_.agent(n);
        const auto partners = community_.partners(n);
        const int k = state_.k;
        const double alpha = config_.alpha(k);
        const double beta = config_.beta(k);
        for (const int m : partners) {
            next_prices_(idx(n), m) = price_update(state_.prices(idx(n), m), state_.prices(m, idx(n)),
                                                   state_.trades(idx(n), m), state_.coordinator(idx(n), m), alpha, beta);
        }
        const double z_n = row_sum(state_.coordinator, n);
        const auto mu = bounds_update(state_.mu_hi(idx(n)), state_.mu_lo(idx(n)), z_n, agent.p_min, agent.p_max,
                                      config_.rho);
        state_.mu_hi(idx(n)) = mu.hi;
        state_.mu_lo(idx(n)) = mu.lo;
        auto& g = weights_[n];
        gradient_weights(state_.coordinator, n, partners, config_.tau, config_.delta, k, g);
        for (std::size_t i = 0; i < partners.size(); ++i) {
            const int m = partners[i];
            const double target = trade_target(agent, next_prices_(idx(n), m), gamma_.values(idx(n), m), mu.hi, mu.lo);
            state_.trades(idx(n), m) = trade_update(agent.role, state_.coordinator(idx(n), m), z_n, g[i], target);
        }
    }

    // Coordinator row and residual contributions, once every row has traded.
    void settle_row(std::size_t n) {
        const auto& agent = community_.agent(n);
        auto& r = rows_[n];
        r = RowResiduals{};
        for (const int m : community_.partners(n)) {
            state_.coordinator(idx(n), m) = (state_.trades(idx(n), m) - state_.trades(m, idx(n))) / 2.0;
        }
        r.net_power = row_sum(state_.trades, n);
        r.bound = std::max({0.0, r.net_power - agent.p_max, agent.p_min - r.net_power});
        for (const int m : community_.partners(n)) {
            const double y = next_prices_(idx(n), m);
            r.price = std::max(r.price, std::abs(y - next_prices_(m, idx(n))));
            r.primal = std::max(r.primal, std::abs(state_.trades(idx(n), m) - state_.coordinator(idx(n), m)));
            r.stationarity = std::max(r.stationarity,
                                      pair_stationarity(agent, r.net_power, y, gamma_.values(idx(n), m),
                                                        state_.mu_hi(idx(n)), state_.mu_lo(idx(n)),
                                                        state_.trades(idx(n), m), config_.eps_primal));
        }
    }

    // Serial reduction and stopping test; returns true when the run is over.
    bool finish() noexcept {
        state_.prices.swap(next_prices_);
        ResidualRecord rec;
        double balance = 0.0;
        for (const auto& r : rows_) {
            rec.price = std::max(rec.price, r.price);
            rec.primal = std::max(rec.primal, r.primal);
            rec.stationarity = std::max(rec.stationarity, r.stationarity);
            rec.bound = std::max(rec.bound, r.bound);
            balance += r.net_power;
        }
        history_.push_back(rec);
        const auto n = static_cast<double>(community_.size());
        converged_ = rec.price <= config_.eps_price && rec.primal <= config_.eps_primal &&
                     rec.stationarity <= config_.eps_price && rec.bound <= config_.eps_primal &&
                     std::abs(balance) <= n * config_.eps_primal;
        done_ = converged_ || state_.k >= config_.max_iterations;
        if (!done_) ++state_.k;
        return done_;
    }

    void run_serial() {
        const auto n = community_.size();
        do {
            for (std::size_t i = 0; i < n; ++i) advance_row(i);
            for (std::size_t i = 0; i < n; ++i) settle_row(i);
        } while (!finish());
    }

    void run_threaded(unsigned threads) {
        const auto n = community_.size();
        auto completion = [this]() noexcept { finish(); };
        std::barrier<> trade_sync(static_cast<std::ptrdiff_t>(threads));
        std::barrier iteration_sync(static_cast<std::ptrdiff_t>(threads), completion);
        auto work = [&](unsigned t) {
            const std::size_t first = n * t / threads;
            const std::size_t last = n * (t + 1) / threads;
            while (true) {
                for (std::size_t i = first; i < last; ++i) advance_row(i);
                trade_sync.arrive_and_wait();
                for (std::size_t i = first; i < last; ++i) settle_row(i);
                iteration_sync.arrive_and_wait();
                if (done_) break;
            }
        };
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work, t);
        work(0);
    }

    ClearingResult result() {
        ClearingResult out;
        out.trades = state_.trades;
        out.prices = state_.prices;
        out.net_powers = Eigen::VectorXd::Zero(idx(community_.size()));
        for (std::size_t n = 0; n < community_.size(); ++n) out.net_powers(idx(n)) = row_sum(state_.trades, n);
        out.mu_hi = state_.mu_hi;
        out.mu_lo = state_.mu_lo;
        out.iterations = state_.k;
        out.converged = converged_;
        out.history = std::move(history_);
        out.kkt_residual = kkt_residual(out, community_, gamma_, config_.eps_primal);
        return out;
    }

private:
    // Fixed partner order keeps every row sum reproducible.
    double row_sum(const Eigen::MatrixXd& matrix, std::size_t n) const {
        double s = 0.0;
        for (const int m : community_.partners(n)) s += matrix(idx(n), m);
        return s;
    }

    const Community& community_;
    const GammaMatrix& gamma_;
    const SolverConfig& config_;
    MarketState state_;
    Eigen::MatrixXd next_prices_;
    std::vector<RowResiduals> rows_;
    std::vector<std::vector<double>> weights_;
    std::vector<ResidualRecord> history_;
    bool converged_ = false;
    bool done_ = false;
};

}  // namespace

void SolverConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("solver ") + name + " must be positive");
    };
    positive(alpha0, "alpha0");
    positive(beta0, "beta0");
    positive(rho, "rho");
    positive(tau, "tau");
    positive(delta, "delta");
    positive(eps_price, "eps_price");
    positive(eps_primal, "eps_primal");
    if (!(alpha_decay >= 0.0) || !(beta_decay >= 0.0)) throw ValidationError("solver decay exponents must be >= 0");
    if (max_iterations < 1) throw ValidationError("solver max_iterations must be at least 1");
    if (threads < 1) throw ValidationError("solver threads must be at least 1");
}

double SolverConfig::alpha(int k) const { return alpha0 * std::pow(static_cast<double>(k), -alpha_decay); }
double SolverConfig::beta(int k) const { return beta0 * std::pow(static_cast<double>(k), -beta_decay); }

MarketState initial_state(const Community& community) {
    const auto n = idx(community.size());
    MarketState s;
    s.trades = Eigen::MatrixXd::Zero(n, n);
    s.coordinator = Eigen::MatrixXd::Zero(n, n);
    s.prices = Eigen::MatrixXd::Zero(n, n);
    s.mu_hi = Eigen::VectorXd::Zero(n);
    s.mu_lo = Eigen::VectorXd::Zero(n);
    double b_sum = 0.0;
    for (const auto& a : community.agents()) b_sum += a.b;
    const double y0 = b_sum / static_cast<double>(community.size());
    for (std::size_t i = 0; i < community.size(); ++i) {
        for (const int m : community.partners(i)) s.prices(idx(i), m) = y0;
    }
    return s;
}

double price_update(double y_nm, double y_mn, double p_nm, double z_nm, double alpha, double beta) {
    return y_nm - beta * (y_nm - y_mn) - alpha * (p_nm - z_nm);
}

double price_update(const MarketState& state, const SolverConfig& config, std::size_t n, std::size_t m) {
    return price_update(state.prices(idx(n), idx(m)), state.prices(idx(m), idx(n)), state.trades(idx(n), idx(m)),
                        state.coordinator(idx(n), idx(m)), config.alpha(state.k), config.beta(state.k));
}

BoundMultipliers bounds_update(double mu_hi, double mu_lo, double z_n, double p_min, double p_max, double rho) {
    return {std::max(0.0, mu_hi + rho * (z_n - p_max)), std::max(0.0, mu_lo + rho * (p_min - z_n))};
}

BoundMultipliers bounds_update(const MarketState& state, const SolverConfig& config, const Agent& agent,
                               std::size_t n) {
    const double z_n = state.coordinator.row(idx(n)).sum();
    return bounds_update(state.mu_hi(idx(n)), state.mu_lo(idx(n)), z_n, agent.p_min, agent.p_max, config.rho);
}

void gradient_weights(const Eigen::MatrixXd& coordinator, std::size_t n, std::span<const int> partners, double tau,
                      double delta, int k, std::span<double> out) {
    const double floor = tau * std::pow(static_cast<double>(k), -delta);
    double total = 0.0;
    for (std::size_t i = 0; i < partners.size(); ++i) {
        out[i] = std::abs(coordinator(idx(n), partners[i])) + floor;
        total += out[i];
    }
    for (std::size_t i = 0; i < partners.size(); ++i) out[i] /= total;
}

double gradient_step(const MarketState& state, const SolverConfig& config, const Community& community, std::size_t n,
                     std::size_t m) {
    const auto partners = community.partners(n);
    const auto it = std::find(partners.begin(), partners.end(), static_cast<int>(m));
    if (it == partners.end()) throw ValidationError("gradient_step: agents are not partners");
    std::vector<double> g(partners.size());
    gradient_weights(state.coordinator, n, partners, config.tau, config.delta, state.k, g);
    return g[static_cast<std::size_t>(it - partners.begin())];
}

double trade_target(const Agent& agent, double y_nm, double gamma_nm, double mu_hi, double mu_lo) {
    return agent.power_at_marginal_cost(y_nm - gamma_nm - mu_hi + mu_lo);
}

double trade_update(Role role, double z_nm, double z_n, double weight, double target) {
    const double candidate = z_nm + weight * (target - z_n);
    return role == Role::producer ? std::max(0.0, candidate) : std::min(0.0, candidate);
}

Eigen::MatrixXd coordinator_update(const Eigen::MatrixXd& trades) {
    return (trades - trades.transpose()) / 2.0;
}

ClearingResult clear_market(const Community& community, const GammaMatrix& gamma, const SolverConfig& config) {
    config.validate();
    if (gamma.values.rows() != idx(community.size()) || gamma.values.cols() != idx(community.size())) {
        throw ValidationError("gamma matrix does not match the community size");
    }
    Engine engine(community, gamma, config);
    const unsigned threads = std::min<unsigned>(config.threads, static_cast<unsigned>(community.size()));
    if (threads <= 1) {
        engine.run_serial();
    } else {
        engine.run_threaded(threads);
    }
    return engine.result();
}

double kkt_residual(const Community& community, const GammaMatrix& gamma, const Eigen::MatrixXd& trades,
                    const Eigen::MatrixXd& prices, const Eigen::VectorXd& mu_hi, const Eigen::VectorXd& mu_lo,
                    double active_threshold) {
    double worst = 0.0;
    for (std::size_t n = 0; n < community.size(); ++n) {
        const auto& agent = community.agent(n);
        double p_n = 0.0;
        for (const int m : community.partners(n)) p_n += trades(idx(n), m);
        for (const int m : community.partners(n)) {
            worst = std::max(worst, pair_stationarity(agent, p_n, prices(idx(n), m), gamma.values(idx(n), m),
                                                      mu_hi(idx(n)), mu_lo(idx(n)), trades(idx(n), m),
                                                      active_threshold));
        }
    }
    return worst;
}

double kkt_residual(const ClearingResult& result, const Community& community, const GammaMatrix& gamma,
                    double active_threshold) {
    return kkt_residual(community, gamma, result.trades, result.prices, result.mu_hi, result.mu_lo, active_threshold);
}

double clearing_price(const ClearingResult& result, const Community& community, double active_threshold) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t n = 0; n < community.size(); ++n) {
        for (const int m : community.partners(n)) {
            if (std::abs(result.trades(idx(n), m)) > active_threshold) {
                sum += result.prices(idx(n), m);
                ++count;
            }
        }
    }
    return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / count;
}

double market_objective(const Community& community, const GammaMatrix& gamma, const Eigen::MatrixXd& trades) {
    double total = 0.0;
    for (std::size_t n = 0; n < community.size(); ++n) {
        double p_n = 0.0;
        double charges = 0.0;
        for (const int m : community.partners(n)) {
            p_n += trades(idx(n), m);
            charges += gamma.values(idx(n), m) * trades(idx(n), m);
        }
        total += community.agent(n).cost(p_n) + charges;
    }
    return total;
}

}  // namespace p2pm
