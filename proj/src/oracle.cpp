#include "p2pm/oracle.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace p2pm {

namespace {

using Eigen::Index;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double clamp_power(const Agent& agent, double marginal) {
    return std::clamp((marginal - agent.b) / agent.a, agent.p_min, agent.p_max);
}

// Producer-by-consumer trade variables restricted to partner pairs.
class TradeQp {
public:
    TradeQp(const Community& community, const GammaMatrix& gamma, const QpOptions& options)
        : community_(community), options_(options) {
        std::vector<int> slot(community.size(), -1);
        for (std::size_t n = 0; n < community.size(); ++n) {
            auto& list = community.agent(n).role == Role::producer ? producers_ : consumers_;
            slot[n] = static_cast<int>(list.size());
            list.push_back(n);
        }
        const auto np = producers_.size();
        const auto nc = consumers_.size();
        row_cols_.resize(np);
        col_rows_.resize(nc);
        charge_ = Eigen::MatrixXd::Zero(static_cast<Index>(np), static_cast<Index>(nc));
        producer_gamma_ = charge_;
        for (std::size_t p = 0; p < np; ++p) {
            const auto n = producers_[p];
            for (const int m : community.partners(n)) {
                const auto c = static_cast<std::size_t>(slot[static_cast<std::size_t>(m)]);
                row_cols_[p].push_back(c);
                col_rows_[c].push_back(p);
                producer_gamma_(static_cast<Index>(p), static_cast<Index>(c)) = gamma.values(static_cast<Index>(n), m);
                charge_(static_cast<Index>(p), static_cast<Index>(c)) =
                    gamma.values(static_cast<Index>(n), m) - gamma.values(m, static_cast<Index>(n));
            }
        }
        double max_ap = 0.0;
        double max_ac = 0.0;
        for (const auto n : producers_) max_ap = std::max(max_ap, community.agent(n).a);
        for (const auto n : consumers_) max_ac = std::max(max_ac, community.agent(n).a);
        lipschitz_ = max_ap * static_cast<double>(nc) + max_ac * static_cast<double>(np);
    }

    OracleResult solve() {
        Eigen::MatrixXd t = project(Eigen::MatrixXd::Zero(charge_.rows(), charge_.cols()));
        double f = objective(t);
        double step = 1.0 / lipschitz_;
        OracleResult out;
        for (int it = 1; it <= options_.max_iterations; ++it) {
            out.iterations = it;
            const Eigen::MatrixXd g = gradient(t);
            // Backtracking from a doubled step; 1/L always satisfies the test.
            double trial = 2.0 * step;
            Eigen::MatrixXd next;
            double f_next = 0.0;
            while (true) {
                next = project(t - trial * g);
                f_next = objective(next);
                const Eigen::MatrixXd d = next - t;
                const double model = f + (g.array() * d.array()).sum() + d.squaredNorm() / (2.0 * trial);
                if (f_next <= model + 1e-12 * std::abs(f) || trial <= 1.0 / lipschitz_) break;
                trial = std::max(trial / 2.0, 1.0 / lipschitz_);
            }
            const double mapping = ((t - next) / trial).cwiseAbs().maxCoeff();
            if (f_next <= f) {
                t = std::move(next);
                f = f_next;
                step = trial;
            } else {
                step = 1.0 / lipschitz_;
            }
            if (mapping <= options_.stationarity_tol) {
                out.stationarity = stationarity(t);
                if (out.stationarity <= options_.stationarity_tol) {
                    out.converged = true;
                    break;
                }
            }
        }
        if (!out.converged) out.stationarity = stationarity(t);
        fill(out, t);
        return out;
    }

private:
    // Gradient mapping with the conservative 1/L step, max norm.
    double stationarity(const Eigen::MatrixXd& t) {
        const double s = 1.0 / lipschitz_;
        return ((t - project(t - s * gradient(t))) / s).cwiseAbs().maxCoeff();
    }

    Eigen::VectorXd supply(const Eigen::MatrixXd& t) const { return t.rowwise().sum(); }
    Eigen::VectorXd demand(const Eigen::MatrixXd& t) const { return t.colwise().sum().transpose(); }

    double objective(const Eigen::MatrixXd& t) const {
        const auto s = supply(t);
        const auto d = demand(t);
        double f = (charge_.array() * t.array()).sum();
        for (std::size_t p = 0; p < producers_.size(); ++p) f += community_.agent(producers_[p]).cost(s(Index(p)));
        for (std::size_t c = 0; c < consumers_.size(); ++c) f += community_.agent(consumers_[c]).cost(-d(Index(c)));
        return f;
    }

    Eigen::MatrixXd gradient(const Eigen::MatrixXd& t) const {
        const auto s = supply(t);
        const auto d = demand(t);
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(t.rows(), t.cols());
        for (std::size_t p = 0; p < producers_.size(); ++p) {
            const double mp = community_.agent(producers_[p]).marginal_cost(s(Index(p)));
            for (const auto c : row_cols_[p]) {
                const double mc = community_.agent(consumers_[c]).marginal_cost(-d(Index(c)));
                g(Index(p), Index(c)) = mp - mc + charge_(Index(p), Index(c));
            }
        }
        return g;
    }

    void project_rows(Eigen::MatrixXd& m) const {
        std::vector<double> buf;
        for (std::size_t p = 0; p < producers_.size(); ++p) {
            const auto& agent = community_.agent(producers_[p]);
            buf.clear();
            for (const auto c : row_cols_[p]) buf.push_back(m(Index(p), Index(c)));
            project_capped_simplex(buf, agent.p_min, agent.p_max);
            for (std::size_t i = 0; i < buf.size(); ++i) m(Index(p), Index(row_cols_[p][i])) = buf[i];
        }
    }

    void project_cols(Eigen::MatrixXd& m) const {
        std::vector<double> buf;
        for (std::size_t c = 0; c < consumers_.size(); ++c) {
            const auto& agent = community_.agent(consumers_[c]);
            buf.clear();
            for (const auto p : col_rows_[c]) buf.push_back(m(Index(p), Index(c)));
            project_capped_simplex(buf, -agent.p_max, -agent.p_min);
            for (std::size_t i = 0; i < buf.size(); ++i) m(Index(col_rows_[c][i]), Index(c)) = buf[i];
        }
    }

    // Dykstra alternation between the producer-row and consumer-column sets.
    Eigen::MatrixXd project(const Eigen::MatrixXd& v) const {
        Eigen::MatrixXd x = v;
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(v.rows(), v.cols());
        Eigen::MatrixXd q = p;
        for (int sweep = 0; sweep < options_.max_projection_sweeps; ++sweep) {
            Eigen::MatrixXd y = x + p;
            project_rows(y);
            p = x + p - y;
            Eigen::MatrixXd next = y + q;
            project_cols(next);
            q = y + q - next;
            const double moved = (next - x).cwiseAbs().maxCoeff();
            const double gap = (next - y).cwiseAbs().maxCoeff();
            x = std::move(next);
            if (moved <= options_.projection_tol && gap <= options_.projection_tol) break;
        }
        return x;
    }

    void fill(OracleResult& out, const Eigen::MatrixXd& t) const {
        const auto n = static_cast<Index>(community_.size());
        out.trades = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t p = 0; p < producers_.size(); ++p) {
            for (const auto c : row_cols_[p]) {
                const auto i = static_cast<Index>(producers_[p]);
                const auto j = static_cast<Index>(consumers_[c]);
                out.trades(i, j) = t(Index(p), Index(c));
                out.trades(j, i) = -t(Index(p), Index(c));
            }
        }
        out.net_powers = out.trades.rowwise().sum();
        out.social_welfare = social_welfare(community_, {out.net_powers.data(), community_.size()});
        out.objective = objective(t);

        // Price seen on active trades of producers that sit off their bounds.
        const auto s = supply(t);
        double sum = 0.0;
        int count = 0;
        for (std::size_t p = 0; p < producers_.size(); ++p) {
            const auto& agent = community_.agent(producers_[p]);
            const double sp = s(Index(p));
            if (sp <= agent.p_min + 1e-6 || sp >= agent.p_max - 1e-6) continue;
            for (const auto c : row_cols_[p]) {
                if (t(Index(p), Index(c)) <= 1e-2) continue;
                sum += agent.marginal_cost(sp) + producer_gamma_(Index(p), Index(c));
                ++count;
            }
        }
        out.clearing_price = count == 0 ? kNaN : sum / count;
    }

    const Community& community_;
    QpOptions options_;
    std::vector<std::size_t> producers_;
    std::vector<std::size_t> consumers_;
    std::vector<std::vector<std::size_t>> row_cols_;
    std::vector<std::vector<std::size_t>> col_rows_;
    Eigen::MatrixXd charge_;  // γ_pc - γ_cp per producer/consumer slot
    Eigen::MatrixXd producer_gamma_;
    double lipschitz_ = 1.0;
};

}  // namespace

void project_capped_simplex(std::span<double> v, double low, double high) {
    double positive = 0.0;
    for (const double x : v) positive += std::max(0.0, x);
    if (positive >= low && positive <= high) {
        for (double& x : v) x = std::max(0.0, x);
        return;
    }
    const double target = positive > high ? high : low;
    if (target <= 0.0 || v.empty()) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    // Find θ with Σ max(0, v - θ) = target from the sorted values.
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cumulative += sorted[k];
        const double candidate = (cumulative - target) / static_cast<double>(k + 1);
        if (sorted[k] > candidate) theta = candidate;
    }
    for (double& x : v) x = std::max(0.0, x - theta);
}

double social_welfare(const Community& community, std::span<const double> net_powers) {
    if (net_powers.size() != community.size()) throw ValidationError("social_welfare: wrong number of net powers");
    double total = 0.0;
    for (std::size_t n = 0; n < community.size(); ++n) total += community.agent(n).cost(net_powers[n]);
    return total;
}

OracleResult bisection_clearing(const Community& community, double wedge) {
    if (!std::isfinite(wedge) || wedge < 0.0) throw ValidationError("wedge must be a finite value >= 0");
    if (!community.is_full_bipartite()) {
        throw ValidationError("bisection clearing needs every producer partnered with every consumer");
    }
    const double half = wedge / 2.0;
    auto dispatch = [&](double lambda, Eigen::VectorXd* powers) {
        double total = 0.0;
        for (std::size_t n = 0; n < community.size(); ++n) {
            const auto& agent = community.agent(n);
            const double p = clamp_power(agent, agent.role == Role::producer ? lambda - half : lambda + half);
            if (powers != nullptr) (*powers)(static_cast<Index>(n)) = p;
            total += p;
        }
        return total;
    };

    // Outside [lo, hi] every agent sits on a bound.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& agent : community.agents()) {
        lo = std::min({lo, agent.marginal_cost(agent.p_min), agent.marginal_cost(agent.p_max)});
        hi = std::max({hi, agent.marginal_cost(agent.p_min), agent.marginal_cost(agent.p_max)});
    }
    lo -= half + 1.0;
    hi += half + 1.0;
    const double f_lo = dispatch(lo, nullptr);
    const double f_hi = dispatch(hi, nullptr);
    if (f_lo > 1e-6 || f_hi < -1e-6) {
        throw InfeasibleError("no price balances the community: net power ranges over [" + std::to_string(f_lo) +
                              ", " + std::to_string(f_hi) + "] MW");
    }

    OracleResult out;
    double residual = 0.0;
    double lambda = 0.5 * (lo + hi);
    for (int it = 1; it <= 200; ++it) {
        out.iterations = it;
        lambda = 0.5 * (lo + hi);
        residual = dispatch(lambda, nullptr);
        if (std::abs(residual) <= 1e-9 || hi - lo <= 1e-13 * std::max(1.0, std::abs(lambda))) break;
        (residual > 0.0 ? hi : lo) = lambda;
    }
    out.net_powers = Eigen::VectorXd::Zero(static_cast<Index>(community.size()));
    residual = dispatch(lambda, &out.net_powers);
    out.clearing_price = lambda;
    out.converged = std::abs(residual) <= 1e-6;
    out.stationarity = std::abs(residual);
    out.social_welfare = social_welfare(community, {out.net_powers.data(), community.size()});
    double sold = 0.0;
    for (std::size_t n = 0; n < community.size(); ++n) {
        if (community.agent(n).role == Role::producer) sold += out.net_powers(static_cast<Index>(n));
    }
    out.objective = out.social_welfare + wedge * sold;
    return out;
}

OracleResult qp_reference(const Community& community, const GammaMatrix& gamma, const QpOptions& options) {
    if (gamma.values.rows() != static_cast<Index>(community.size()) ||
        gamma.values.cols() != static_cast<Index>(community.size())) {
        throw ValidationError("gamma matrix does not match the community size");
    }
    return TradeQp(community, gamma, options).solve();
}

}  // namespace p2pm
