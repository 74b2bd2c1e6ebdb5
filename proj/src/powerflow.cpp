#include "p2pm/powerflow.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace p2pm {

namespace {

using Eigen::Index;

Eigen::MatrixXd reduced_susceptance(const Network& network, std::size_t slack_index) {
    const Eigen::MatrixXd b = susceptance_matrix(network);
    const auto n = b.rows();
    const auto s = static_cast<Index>(slack_index);
    Eigen::MatrixXd r(n - 1, n - 1);
    for (Index i = 0, ri = 0; i < n; ++i) {
        if (i == s) continue;
        for (Index j = 0, rj = 0; j < n; ++j) {
            if (j == s) continue;
            r(ri, rj++) = b(i, j);
        }
        ++ri;
    }
    return r;
}

}  // namespace

DcPowerFlow::DcPowerFlow(const Network& network, BusId slack)
    : network_(network), slack_(slack), slack_index_(network.bus_index(slack)) {
    if (network_.bus_count() > 1) {
        factor_.compute(reduced_susceptance(network_, slack_index_));
        if (factor_.info() != Eigen::Success) {
            throw SingularSystemError("reduced susceptance matrix is singular; is the network connected?");
        }
    }
}

FlowResult DcPowerFlow::solve(const Eigen::VectorXd& injections) const {
    const auto n = static_cast<Index>(network_.bus_count());
    if (injections.size() != n) {
        throw ValidationError("expected " + std::to_string(n) + " bus injections, got " +
                              std::to_string(injections.size()));
    }
    const double residual = injections.sum();
    const double tolerance = 1e-3 * static_cast<double>(n);
    if (std::abs(residual) > tolerance) throw ImbalanceError(residual, tolerance);

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
    if (n > 1) {
        Eigen::VectorXd rhs(n - 1);
        for (Index i = 0, r = 0; i < n; ++i) {
            if (i != static_cast<Index>(slack_index_)) rhs(r++) = injections(i) / network_.base_mva();
        }
        const Eigen::VectorXd reduced = factor_.solve(rhs);
        for (Index i = 0, r = 0; i < n; ++i) {
            if (i != static_cast<Index>(slack_index_)) theta(i) = reduced(r++);
        }
    }

    FlowResult out;
    out.slack = slack_;
    out.flows.reserve(network_.line_count());
    out.rates.reserve(network_.line_count());
    for (const auto& line : network_.lines()) {
        const auto f = static_cast<Index>(network_.bus_index(line.from_bus));
        const auto t = static_cast<Index>(network_.bus_index(line.to_bus));
        const double flow = (theta(f) - theta(t)) / line.reactance * network_.base_mva();
        out.flows.push_back(flow);
        out.rates.push_back(std::abs(flow) / line.capacity);
    }
    return out;
}

FlowResult dc_power_flow(const Network& network, const Eigen::VectorXd& injections, BusId slack) {
    return DcPowerFlow(network, slack).solve(injections);
}

RateSummary line_rates(const FlowResult& flows) {
    RateSummary s;
    s.rates = flows.rates;
    if (s.rates.empty()) return s;
    double sum = 0.0;
    for (std::size_t l = 0; l < s.rates.size(); ++l) {
        sum += s.rates[l];
        if (s.rates[l] > s.maximum) {
            s.maximum = s.rates[l];
            s.argmax = l;
        }
    }
    s.average = sum / static_cast<double>(s.rates.size());
    return s;
}

ZoneExchangeReport interzone_exchange(const Community& community, const Eigen::MatrixXd& trades,
                                      const Network& network) {
    std::map<std::pair<int, int>, double> net;
    for (int a = 1; a <= network.zone_count(); ++a) {
        for (int b = a + 1; b <= network.zone_count(); ++b) net[{a, b}] = 0.0;
    }
    for (std::size_t n = 0; n < community.size(); ++n) {
        const int zn = network.zone_of(community.agent(n).bus);
        for (const int m : community.partners(n)) {
            const int zm = network.zone_of(community.agent(static_cast<std::size_t>(m)).bus);
            if (zn >= zm) continue;
            const auto i = static_cast<Index>(n);
            net[{zn, zm}] += (trades(i, m) - trades(m, i)) / 2.0;
        }
    }
    ZoneExchangeReport report;
    for (const auto& [zones, mw] : net) {
        report.pairs.push_back({zones.first, zones.second, std::abs(mw)});
        report.total += std::abs(mw);
    }
    return report;
}

double tieline_flow_total(const Network& network, const FlowResult& flows) {
    double total = 0.0;
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        const auto& line = network.lines()[l];
        if (network.zone_of(line.from_bus) != network.zone_of(line.to_bus)) total += std::abs(flows.flows[l]);
    }
    return total;
}

std::vector<CongestedLine> congestion_report(const FlowResult& flows, const Network& network) {
    if (flows.rates.size() != network.line_count()) {
        throw ValidationError("flow result does not match the network's line count");
    }
    std::vector<CongestedLine> out;
    for (std::size_t l = 0; l < flows.rates.size(); ++l) {
        if (flows.rates[l] > 1.0) out.push_back({l, flows.rates[l]});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.rate > b.rate; });
    return out;
}

Eigen::VectorXd settled_net_powers(const Community& community, const Eigen::MatrixXd& trades) {
    Eigen::VectorXd net = Eigen::VectorXd::Zero(static_cast<Index>(community.size()));
    for (std::size_t n = 0; n < community.size(); ++n) {
        const auto i = static_cast<Index>(n);
        for (const int m : community.partners(n)) net(i) += (trades(i, m) - trades(m, i)) / 2.0;
    }
    return net;
}

}  // namespace p2pm
