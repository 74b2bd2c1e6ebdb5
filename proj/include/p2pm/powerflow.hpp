#pragma once

#include "p2pm/grid.hpp"

#include <Eigen/Dense>

#include <vector>

namespace p2pm {

struct FlowResult {
    std::vector<double> flows;  ///< MW, positive from from_bus to to_bus, line order
    std::vector<double> rates;  ///< |flow| / capacity
    BusId slack = 0;
};

/// Reduced susceptance factorization for one network and slack, reusable
/// across injections. Read-only after construction.
class DcPowerFlow {
public:
    DcPowerFlow(const Network& network, BusId slack);
    explicit DcPowerFlow(const Network& network) : DcPowerFlow(network, network.highest_bus()) {}

    /// `injections` in MW, bus index order. Throws ImbalanceError when
    /// |Σ injections| exceeds 1e-3 MW per bus.
    FlowResult solve(const Eigen::VectorXd& injections) const;

    const Network& network() const noexcept { return network_; }
    BusId slack() const noexcept { return slack_; }

private:
    Network network_;
    BusId slack_;
    std::size_t slack_index_;
    Eigen::LLT<Eigen::MatrixXd> factor_;
};

FlowResult dc_power_flow(const Network& network, const Eigen::VectorXd& injections, BusId slack);

struct RateSummary {
    std::vector<double> rates;
    double average = 0.0;
    double maximum = 0.0;
    std::size_t argmax = 0;  ///< line position; first of equal maxima
};

RateSummary line_rates(const FlowResult& flows);

struct ZonePairExchange {
    int zone_a = 0;
    int zone_b = 0;  ///< zone_a < zone_b
    double mw = 0.0;
};

/// Net trade volume between each unordered zone pair, taken from the
/// reciprocal part (P - P^T)/2 of the trade matrix so each trade counts once.
struct ZoneExchangeReport {
    std::vector<ZonePairExchange> pairs;
    double total = 0.0;
};

ZoneExchangeReport interzone_exchange(const Community& community, const Eigen::MatrixXd& trades,
                                      const Network& network);

/// Σ |flow| over lines whose ends lie in different zones.
double tieline_flow_total(const Network& network, const FlowResult& flows);

struct CongestedLine {
    std::size_t line = 0;  ///< position in network.lines()
    double rate = 0.0;
};

/// Lines with rate > 1, highest rate first.
std::vector<CongestedLine> congestion_report(const FlowResult& flows, const Network& network);

/// Row sums of (P - P^T)/2: net positions of the reciprocal trades. They
/// balance to rounding, unlike raw row sums of an iterate.
Eigen::VectorXd settled_net_powers(const Community& community, const Eigen::MatrixXd& trades);

}  // namespace p2pm
