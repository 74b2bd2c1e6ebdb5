#pragma once

#include "p2pm/grid.hpp"

#include <Eigen/Dense>

#include <span>
#include <string_view>
#include <vector>

namespace p2pm {

enum class DistanceMetric { thevenin, power_transfer };

const char* to_string(DistanceMetric metric);
/// Accepts "thevenin" and "power_transfer"; throws ValidationError otherwise.
DistanceMetric parse_distance_metric(std::string_view text);

struct PathResult {
    std::vector<BusId> nodes;
    double total_weight = 0.0;
    std::vector<int> zones_visited;  // distinct, in order of first visit
};

/// Inverse of the susceptance matrix grounded at `reference`: that row and
/// column are dropped, the rest inverted, then zeros re-embedded. Pair
/// quantities Z_ii + Z_jj - 2 Z_ij do not depend on the reference.
Eigen::MatrixXd bus_impedance_matrix(const Network& network, BusId reference);
inline Eigen::MatrixXd bus_impedance_matrix(const Network& network) {
    return bus_impedance_matrix(network, network.highest_bus());
}

/// |Z_ii + Z_jj - 2 Z_ij| per line, in line order.
std::vector<double> thevenin_line_weights(const Network& network);

/// Dijkstra over `weights` (one per line). Among equal-weight paths the
/// lexicographically smallest node sequence wins.
PathResult shortest_path(const Network& network, std::span<const double> weights, BusId from, BusId to);

/// Lines by buses; entry (l, i) is the flow on line l for 1 MW injected at
/// bus i and withdrawn at `slack`.
Eigen::MatrixXd ptdf_matrix(const Network& network, BusId slack);

double power_transfer_distance(const Eigen::MatrixXd& ptdf, std::size_t bus_index_n, std::size_t bus_index_m);
double power_transfer_distance(const Network& network, BusId bus_n, BusId bus_m);

/// Distinct zones along the path; 1 for an intra-zone path.
int zones_crossed(const PathResult& path, const Network& network);

/// Thevenin weights, shortest-path machinery and PTDFs for one network,
/// computed once. Read-only after construction, so it may be shared.
class GridSensitivities {
public:
    explicit GridSensitivities(const Network& network);

    const Network& network() const noexcept { return network_; }
    const std::vector<double>& line_weights() const noexcept { return weights_; }
    const Eigen::MatrixXd& ptdf() const noexcept { return ptdf_; }

    PathResult path(BusId from, BusId to) const { return shortest_path(network_, weights_, from, to); }
    double distance(DistanceMetric metric, BusId a, BusId b) const;

private:
    Network network_;
    std::vector<double> weights_;
    Eigen::MatrixXd ptdf_;
};

struct DistanceMatrix {
    DistanceMetric metric = DistanceMetric::power_transfer;
    Eigen::MatrixXd values;  // agent index by agent index

    double operator()(std::size_t n, std::size_t m) const {
        return values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }
};

/// Bus-pair distances between agents' buses; co-located agents get 0.
DistanceMatrix distance_matrix(const Community& community, const GridSensitivities& grid, DistanceMetric metric);
DistanceMatrix distance_matrix(const Community& community, const Network& network, DistanceMetric metric);

/// Zones crossed by the Thevenin shortest path between each pair of agents.
struct ZoneCrossings {
    Eigen::MatrixXi counts;
    std::vector<std::vector<int>> visited;  // row-major n*n, zones on each path

    const std::vector<int>& zones(std::size_t n, std::size_t m) const {
        return visited[n * static_cast<std::size_t>(counts.cols()) + m];
    }

    int operator()(std::size_t n, std::size_t m) const {
        return counts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }
};

ZoneCrossings zone_crossings(const Community& community, const GridSensitivities& grid);

}  // namespace p2pm
