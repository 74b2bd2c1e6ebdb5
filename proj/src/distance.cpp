#include "p2pm/distance.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <utility>

namespace p2pm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Edge {
    std::size_t to;
    double weight;
};

using Adjacency = std::vector<std::vector<Edge>>;

Adjacency build_adjacency(const Network& network, std::span<const double> weights) {
    if (weights.size() != network.line_count()) {
        throw ValidationError("expected " + std::to_string(network.line_count()) + " line weights, got " +
                              std::to_string(weights.size()));
    }
    Adjacency adj(network.bus_count());
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        const auto& line = network.lines()[l];
        if (!(weights[l] >= 0.0)) throw ValidationError("line " + std::to_string(line.id) + ": negative weight");
        const auto f = network.bus_index(line.from_bus);
        const auto t = network.bus_index(line.to_bus);
        adj[f].push_back({t, weights[l]});
        adj[t].push_back({f, weights[l]});
    }
    for (auto& edges : adj) {
        std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
            return a.to != b.to ? a.to < b.to : a.weight < b.weight;
        });
    }
    return adj;
}

std::vector<double> dijkstra(const Adjacency& adj, std::size_t source) {
    std::vector<double> dist(adj.size(), kInf);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u]) continue;
        for (const auto& e : adj[u]) {
            const double nd = d + e.weight;
            if (nd < dist[e.to]) {
                dist[e.to] = nd;
                heap.emplace(nd, e.to);
            }
        }
    }
    return dist;
}

// Grounded inverse of B in bus-index coordinates.
Eigen::MatrixXd grounded_inverse(const Network& network, BusId reference) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    const auto r = static_cast<Eigen::Index>(network.bus_index(reference));
    const Eigen::MatrixXd b = susceptance_matrix(network);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, n);
    if (n == 1) return x;

    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i != r) keep.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd reduced(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) reduced(i, j) = b(keep[i], keep[j]);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(reduced);
    if (llt.info() != Eigen::Success) {
        throw SingularSystemError("reduced susceptance matrix is not positive definite; is the network connected?");
    }
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) x(keep[i], keep[j]) = inv(i, j);
    }
    return x;
}

}  // namespace

const char* to_string(DistanceMetric metric) {
    return metric == DistanceMetric::thevenin ? "thevenin" : "power_transfer";
}

DistanceMetric parse_distance_metric(std::string_view text) {
    if (text == "thevenin") return DistanceMetric::thevenin;
    if (text == "power_transfer") return DistanceMetric::power_transfer;
    throw ValidationError("unknown distance metric '" + std::string(text) + "' (thevenin | power_transfer)");
}

Eigen::MatrixXd bus_impedance_matrix(const Network& network, BusId reference) {
    return grounded_inverse(network, reference);
}

std::vector<double> thevenin_line_weights(const Network& network) {
    const Eigen::MatrixXd z = bus_impedance_matrix(network);
    std::vector<double> weights;
    weights.reserve(network.line_count());
    for (const auto& line : network.lines()) {
        const auto i = static_cast<Eigen::Index>(network.bus_index(line.from_bus));
        const auto j = static_cast<Eigen::Index>(network.bus_index(line.to_bus));
        weights.push_back(std::abs(z(i, i) + z(j, j) - 2.0 * z(i, j)));
    }
    return weights;
}

PathResult shortest_path(const Network& network, std::span<const double> weights, BusId from, BusId to) {
    const auto source = network.bus_index(from);
    const auto target = network.bus_index(to);
    const auto adj = build_adjacency(network, weights);
    const auto forward = dijkstra(adj, source);
    if (forward[target] == kInf) {
        throw UnreachableError("bus " + std::to_string(to) + " is unreachable from bus " + std::to_string(from));
    }
    const auto backward = dijkstra(adj, target);
    const double total = forward[target];
    const double tol = 1e-9 * std::max(1.0, total);

    // Walk forward taking the smallest-id neighbour that stays on a shortest path.
    PathResult result;
    result.nodes.push_back(from);
    std::vector<bool> visited(adj.size(), false);
    visited[source] = true;
    std::size_t u = source;
    while (u != target) {
        const Edge* next = nullptr;
        for (const auto& e : adj[u]) {
            if (visited[e.to]) continue;
            if (std::abs(forward[u] + e.weight + backward[e.to] - total) > tol) continue;
            if (next == nullptr || network.buses()[e.to].id < network.buses()[next->to].id) next = &e;
        }
        if (next == nullptr) throw UnreachableError("shortest path reconstruction failed");
        visited[next->to] = true;
        result.total_weight += next->weight;
        u = next->to;
        result.nodes.push_back(network.buses()[u].id);
    }
    for (const auto bus : result.nodes) {
        const int zone = network.zone_of(bus);
        if (std::find(result.zones_visited.begin(), result.zones_visited.end(), zone) == result.zones_visited.end()) {
            result.zones_visited.push_back(zone);
        }
    }
    return result;
}

Eigen::MatrixXd ptdf_matrix(const Network& network, BusId slack) {
    const Eigen::MatrixXd x = grounded_inverse(network, slack);
    const auto lines = static_cast<Eigen::Index>(network.line_count());
    Eigen::MatrixXd ptdf(lines, x.cols());
    for (Eigen::Index l = 0; l < lines; ++l) {
        const auto& line = network.lines()[static_cast<std::size_t>(l)];
        const auto f = static_cast<Eigen::Index>(network.bus_index(line.from_bus));
        const auto t = static_cast<Eigen::Index>(network.bus_index(line.to_bus));
        ptdf.row(l) = (x.row(f) - x.row(t)) / line.reactance;
    }
    return ptdf;
}

double power_transfer_distance(const Eigen::MatrixXd& ptdf, std::size_t bus_index_n, std::size_t bus_index_m) {
    if (bus_index_n == bus_index_m) return 0.0;
    return (ptdf.col(static_cast<Eigen::Index>(bus_index_n)) - ptdf.col(static_cast<Eigen::Index>(bus_index_m)))
        .cwiseAbs()
        .sum();
}

double power_transfer_distance(const Network& network, BusId bus_n, BusId bus_m) {
    const auto n = network.bus_index(bus_n);
    const auto m = network.bus_index(bus_m);
    return power_transfer_distance(ptdf_matrix(network, network.highest_bus()), n, m);
}

int zones_crossed(const PathResult& path, const Network& network) {
    std::vector<int> zones;
    for (const auto bus : path.nodes) zones.push_back(network.zone_of(bus));
    std::sort(zones.begin(), zones.end());
    return static_cast<int>(std::unique(zones.begin(), zones.end()) - zones.begin());
}

GridSensitivities::GridSensitivities(const Network& network)
    : network_(network), weights_(thevenin_line_weights(network)),
      ptdf_(ptdf_matrix(network, network.highest_bus())) {}

double GridSensitivities::distance(DistanceMetric metric, BusId a, BusId b) const {
    if (metric == DistanceMetric::power_transfer) {
        return power_transfer_distance(ptdf_, network_.bus_index(a), network_.bus_index(b));
    }
    return a == b ? 0.0 : path(a, b).total_weight;
}

DistanceMatrix distance_matrix(const Community& community, const GridSensitivities& grid, DistanceMetric metric) {
    const auto n = static_cast<Eigen::Index>(community.size());
    DistanceMatrix result{metric, Eigen::MatrixXd::Zero(n, n)};
    std::map<std::pair<BusId, BusId>, double> cache;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            auto a = community.agent(static_cast<std::size_t>(i)).bus;
            auto b = community.agent(static_cast<std::size_t>(j)).bus;
            if (a > b) std::swap(a, b);
            auto it = cache.find({a, b});
            if (it == cache.end()) it = cache.emplace(std::pair{a, b}, grid.distance(metric, a, b)).first;
            result.values(i, j) = it->second;
            result.values(j, i) = it->second;
        }
    }
    return result;
}

DistanceMatrix distance_matrix(const Community& community, const Network& network, DistanceMetric metric) {
    return distance_matrix(community, GridSensitivities(network), metric);
}

ZoneCrossings zone_crossings(const Community& community, const GridSensitivities& grid) {
    const auto n = community.size();
    const auto& network = grid.network();
    ZoneCrossings result{Eigen::MatrixXi::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                         std::vector<std::vector<int>>(n * n)};
    std::map<std::pair<BusId, BusId>, std::vector<int>> cache;
    for (std::size_t i = 0; i < n; ++i) {
        result.visited[i * n + i] = {network.zone_of(community.agent(i).bus)};
        for (std::size_t j = i + 1; j < n; ++j) {
            auto a = community.agent(i).bus;
            auto b = community.agent(j).bus;
            if (a > b) std::swap(a, b);
            auto it = cache.find({a, b});
            if (it == cache.end()) {
                auto zones = a == b ? std::vector<int>{network.zone_of(a)} : grid.path(a, b).zones_visited;
                it = cache.emplace(std::pair{a, b}, std::move(zones)).first;
            }
            const auto count = static_cast<int>(it->second.size());
            result.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = count;
            result.counts(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = count;
            result.visited[i * n + j] = it->second;
            result.visited[j * n + i] = it->second;
        }
    }
    return result;
}

}  // namespace p2pm
