#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace p2pm {

using BusId = int;
using AgentId = int;

struct Bus {
    BusId id = 0;
    int zone = 0;

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct Line {
    int id = 0;
    BusId from_bus = 0;
    BusId to_bus = 0;
    double reactance = 0.0;  ///< per unit on the network base
    double capacity = 0.0;   ///< MW

    friend bool operator==(const Line&, const Line&) = default;
};

/// Validated, immutable DC network. Buses are kept sorted by id and that
/// order defines the bus index used by every matrix in the library.
class Network {
public:
    /// Throws ValidationError naming the violated invariant.
    Network(std::vector<Bus> buses, std::vector<Line> lines, double base_mva, int zone_count, std::string name = {});

    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Line>& lines() const noexcept { return lines_; }
    double base_mva() const noexcept { return base_mva_; }
    int zone_count() const noexcept { return zone_count_; }
    const std::string& name() const noexcept { return name_; }

    std::size_t bus_count() const noexcept { return buses_.size(); }
    std::size_t line_count() const noexcept { return lines_.size(); }

    bool has_bus(BusId id) const { return index_.contains(id); }
    /// Throws ValidationError for unknown ids.
    std::size_t bus_index(BusId id) const;
    int zone_of(BusId id) const { return buses_[bus_index(id)].zone; }
    BusId highest_bus() const { return buses_.back().id; }

    friend bool operator==(const Network& a, const Network& b) {
        return a.buses_ == b.buses_ && a.lines_ == b.lines_ && a.base_mva_ == b.base_mva_ &&
               a.zone_count_ == b.zone_count_ && a.name_ == b.name_;
    }

private:
    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    double base_mva_;
    int zone_count_;
    std::string name_;
    std::unordered_map<BusId, std::size_t> index_;
};

enum class Role { producer, consumer };

const char* to_string(Role role);

struct Agent {
    AgentId id = 0;
    BusId bus = 0;
    Role role = Role::consumer;
    double a = 0.0;  ///< €/MW² quadratic cost coefficient
    double b = 0.0;  ///< €/MW
    double c = 0.0;  ///< €
    double p_min = 0.0;
    double p_max = 0.0;

    double cost(double p) const { return 0.5 * a * p * p + b * p + c; }
    double marginal_cost(double p) const { return a * p + b; }
    /// Inverse of the marginal cost; a > 0 makes it well defined.
    double power_at_marginal_cost(double price) const { return (price - b) / a; }

    friend bool operator==(const Agent&, const Agent&) = default;
};

/// Market participants plus their trading partnerships. Agent order (the file
/// order) is the agent index used by trade, price and gamma matrices.
class Community {
public:
    /// Partnerships default to the full producer/consumer bipartite graph.
    explicit Community(std::vector<Agent> agents);
    /// `partners` maps agent ids to partner ids; must be symmetric.
    Community(std::vector<Agent> agents, const std::unordered_map<AgentId, std::vector<AgentId>>& partners);

    const std::vector<Agent>& agents() const noexcept { return agents_; }
    const Agent& agent(std::size_t index) const { return agents_[index]; }
    std::size_t size() const noexcept { return agents_.size(); }

    /// Partner indices of agent `index`, ascending.
    std::span<const int> partners(std::size_t index) const { return partners_[index]; }
    bool are_partners(std::size_t n, std::size_t m) const;
    bool is_full_bipartite() const;

    std::size_t index_of(AgentId id) const;
    std::size_t producer_count() const;
    std::size_t consumer_count() const { return size() - producer_count(); }

    friend bool operator==(const Community& a, const Community& b) {
        return a.agents_ == b.agents_ && a.partners_ == b.partners_;
    }

private:
    void validate_agents();

    std::vector<Agent> agents_;
    std::vector<std::vector<int>> partners_;
    std::unordered_map<AgentId, std::size_t> index_;
};

Network load_network(const std::filesystem::path& path);
Network parse_network(std::istream& in, const std::string& source);
void write_network(const Network& network, std::ostream& out);

/// Buses referenced by agents must exist in `network`. A non-empty
/// `partners_path` replaces the default bipartite partnerships.
Community load_agents(const std::filesystem::path& path, const Network& network,
                      const std::filesystem::path& partners_path = {});
Community parse_agents(std::istream& in, const std::string& source, const Network& network);
void write_agents(const Community& community, std::ostream& out);

/// Partnership file: "# p2pm-partners v1", header "agent_id,partner_id", one
/// undirected edge per row.
std::unordered_map<AgentId, std::vector<AgentId>> load_partners(const std::filesystem::path& path);

/// DC susceptance matrix in per unit (bus index order).
Eigen::MatrixXd susceptance_matrix(const Network& network);

/// Sum of agents' net powers per bus (MW, bus index order).
Eigen::VectorXd net_injections(const Network& network, const Community& community, std::span<const double> net_powers);

}  // namespace p2pm
