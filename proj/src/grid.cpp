#include "p2pm/grid.hpp"

#include "p2pm/error.hpp"
#include "p2pm/text_format.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <queue>
#include <set>

namespace p2pm {

namespace {

std::string bus_label(BusId id) { return "bus " + std::to_string(id); }

}  // namespace

Network::Network(std::vector<Bus> buses, std::vector<Line> lines, double base_mva, int zone_count, std::string name)
    : buses_(std::move(buses)), lines_(std::move(lines)), base_mva_(base_mva), zone_count_(zone_count),
      name_(std::move(name)) {
    if (buses_.empty()) throw ValidationError("network has no buses");
    if (!(base_mva_ > 0.0)) throw ValidationError("base_mva must be positive");
    if (zone_count_ < 1) throw ValidationError("zone_count must be at least 1");

    std::sort(buses_.begin(), buses_.end(), [](const Bus& l, const Bus& r) { return l.id < r.id; });
    std::vector<bool> zone_seen(static_cast<std::size_t>(zone_count_) + 1, false);
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const auto& bus = buses_[i];
        if (!index_.emplace(bus.id, i).second) throw ValidationError("duplicate " + bus_label(bus.id));
        if (bus.zone < 1 || bus.zone > zone_count_) {
            throw ValidationError(bus_label(bus.id) + ": zone " + std::to_string(bus.zone) + " outside 1.." +
                                  std::to_string(zone_count_));
        }
        zone_seen[static_cast<std::size_t>(bus.zone)] = true;
    }
    for (int z = 1; z <= zone_count_; ++z) {
        if (!zone_seen[static_cast<std::size_t>(z)]) {
            throw ValidationError("zone " + std::to_string(z) + " has no buses");
        }
    }

    std::set<int> line_ids;
    for (const auto& line : lines_) {
        const std::string label = "line " + std::to_string(line.id);
        if (!line_ids.insert(line.id).second) throw ValidationError("duplicate " + label);
        if (!(line.reactance > 0.0)) throw ValidationError(label + ": reactance must be positive");
        if (!(line.capacity > 0.0)) throw ValidationError(label + ": capacity must be positive");
        if (line.from_bus == line.to_bus) throw ValidationError(label + ": from_bus equals to_bus");
        if (!has_bus(line.from_bus)) throw ValidationError(label + ": unknown " + bus_label(line.from_bus));
        if (!has_bus(line.to_bus)) throw ValidationError(label + ": unknown " + bus_label(line.to_bus));
    }

    // Connectivity by breadth-first search from the first bus.
    std::vector<std::vector<std::size_t>> adjacency(buses_.size());
    for (const auto& line : lines_) {
        const auto f = bus_index(line.from_bus);
        const auto t = bus_index(line.to_bus);
        adjacency[f].push_back(t);
        adjacency[t].push_back(f);
    }
    std::vector<bool> seen(buses_.size(), false);
    std::queue<std::size_t> pending;
    pending.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!pending.empty()) {
        const auto u = pending.front();
        pending.pop();
        for (const auto v : adjacency[u]) {
            if (!seen[v]) {
                seen[v] = true;
                ++reached;
                pending.push(v);
            }
        }
    }
    if (reached != buses_.size()) {
        const auto missing = std::find(seen.begin(), seen.end(), false) - seen.begin();
        throw ValidationError("network is disconnected: " + bus_label(buses_[static_cast<std::size_t>(missing)].id) +
                              " is not reachable from " + bus_label(buses_.front().id));
    }
}

std::size_t Network::bus_index(BusId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown " + bus_label(id));
    return it->second;
}

const char* to_string(Role role) { return role == Role::producer ? "producer" : "consumer"; }

Community::Community(std::vector<Agent> agents) : agents_(std::move(agents)) {
    validate_agents();
    partners_.resize(agents_.size());
    for (std::size_t n = 0; n < agents_.size(); ++n) {
        for (std::size_t m = 0; m < agents_.size(); ++m) {
            if (agents_[n].role != agents_[m].role) partners_[n].push_back(static_cast<int>(m));
        }
    }
}

Community::Community(std::vector<Agent> agents, const std::unordered_map<AgentId, std::vector<AgentId>>& partners)
    : agents_(std::move(agents)) {
    validate_agents();
    partners_.resize(agents_.size());
    for (const auto& [id, list] : partners) {
        const auto n = index_of(id);
        for (const auto other : list) {
            const auto it = index_.find(other);
            if (it == index_.end()) {
                throw ValidationError("agent " + std::to_string(id) + ": partner " + std::to_string(other) +
                                      " does not exist");
            }
            const auto m = it->second;
            if (m == n) throw ValidationError("agent " + std::to_string(id) + " lists itself as a partner");
            if (agents_[m].role == agents_[n].role) {
                throw ValidationError("agents " + std::to_string(id) + " and " + std::to_string(other) +
                                      " share a role; same-role trades violate the sign constraints");
            }
            partners_[n].push_back(static_cast<int>(m));
        }
    }
    for (auto& list : partners_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    for (std::size_t n = 0; n < agents_.size(); ++n) {
        for (const int m : partners_[n]) {
            if (!std::binary_search(partners_[m].begin(), partners_[m].end(), static_cast<int>(n))) {
                throw ValidationError("partnership is not symmetric: " + std::to_string(agents_[n].id) + " lists " +
                                      std::to_string(agents_[m].id) + " but not the reverse");
            }
        }
    }
}

void Community::validate_agents() {
    if (agents_.empty()) throw ValidationError("community has no agents");
    bool has_producer = false;
    bool has_consumer = false;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
        const auto& a = agents_[i];
        const std::string label = "agent " + std::to_string(a.id);
        if (!index_.emplace(a.id, i).second) throw ValidationError("duplicate " + label);
        if (!(a.a > 0.0)) throw ValidationError(label + ": quadratic coefficient a must be positive");
        if (a.role == Role::producer) {
            has_producer = true;
            if (!(0.0 <= a.p_min && a.p_min <= a.p_max)) {
                throw ValidationError(label + ": producer bounds must satisfy 0 <= p_min <= p_max");
            }
        } else {
            has_consumer = true;
            if (!(a.p_min <= a.p_max && a.p_max <= 0.0)) {
                throw ValidationError(label + ": consumer bounds must satisfy p_min <= p_max <= 0");
            }
        }
    }
    if (!has_producer || !has_consumer) throw ValidationError("community needs at least one producer and one consumer");
}

bool Community::are_partners(std::size_t n, std::size_t m) const {
    const auto& list = partners_[n];
    return std::binary_search(list.begin(), list.end(), static_cast<int>(m));
}

bool Community::is_full_bipartite() const {
    for (std::size_t n = 0; n < size(); ++n) {
        for (std::size_t m = 0; m < size(); ++m) {
            if ((agents_[n].role != agents_[m].role) != are_partners(n, m)) return false;
        }
    }
    return true;
}

std::size_t Community::index_of(AgentId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown agent " + std::to_string(id));
    return it->second;
}

std::size_t Community::producer_count() const {
    return static_cast<std::size_t>(
        std::count_if(agents_.begin(), agents_.end(), [](const Agent& a) { return a.role == Role::producer; }));
}

Network parse_network(std::istream& in, const std::string& source) {
    const auto doc = parse_text_document(in, source, "network");
    const auto& root = doc.root();
    auto required = [&](std::string_view key) -> const TextEntry& {
        const auto* e = root.find(key);
        if (e == nullptr) throw ParseError(source, 1, "missing key '" + std::string(key) + "'");
        return *e;
    };
    const auto& base = required("base_mva");
    const double base_mva = parse_double(base.value, source, base.line, "base_mva");
    const auto& zones = required("zone_count");
    const int zone_count = static_cast<int>(parse_int(zones.value, source, zones.line, "zone_count"));
    std::string name;
    if (const auto* e = root.find("name")) name = e->value;

    const auto* bus_section = doc.section("buses");
    const auto* line_section = doc.section("lines");
    if (bus_section == nullptr) throw ParseError(source, 1, "missing [buses] section");
    if (line_section == nullptr) throw ParseError(source, 1, "missing [lines] section");

    std::vector<Bus> buses;
    for (const auto& row : bus_section->rows) {
        if (row.fields.size() != 2) throw ParseError(source, row.line, "bus rows are 'id zone'");
        buses.push_back(Bus{static_cast<BusId>(parse_int(row.fields[0], source, row.line, "id")),
                            static_cast<int>(parse_int(row.fields[1], source, row.line, "zone"))});
    }
    std::vector<Line> lines;
    for (const auto& row : line_section->rows) {
        if (row.fields.size() != 5) {
            throw ParseError(source, row.line, "line rows are 'id from to reactance_pu capacity_mw'");
        }
        lines.push_back(Line{static_cast<int>(parse_int(row.fields[0], source, row.line, "id")),
                             static_cast<BusId>(parse_int(row.fields[1], source, row.line, "from")),
                             static_cast<BusId>(parse_int(row.fields[2], source, row.line, "to")),
                             parse_double(row.fields[3], source, row.line, "reactance_pu"),
                             parse_double(row.fields[4], source, row.line, "capacity_mw")});
    }
    try {
        return Network(std::move(buses), std::move(lines), base_mva, zone_count, std::move(name));
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

Network load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return parse_network(in, path.string());
}

void write_network(const Network& network, std::ostream& out) {
    out << format_header("network") << '\n';
    if (!network.name().empty()) out << "name = " << network.name() << '\n';
    out << "base_mva = " << format_double(network.base_mva()) << '\n';
    out << "zone_count = " << network.zone_count() << "\n\n[buses]\n# id zone\n";
    for (const auto& bus : network.buses()) out << bus.id << ' ' << bus.zone << '\n';
    out << "\n[lines]\n# id from to reactance_pu capacity_mw\n";
    for (const auto& l : network.lines()) {
        out << l.id << ' ' << l.from_bus << ' ' << l.to_bus << ' ' << format_double(l.reactance) << ' '
            << format_double(l.capacity) << '\n';
    }
}

Community parse_agents(std::istream& in, const std::string& source, const Network& network) {
    const auto table = parse_csv(in, source, "agents");
    static constexpr std::string_view kColumns[] = {"agent_id", "bus", "role", "a", "b", "c", "p_min", "p_max"};
    if (table.header.size() != std::size(kColumns) || !std::equal(table.header.begin(), table.header.end(), kColumns)) {
        throw ParseError(source, 2, "header must be 'agent_id,bus,role,a,b,c,p_min,p_max'");
    }
    std::vector<Agent> agents;
    for (const auto& row : table.rows) {
        const auto& f = row.fields;
        Agent a;
        a.id = static_cast<AgentId>(parse_int(f[0], source, row.line, "agent_id"));
        a.bus = static_cast<BusId>(parse_int(f[1], source, row.line, "bus"));
        if (f[2] == "producer") {
            a.role = Role::producer;
        } else if (f[2] == "consumer") {
            a.role = Role::consumer;
        } else {
            throw ParseError(source, row.line, "field 'role': '" + f[2] + "' is neither producer nor consumer");
        }
        a.a = parse_double(f[3], source, row.line, "a");
        a.b = parse_double(f[4], source, row.line, "b");
        a.c = parse_double(f[5], source, row.line, "c");
        a.p_min = parse_double(f[6], source, row.line, "p_min");
        a.p_max = parse_double(f[7], source, row.line, "p_max");
        if (!network.has_bus(a.bus)) {
            throw ValidationError(source + ":" + std::to_string(row.line) + ": agent " + std::to_string(a.id) +
                                  " sits on unknown bus " + std::to_string(a.bus));
        }
        agents.push_back(a);
    }
    try {
        return Community(std::move(agents));
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

Community load_agents(const std::filesystem::path& path, const Network& network,
                      const std::filesystem::path& partners_path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    auto community = parse_agents(in, path.string(), network);
    if (partners_path.empty()) return community;
    return Community(community.agents(), load_partners(partners_path));
}

void write_agents(const Community& community, std::ostream& out) {
    out << format_header("agents") << "\nagent_id,bus,role,a,b,c,p_min,p_max\n";
    for (const auto& a : community.agents()) {
        out << a.id << ',' << a.bus << ',' << to_string(a.role) << ',' << format_double(a.a) << ','
            << format_double(a.b) << ',' << format_double(a.c) << ',' << format_double(a.p_min) << ','
            << format_double(a.p_max) << '\n';
    }
}

std::unordered_map<AgentId, std::vector<AgentId>> load_partners(const std::filesystem::path& path) {
    const auto table = read_csv(path, "partners");
    const auto from = table.column("agent_id");
    const auto to = table.column("partner_id");
    std::unordered_map<AgentId, std::vector<AgentId>> partners;
    for (const auto& row : table.rows) {
        const auto n = static_cast<AgentId>(parse_int(row.fields[from], table.source, row.line, "agent_id"));
        const auto m = static_cast<AgentId>(parse_int(row.fields[to], table.source, row.line, "partner_id"));
        partners[n].push_back(m);
        partners[m].push_back(n);
    }
    return partners;
}

Eigen::MatrixXd susceptance_matrix(const Network& network) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    for (const auto& line : network.lines()) {
        const auto i = static_cast<Eigen::Index>(network.bus_index(line.from_bus));
        const auto j = static_cast<Eigen::Index>(network.bus_index(line.to_bus));
        const double y = 1.0 / line.reactance;
        b(i, i) += y;
        b(j, j) += y;
        b(i, j) -= y;
        b(j, i) -= y;
    }
    return b;
}

Eigen::VectorXd net_injections(const Network& network, const Community& community, std::span<const double> net_powers) {
    if (net_powers.size() != community.size()) {
        throw ValidationError("net_injections: expected " + std::to_string(community.size()) + " net powers, got " +
                              std::to_string(net_powers.size()));
    }
    Eigen::VectorXd injections = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(network.bus_count()));
    for (std::size_t n = 0; n < community.size(); ++n) {
        injections(static_cast<Eigen::Index>(network.bus_index(community.agent(n).bus))) += net_powers[n];
    }
    return injections;
}

}  // namespace p2pm
