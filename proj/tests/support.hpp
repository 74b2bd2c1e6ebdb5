#pragma once

// Small fixtures shared by the unit tests and the acceptance binary.

#include "p2pm/grid.hpp"

#include <filesystem>
#include <random>
#include <vector>

#ifndef P2PM_DATA_DIR
#define P2PM_DATA_DIR "data"
#endif

namespace p2pm::testing {

inline std::filesystem::path data_dir() { return P2PM_DATA_DIR; }
inline std::filesystem::path bundled_network() { return data_dir() / "new_england.net"; }
inline std::filesystem::path bundled_agents() { return data_dir() / "agents.csv"; }
inline std::filesystem::path bundled_scenario() { return data_dir() / "scenarios" / "new_england.scenario"; }

inline Network two_bus(double x = 0.1, double capacity = 100.0) {
    return Network({{1, 1}, {2, 1}}, {{1, 1, 2, x, capacity}}, 100.0, 1, "two_bus");
}

/// Triangle 1-2-3 with equal reactances; zones {1,2} and {3}.
inline Network triangle(double x = 0.1, double capacity = 100.0) {
    return Network({{1, 1}, {2, 1}, {3, 2}}, {{1, 1, 2, x, capacity}, {2, 2, 3, x, capacity}, {3, 1, 3, x, capacity}},
                   100.0, 2, "triangle");
}

inline Agent producer(AgentId id, BusId bus, double a, double b, double p_min, double p_max) {
    return Agent{id, bus, Role::producer, a, b, 0.0, p_min, p_max};
}

inline Agent consumer(AgentId id, BusId bus, double a, double b, double p_min, double p_max) {
    return Agent{id, bus, Role::consumer, a, b, 0.0, p_min, p_max};
}

/// Producer a=0.1, b=20 in [0, 500] and consumer a=0.1, b=80 in [-500, 0].
inline Community two_agents() {
    return Community({producer(1, 1, 0.1, 20.0, 0.0, 500.0), consumer(2, 2, 0.1, 80.0, -500.0, 0.0)});
}

/// 2 to 6 agents with a in [0.05, 0.1], b in [15, 85] and bounds that admit a
/// balanced dispatch. At least one producer and one consumer.
inline Community random_community(std::mt19937_64& rng, int id_offset = 0) {
    std::uniform_int_distribution<int> size(2, 6);
    std::uniform_real_distribution<double> a(0.05, 0.1);
    std::uniform_real_distribution<double> b(15.0, 85.0);
    std::uniform_real_distribution<double> cap(50.0, 500.0);
    std::uniform_real_distribution<double> frac(0.0, 0.3);
    while (true) {
        const int n = size(rng);
        const int producers = std::uniform_int_distribution<int>(1, n - 1)(rng);
        std::vector<Agent> agents;
        double low = 0.0;
        double high = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = cap(rng);
            const double f = frac(rng);
            Agent ag = i < producers ? producer(id_offset + i + 1, 1, a(rng), b(rng), f * c, c)
                                     : consumer(id_offset + i + 1, 1, a(rng), b(rng), -c, -f * c);
            low += ag.p_min;
            high += ag.p_max;
            agents.push_back(ag);
        }
        if (low <= 0.0 && high >= 0.0) return Community(std::move(agents));
    }
}

}  // namespace p2pm::testing
