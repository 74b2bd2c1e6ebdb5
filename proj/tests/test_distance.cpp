#include "p2pm/distance.hpp"
#include "p2pm/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace p2pm;
using namespace p2pm::testing;

TEST_CASE("metric names") {
    CHECK(parse_distance_metric("thevenin") == DistanceMetric::thevenin);
    CHECK(parse_distance_metric("power_transfer") == DistanceMetric::power_transfer);
    CHECK(std::string(to_string(DistanceMetric::power_transfer)) == "power_transfer");
    CHECK_THROWS_AS(parse_distance_metric("euclid"), ValidationError);
}

TEST_CASE("two-bus distances") {
    const auto net = two_bus(0.1);
    // A single line: the Thevenin impedance between its ends is its reactance
    // and all transferred power flows through it.
    const auto w = thevenin_line_weights(net);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == doctest::Approx(0.1));
    CHECK(power_transfer_distance(net, 1, 2) == doctest::Approx(1.0));
    CHECK(power_transfer_distance(net, 1, 1) == 0.0);
}

TEST_CASE("triangle PTDF") {
    const auto net = triangle(0.1);
    // 1 MW from bus 1 to bus 3: the direct path has reactance x, the detour
    // 2x, so the current divider sends 2/3 direct and 1/3 through bus 2.
    const auto ptdf = ptdf_matrix(net, 3);
    const auto i1 = static_cast<Eigen::Index>(net.bus_index(1));
    CHECK(ptdf(0, i1) == doctest::Approx(1.0 / 3.0));  // line 1-2
    CHECK(ptdf(1, i1) == doctest::Approx(1.0 / 3.0));  // line 2-3
    CHECK(ptdf(2, i1) == doctest::Approx(2.0 / 3.0));  // line 1-3
    CHECK(power_transfer_distance(net, 1, 3) == doctest::Approx(4.0 / 3.0));

    // Loop impedance: x parallel 2x = 2x/3 < x.
    const auto w = thevenin_line_weights(net);
    for (const double wl : w) CHECK(wl == doctest::Approx(2.0 * 0.1 / 3.0));
}

TEST_CASE("bundled network distances") {
    const auto net = load_network(bundled_network());
    const GridSensitivities grid(net);

    SUBCASE("PTDF distance 16 to 39") {
        CHECK(std::abs(grid.distance(DistanceMetric::power_transfer, 16, 39) - 7.3) <= 0.2);
    }

    SUBCASE("Thevenin shortest path 16 to 39") {
        const auto path = grid.path(16, 39);
        CHECK(path.nodes == std::vector<BusId>{16, 17, 18, 3, 2, 1, 39});
        CHECK(path.total_weight > 0.0);
    }

    SUBCASE("same bus distance is zero") {
        CHECK(grid.distance(DistanceMetric::thevenin, 5, 5) == 0.0);
        CHECK(grid.distance(DistanceMetric::power_transfer, 5, 5) == 0.0);
    }

    SUBCASE("PTDF distance does not depend on the slack") {
        const auto a = ptdf_matrix(net, 39);
        const auto b = ptdf_matrix(net, 1);
        for (const BusId from : {2, 16, 30}) {
            for (const BusId to : {4, 19, 39}) {
                const auto i = net.bus_index(from);
                const auto j = net.bus_index(to);
                CHECK(power_transfer_distance(a, i, j) == doctest::Approx(power_transfer_distance(b, i, j)));
            }
        }
    }

    SUBCASE("impedance pair quantities do not depend on the reference") {
        const auto z39 = bus_impedance_matrix(net, 39);
        const auto z5 = bus_impedance_matrix(net, 5);
        const auto pair = [](const Eigen::MatrixXd& z, Eigen::Index i, Eigen::Index j) {
            return z(i, i) + z(j, j) - 2.0 * z(i, j);
        };
        for (Eigen::Index i = 0; i < 39; i += 7) {
            for (Eigen::Index j = 1; j < 39; j += 5) CHECK(pair(z39, i, j) == doctest::Approx(pair(z5, i, j)));
        }
    }

    SUBCASE("loop lines have weights below their reactance") {
        const auto& w = grid.line_weights();
        // Line 16-19 sits on a loop; no line weight can exceed its reactance.
        for (std::size_t l = 0; l < net.line_count(); ++l) {
            CHECK(w[l] <= net.lines()[l].reactance + 1e-12);
        }
    }

    SUBCASE("path lengths obey the triangle inequality") {
        const std::vector<BusId> probe{1, 6, 16, 25, 33, 39};
        for (const BusId a : probe) {
            for (const BusId b : probe) {
                for (const BusId c : probe) {
                    const double ab = grid.distance(DistanceMetric::thevenin, a, b);
                    const double bc = grid.distance(DistanceMetric::thevenin, b, c);
                    const double ac = grid.distance(DistanceMetric::thevenin, a, c);
                    CHECK(ac <= ab + bc + 1e-12);
                }
            }
        }
    }

    SUBCASE("zones crossed") {
        CHECK(zones_crossed(grid.path(5, 5), net) == 1);
        const auto p = grid.path(16, 39);
        CHECK(zones_crossed(p, net) == static_cast<int>(p.zones_visited.size()));
        CHECK(zones_crossed(p, net) >= 1);
    }
}

TEST_CASE("shortest path breaks ties by node sequence") {
    // Square 1-2-4 and 1-3-4 with equal weights: both paths weigh 2.
    const Network net({{1, 1}, {2, 1}, {3, 1}, {4, 1}},
                      {{1, 1, 2, 0.1, 10}, {2, 2, 4, 0.1, 10}, {3, 1, 3, 0.1, 10}, {4, 3, 4, 0.1, 10}}, 100.0, 1);
    const std::vector<double> w{1.0, 1.0, 1.0, 1.0};
    CHECK(shortest_path(net, w, 1, 4).nodes == std::vector<BusId>{1, 2, 4});
    CHECK(shortest_path(net, w, 4, 1).nodes == std::vector<BusId>{4, 2, 1});
    CHECK(shortest_path(net, w, 1, 4).total_weight == doctest::Approx(2.0));
    CHECK_THROWS_AS(shortest_path(net, w, 1, 9), ValidationError);
}

TEST_CASE("zones visited along a path") {
    const auto net = triangle();
    const std::vector<double> w{1.0, 1.0, 5.0};
    const auto p = shortest_path(net, w, 1, 3);
    CHECK(p.nodes == std::vector<BusId>{1, 2, 3});
    CHECK(p.zones_visited == std::vector<int>{1, 2});
    CHECK(zones_crossed(p, net) == 2);
    CHECK(zones_crossed(shortest_path(net, w, 1, 2), net) == 1);
}

TEST_CASE("agent distance matrix uses bus pairs") {
    const auto net = triangle(0.1);
    const Community c({producer(1, 1, 0.1, 20, 0, 100), consumer(2, 1, 0.1, 80, -100, 0),
                       consumer(3, 3, 0.1, 80, -100, 0)});
    const auto d = distance_matrix(c, net, DistanceMetric::power_transfer);
    CHECK(d(0, 1) == 0.0);
    CHECK(d(0, 2) == doctest::Approx(4.0 / 3.0));
    CHECK(d(2, 0) == doctest::Approx(4.0 / 3.0));
    const GridSensitivities grid(net);
    const auto zones = zone_crossings(c, grid);
    CHECK(zones(0, 1) == 1);
    CHECK(zones(0, 2) == 2);
    CHECK(zones.zones(0, 2) == std::vector<int>{1, 2});
}
