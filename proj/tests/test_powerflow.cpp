#include "p2pm/error.hpp"
#include "p2pm/powerflow.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace p2pm;
using namespace p2pm::testing;

namespace {

Eigen::VectorXd injections(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (const double x : values) v(i++) = x;
    return v;
}

/// Net flow leaving each bus, from the line flows alone.
Eigen::VectorXd nodal_outflow(const Network& net, const FlowResult& r) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.bus_count()));
    for (std::size_t l = 0; l < net.line_count(); ++l) {
        const auto& line = net.lines()[l];
        out(static_cast<Eigen::Index>(net.bus_index(line.from_bus))) += r.flows[l];
        out(static_cast<Eigen::Index>(net.bus_index(line.to_bus))) -= r.flows[l];
    }
    return out;
}

}  // namespace

TEST_CASE("zero injections give zero flows") {
    const auto net = triangle();
    const auto r = dc_power_flow(net, Eigen::VectorXd::Zero(3), 3);
    for (const double f : r.flows) CHECK(f == 0.0);
}

TEST_CASE("two-bus transfer") {
    const auto net = two_bus(0.1, 200.0);
    const auto r = dc_power_flow(net, injections({100.0, -100.0}), 2);
    CHECK(r.flows[0] == doctest::Approx(100.0));
    CHECK(r.rates[0] == doctest::Approx(0.5));
}

TEST_CASE("triangle splits by reactance") {
    const auto net = triangle(0.1, 50.0);
    // 90 MW from bus 1 to bus 3: two thirds direct, one third through bus 2.
    const auto r = dc_power_flow(net, injections({90.0, 0.0, -90.0}), 3);
    CHECK(r.flows[0] == doctest::Approx(30.0));
    CHECK(r.flows[1] == doctest::Approx(30.0));
    CHECK(r.flows[2] == doctest::Approx(60.0));
    const auto s = line_rates(r);
    CHECK(s.maximum == doctest::Approx(1.2));
    CHECK(s.argmax == 2);
    CHECK(s.average == doctest::Approx(0.8));
    const auto congested = congestion_report(r, net);
    REQUIRE(congested.size() == 1);
    CHECK(congested[0].line == 2);
}

TEST_CASE("bundled network flow properties") {
    const auto net = load_network(bundled_network());
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(39);
    inj(static_cast<Eigen::Index>(net.bus_index(30))) = 500.0;
    inj(static_cast<Eigen::Index>(net.bus_index(33))) = 300.0;
    inj(static_cast<Eigen::Index>(net.bus_index(16))) = -450.0;
    inj(static_cast<Eigen::Index>(net.bus_index(4))) = -350.0;
    const auto a = dc_power_flow(net, inj, 39);

    SUBCASE("nodal balance") {
        CHECK((nodal_outflow(net, a) - inj).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("slack invariance") {
        const auto b = dc_power_flow(net, inj, 1);
        for (std::size_t l = 0; l < net.line_count(); ++l) CHECK(a.flows[l] == doctest::Approx(b.flows[l]));
    }

    SUBCASE("superposition") {
        Eigen::VectorXd other = Eigen::VectorXd::Zero(39);
        other(static_cast<Eigen::Index>(net.bus_index(2))) = 120.0;
        other(static_cast<Eigen::Index>(net.bus_index(20))) = -120.0;
        const DcPowerFlow pf(net, 39);
        const auto b = pf.solve(other);
        const auto ab = pf.solve(inj + 2.0 * other);
        for (std::size_t l = 0; l < net.line_count(); ++l) {
            CHECK(ab.flows[l] == doctest::Approx(a.flows[l] + 2.0 * b.flows[l]));
        }
    }

    SUBCASE("imbalance is rejected") {
        Eigen::VectorXd bad = inj;
        bad(0) += 1.0;
        try {
            dc_power_flow(net, bad, 39);
            FAIL("expected ImbalanceError");
        } catch (const ImbalanceError& e) {
            CHECK(e.residual() == doctest::Approx(1.0));
        }
    }
}

TEST_CASE("inter-zone exchange") {
    const auto net = triangle();
    const Community c({producer(1, 1, 0.1, 20, 0, 500), consumer(2, 2, 0.1, 80, -500, 0),
                       consumer(3, 3, 0.1, 80, -500, 0)});
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 3);
    p(0, 1) = 40.0;
    p(1, 0) = -40.0;
    p(0, 2) = 50.0;
    p(2, 0) = -50.0;
    const auto report = interzone_exchange(c, p, net);
    CHECK(report.total == doctest::Approx(50.0));
    REQUIRE(report.pairs.size() == 1);
    CHECK(report.pairs[0].zone_a == 1);
    CHECK(report.pairs[0].zone_b == 2);

    // Swapping the zone labels changes nothing.
    const Network relabelled({{1, 2}, {2, 2}, {3, 1}}, net.lines(), 100.0, 2);
    CHECK(interzone_exchange(c, p, relabelled).total == doctest::Approx(50.0));

    // Settled positions balance exactly even if the raw matrix does not.
    p(1, 0) = -38.0;
    const auto settled = settled_net_powers(c, p);
    CHECK(settled.sum() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(settled(0) == doctest::Approx(89.0));
}

TEST_CASE("tie-line flow") {
    const auto net = triangle(0.1, 50.0);
    const auto r = dc_power_flow(net, injections({90.0, 0.0, -90.0}), 3);
    // Lines 2-3 and 1-3 join zone 1 to zone 2.
    CHECK(tieline_flow_total(net, r) == doctest::Approx(90.0));
}
