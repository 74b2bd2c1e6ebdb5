#include "p2pm/error.hpp"
#include "p2pm/market.hpp"
#include "p2pm/oracle.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

using namespace p2pm;
using namespace p2pm::testing;

namespace {

double sold(const Community& c, const Eigen::VectorXd& net) {
    double v = 0.0;
    for (std::size_t n = 0; n < c.size(); ++n) {
        if (c.agent(n).role == Role::producer) v += net(static_cast<Eigen::Index>(n));
    }
    return v;
}

}  // namespace

TEST_CASE("capped simplex projection") {
    std::vector<double> v{1.0, 2.0, 3.0};
    project_capped_simplex(v, 0.0, 3.0);
    CHECK(v[0] == doctest::Approx(0.0));
    CHECK(v[1] == doctest::Approx(1.0));
    CHECK(v[2] == doctest::Approx(2.0));

    v = {1.0, 2.0, 3.0};
    project_capped_simplex(v, 10.0, 20.0);
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) == doctest::Approx(10.0));
    CHECK(v[0] == doctest::Approx(1.0 + 4.0 / 3.0));

    v = {-1.0, 2.0};
    project_capped_simplex(v, 0.0, 5.0);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == doctest::Approx(2.0));
}

TEST_CASE("bisection on two agents") {
    const auto c = two_agents();
    for (const double u : {0.0, 10.0}) {
        const auto r = bisection_clearing(c, u);
        REQUIRE(r.converged);
        // a_p P + b_p + u/2 = λ = b_c - a_c P.
        const double p = (80.0 - 20.0 - u) / 0.2;
        CHECK(r.net_powers(0) == doctest::Approx(p).epsilon(1e-6));
        CHECK(r.net_powers(1) == doctest::Approx(-p).epsilon(1e-6));
        CHECK(r.clearing_price == doctest::Approx(20.0 + u / 2.0 + 0.1 * p).epsilon(1e-6));
    }
}

TEST_CASE("bisection volume falls with the wedge") {
    const auto net = load_network(bundled_network());
    const auto c = load_agents(bundled_agents(), net);
    double previous = sold(c, bisection_clearing(c, 0.0).net_powers);
    for (double u = 5.0; u <= 60.0; u += 5.0) {
        const double v = sold(c, bisection_clearing(c, u).net_powers);
        CHECK(v <= previous + 1e-6);
        previous = v;
    }
}

TEST_CASE("bisection rejects infeasible bounds and partial partnerships") {
    const Community infeasible({producer(1, 1, 0.1, 20, 100, 200), consumer(2, 1, 0.1, 80, -50, 0)});
    CHECK_THROWS_AS(bisection_clearing(infeasible, 0.0), InfeasibleError);

    std::vector<Agent> agents{producer(1, 1, 0.1, 20, 0, 10), producer(2, 1, 0.1, 20, 0, 10),
                              consumer(3, 1, 0.1, 80, -10, 0)};
    const Community partial(agents, {{1, {3}}, {3, {1}}});
    CHECK_THROWS_AS(bisection_clearing(partial, 0.0), ValidationError);
}

TEST_CASE("one producer and two identical consumers split evenly") {
    const Community c({producer(1, 1, 0.1, 20, 0, 500), consumer(2, 1, 0.1, 80, -500, 0),
                       consumer(3, 1, 0.1, 80, -500, 0)});
    // Each consumer takes q: 0.1 (2q) + 20 = 80 - 0.1 q, so q = 60 / 0.3.
    const double q = 60.0 / 0.3;
    const auto gamma = build_gamma({}, c);
    const auto qp = qp_reference(c, gamma);
    REQUIRE(qp.converged);
    CHECK(qp.trades(0, 1) == doctest::Approx(q).epsilon(1e-4));
    CHECK(qp.trades(0, 2) == doctest::Approx(q).epsilon(1e-4));

    const auto engine = clear_market(c, gamma);
    REQUIRE(engine.converged);
    CHECK(std::abs(engine.trades(0, 1) - engine.trades(0, 2)) <= 0.1);
    CHECK(std::abs(engine.net_powers(0) - 2.0 * q) <= 0.1);
}

TEST_CASE("distance policy favours the nearer consumer") {
    const Community c({producer(1, 1, 0.1, 20, 0, 500), consumer(2, 2, 0.1, 80, -500, 0),
                       consumer(3, 3, 0.1, 80, -500, 0)});
    // Make bus 3 electrically further from bus 1 than bus 2.
    const Network skewed({{1, 1}, {2, 1}, {3, 2}}, {{1, 1, 2, 0.05, 100}, {2, 2, 3, 0.2, 100}, {3, 1, 3, 0.3, 100}},
                         100.0, 2);
    const GridSensitivities grid(skewed);
    const auto gamma = build_gamma({PolicyKind::distance, 10.0}, c, grid);
    REQUIRE(gamma(0, 2) > gamma(0, 1));
    const auto qp = qp_reference(c, gamma);
    REQUIRE(qp.converged);
    const double intra = qp.trades(0, 1);
    const double inter = qp.trades(0, 2);
    CHECK(intra >= inter);
    CHECK(skewed.zone_of(1) == skewed.zone_of(2));
    CHECK(skewed.zone_of(1) != skewed.zone_of(3));
}

TEST_CASE("social welfare is convex along dispatch segments") {
    const auto net = load_network(bundled_network());
    const auto c = load_agents(bundled_agents(), net);
    const auto x = bisection_clearing(c, 0.0).net_powers;
    const auto y = bisection_clearing(c, 40.0).net_powers;
    const auto w = [&](const Eigen::VectorXd& p) {
        return social_welfare(c, std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    };
    for (const double t : {0.25, 0.5, 0.75}) {
        const Eigen::VectorXd mid = t * x + (1.0 - t) * y;
        CHECK(w(mid) <= t * w(x) + (1.0 - t) * w(y) + 1e-9);
    }
}

TEST_CASE("QP objective rises with the fee") {
    const auto net = load_network(bundled_network());
    const auto c = load_agents(bundled_agents(), net);
    const GridSensitivities grid(net);
    for (const auto kind : {PolicyKind::unique, PolicyKind::distance, PolicyKind::zonal}) {
        CAPTURE(to_string(kind));
        double previous = -INFINITY;
        for (const double u : {0.0, 2.0, 5.0, 10.0}) {
            const auto r = qp_reference(c, build_gamma({kind, u}, c, grid));
            REQUIRE(r.converged);
            CHECK(r.objective >= previous - 1e-6 * std::abs(r.objective));
            previous = r.objective;
        }
    }
}

TEST_CASE("QP agrees with bisection under a uniform wedge") {
    const auto net = load_network(bundled_network());
    const auto c = load_agents(bundled_agents(), net);
    for (const double u : {0.0, 15.0}) {
        const auto b = bisection_clearing(c, u);
        const auto q = qp_reference(c, build_gamma({u == 0.0 ? PolicyKind::free : PolicyKind::unique, u}, c));
        REQUIRE(q.converged);
        CHECK((b.net_powers - q.net_powers).cwiseAbs().maxCoeff() <= 0.05);
        CHECK(q.objective == doctest::Approx(b.objective).epsilon(1e-6));
        CHECK(q.clearing_price == doctest::Approx(b.clearing_price).epsilon(1e-4));
    }
}
