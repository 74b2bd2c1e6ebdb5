#include "p2pm/error.hpp"
#include "p2pm/experiment.hpp"
#include "p2pm/text_format.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace p2pm;
using namespace p2pm::testing;

namespace {

Case small_case() {
    return Case(triangle(0.1, 80.0), Community({producer(1, 1, 0.1, 20, 0, 500), consumer(2, 2, 0.1, 80, -500, 0),
                                                consumer(3, 3, 0.08, 75, -500, 0)}));
}

SweepRecord record(double fee, double max_rate, double collected = 0.0) {
    SweepRecord r;
    r.fee = fee;
    r.max_rate = max_rate;
    r.average_rate = max_rate / 2.0;
    r.collected = collected;
    return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("p2pm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("scenario parsing") {
    std::istringstream in(
        "# p2pm-scenario v1\n"
        "[network]\npath = grid.net\nslack = 4\n"
        "[agents]\npath = /abs/agents.csv\n"
        "[policy]\nkind = zonal\nfee = 12.5\nzone_fees = 1 2 3\n"
        "[solver]\nrho = 0.2\nmax_iterations = 50\nthreads = 2\n"
        "[output]\ndirectory = out\nverify = true\n");
    const auto s = parse_scenario(in, "s.scenario", "/base");
    CHECK(s.network_path == std::filesystem::path("/base/grid.net"));
    CHECK(s.agents_path == std::filesystem::path("/abs/agents.csv"));
    CHECK(s.slack == 4);
    CHECK(s.policy.kind == PolicyKind::zonal);
    CHECK(s.policy.fee == 12.5);
    CHECK(s.policy.zone_fees == std::vector<double>{1, 2, 3});
    CHECK(s.solver.rho == 0.2);
    CHECK(s.solver.max_iterations == 50);
    CHECK(s.solver.threads == 2);
    CHECK(s.output_dir == std::filesystem::path("/base/out"));
    CHECK(s.verify);

    std::istringstream unknown("# p2pm-scenario v1\n[network]\npath = a\n[agents]\npath = b\n[solver]\nspeed = 3\n");
    CHECK_THROWS_AS(parse_scenario(unknown, "s", "/"), ParseError);
    std::istringstream missing("# p2pm-scenario v1\n[agents]\npath = b\n");
    CHECK_THROWS_AS(parse_scenario(missing, "s", "/"), ParseError);

    SolverConfig cfg;
    CHECK(set_solver_field(cfg, "tau", 3.0));
    CHECK(cfg.tau == 3.0);
    CHECK_FALSE(set_solver_field(cfg, "nope", 1.0));
}

TEST_CASE("bundled scenario loads") {
    const auto s = load_scenario(bundled_scenario());
    const auto c = load_case(s);
    CHECK(c.community().size() == 31);
    CHECK(c.flow().slack() == 39);
    CHECK(s.policy.kind == PolicyKind::free);
}

TEST_CASE("fee grid") {
    const auto g = fee_grid(0.0, 1.0, 0.25);
    CHECK(g == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    CHECK(fee_grid(0.0, 60.0, 1.0).size() == 61);
    CHECK(fee_grid(0.0, 0.3, 0.1).back() == doctest::Approx(0.3));
    CHECK(fee_grid(2.0, 2.0, 1.0) == std::vector<double>{2.0});
    CHECK_THROWS_AS(fee_grid(5.0, 1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(fee_grid(0.0, 1.0, 0.0), ValidationError);
}

TEST_CASE("fee recommendation") {
    const std::vector<SweepRecord> sweep{record(0, 1.4, 0), record(10, 1.2, 500), record(20, 0.8, 900),
                                         record(30, 0.6, 700)};
    SUBCASE("interpolates between grid points") {
        // Rate falls 0.4 over 10 €/MW between fees 10 and 20.
        const auto r = recommend_fee_for_rate(sweep, 1.0);
        CHECK(r.fee == doctest::Approx(15.0));
        CHECK(r.max_rate == doctest::Approx(1.0));
        CHECK(r.collected == doctest::Approx(700.0));
    }
    SUBCASE("first point already meets the target") {
        CHECK(recommend_fee_for_rate(sweep, 2.0).fee == 0.0);
    }
    SUBCASE("unreachable target") {
        try {
            recommend_fee_for_rate(sweep, 0.5);
            FAIL("expected OutOfRangeError");
        } catch (const OutOfRangeError& e) {
            CHECK(e.low() == doctest::Approx(0.6));
            CHECK(e.high() == doctest::Approx(1.4));
        }
    }
    SUBCASE("stricter targets need higher fees") {
        double previous = -1.0;
        for (const double target : {1.3, 1.1, 0.9, 0.7}) {
            const double fee = recommend_fee_for_rate(sweep, target).fee;
            CHECK(fee > previous);
            previous = fee;
        }
    }
    SUBCASE("revenue") {
        CHECK(recommend_fee_for_revenue(sweep).fee == 20.0);
    }
}

TEST_CASE("a sweep record equals the matching single run") {
    const auto s = load_scenario(bundled_scenario());
    const auto c = load_case(s);
    const PolicySpec policy{PolicyKind::unique, 0.0};
    const std::vector<double> fees{3.0, 9.0};
    const auto sweep = run_sweep(c, policy, s.solver, fees, 2);
    REQUIRE(sweep.size() == 2);
    for (std::size_t i = 0; i < fees.size(); ++i) {
        PolicySpec at = policy;
        at.fee = fees[i];
        const auto single = summarize(c, fees[i], run_case(c, at, s.solver));
        CHECK(sweep[i].fee == fees[i]);
        CHECK(sweep[i].iterations == single.iterations);
        CHECK(sweep[i].volume == single.volume);
        CHECK(sweep[i].collected == single.collected);
        CHECK(sweep[i].max_rate == single.max_rate);
        CHECK(sweep[i].rates == single.rates);
    }
}

TEST_CASE("run reports are consistent") {
    const auto c = small_case();
    const auto r = run_case(c, {PolicyKind::unique, 6.0}, {}, true);
    REQUIRE(r.clearing.converged);
    CHECK(r.collected == doctest::Approx(6.0 * r.total_volume).epsilon(1e-9));
    CHECK(r.settled_net_powers.sum() == doctest::Approx(0.0).epsilon(1e-9));
    REQUIRE(r.oracle.has_value());
    CHECK(r.oracle->objective_rel_delta < 1e-3);
    CHECK(r.relevant_trades == 2);
}

TEST_CASE("outputs are deterministic") {
    const auto c = small_case();
    const auto a = scratch_dir("det_a");
    const auto b = scratch_dir("det_b");
    write_run_outputs(a, c, run_case(c, {PolicyKind::zonal, 4.0}, {}));
    SolverConfig threaded;
    threaded.threads = 3;
    write_run_outputs(b, c, run_case(c, {PolicyKind::zonal, 4.0}, threaded));
    for (const char* name : {"trades.csv", "agents_out.csv", "flows.csv", "trade_edges.csv", "gamma.csv"}) {
        CAPTURE(name);
        CHECK(slurp(a / name) == slurp(b / name));
        CHECK(slurp(a / name).rfind("# p2pm-", 0) == 0);
    }
    // metrics.txt records the solver settings, so compare two serial runs.
    const auto a2 = scratch_dir("det_a2");
    write_run_outputs(a2, c, run_case(c, {PolicyKind::zonal, 4.0}, {}));
    CHECK(slurp(a / "metrics.txt") == slurp(a2 / "metrics.txt"));
    // Trades read back to the same matrix.
    const auto back = read_trades(a / "trades.csv", c.community());
    CHECK((back - run_case(c, {PolicyKind::zonal, 4.0}, {}).clearing.trades).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("trade edges flag small trades") {
    const auto c = small_case();
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 3);
    p(0, 1) = 40.0;
    p(1, 0) = -40.0;
    p(0, 2) = 0.005;
    p(2, 0) = -0.005;
    std::stringstream out;
    write_trade_edges(out, c, p);
    const auto table = parse_csv(out, "edges", "trade-edges");
    REQUIRE(table.rows.size() == 2);
    const auto flag = table.column("above_threshold");
    const auto inter = table.column("interzone");
    CHECK(table.rows[0].fields[flag] == "1");
    CHECK(table.rows[0].fields[inter] == "0");
    CHECK(table.rows[1].fields[flag] == "0");
    CHECK(table.rows[1].fields[inter] == "1");
}

TEST_CASE("sweep files round-trip") {
    const auto c = small_case();
    const auto fees = fee_grid(0.0, 8.0, 4.0);
    const auto sweep = run_sweep(c, {PolicyKind::unique, 0.0}, {}, fees, 1);
    const auto dir = scratch_dir("sweep");
    write_sweep_outputs(dir, c.network(), sweep);
    const auto back = read_sweep(dir / "sweep.csv");
    REQUIRE(back.size() == sweep.size());
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        CHECK(back[i].fee == sweep[i].fee);
        CHECK(back[i].max_rate == sweep[i].max_rate);
        CHECK(back[i].collected == sweep[i].collected);
        CHECK(back[i].argmax_line == sweep[i].argmax_line);
    }
    CHECK(std::filesystem::exists(dir / "line_rates.csv"));
}
