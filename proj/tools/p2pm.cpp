// p2pm: command-line front end for the peer-to-peer market engine.
//
// Exit codes: 0 success (non-convergence is flagged in the metrics, not an
// error), 1 usage error, 2 validation error, 3 I/O error.

#include "p2pm/distance.hpp"
#include "p2pm/error.hpp"
#include "p2pm/experiment.hpp"
#include "p2pm/text_format.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace p2pm;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

#ifndef P2PM_DATA_DIR
#define P2PM_DATA_DIR "data"
#endif

struct SolverFlags {
    std::optional<double> alpha0, beta0, alpha_decay, beta_decay, rho, tau, delta, eps_price, eps_primal;
    std::optional<int> max_iterations;
    std::optional<unsigned> threads;

    void attach(CLI::App* cmd) {
        cmd->add_option("--alpha0", alpha0, "price innovation gain at k=1")->group("Solver");
        cmd->add_option("--beta0", beta0, "price consensus gain at k=1")->group("Solver");
        cmd->add_option("--alpha-decay", alpha_decay, "decay exponent of alpha")->group("Solver");
        cmd->add_option("--beta-decay", beta_decay, "decay exponent of beta")->group("Solver");
        cmd->add_option("--rho", rho, "bound multiplier step")->group("Solver");
        cmd->add_option("--tau", tau, "gradient weight floor scale")->group("Solver");
        cmd->add_option("--delta", delta, "gradient weight floor decay")->group("Solver");
        cmd->add_option("--max-iterations", max_iterations)->group("Solver");
        cmd->add_option("--eps-price", eps_price, "EUR/MW")->group("Solver");
        cmd->add_option("--eps-primal", eps_primal, "MW")->group("Solver");
        cmd->add_option("--threads", threads, "worker threads per clearing")->group("Solver");
    }

    void apply(SolverConfig& c) const {
        if (alpha0) c.alpha0 = *alpha0;
        if (beta0) c.beta0 = *beta0;
        if (alpha_decay) c.alpha_decay = *alpha_decay;
        if (beta_decay) c.beta_decay = *beta_decay;
        if (rho) c.rho = *rho;
        if (tau) c.tau = *tau;
        if (delta) c.delta = *delta;
        if (eps_price) c.eps_price = *eps_price;
        if (eps_primal) c.eps_primal = *eps_primal;
        if (max_iterations) c.max_iterations = *max_iterations;
        if (threads) c.threads = *threads;
        c.validate();
    }
};

struct PolicyFlags {
    std::optional<std::string> kind;
    std::optional<double> fee;
    std::optional<double> fee_pct;
    std::optional<std::string> metric;

    void attach(CLI::App* cmd, bool with_fee) {
        cmd->add_option("--policy", kind, "free | unique | distance | zonal")->group("Policy");
        cmd->add_option("--metric", metric, "thevenin | power_transfer")->group("Policy");
        if (with_fee) {
            auto* f = cmd->add_option("--fee", fee, "network fee")->group("Policy");
            cmd->add_option("--fee-pct", fee_pct, "fee as % of the free-market price")->group("Policy")->excludes(f);
        }
    }

    void apply(PolicySpec& p) const {
        if (kind) p.kind = parse_policy_kind(*kind);
        if (metric) p.metric = parse_distance_metric(*metric);
        if (fee) p.fee = *fee;
        p.validate();
    }
};

double free_market_price(const Case& c, const SolverConfig& solver) {
    const auto report = run_case(c, PolicySpec{}, solver);
    return report.clearing_price;
}

fs::path output_dir(const std::string& flag, const Scenario& s) {
    if (!flag.empty()) return flag;
    if (!s.output_dir.empty()) return s.output_dir;
    if (const char* env = std::getenv("P2PM_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
    return "p2pm-out";
}

void print_run_summary(const RunReport& r, const Case& c, const fs::path& dir) {
    const auto& line = c.network().lines().at(r.rates.argmax);
    std::cout << "policy " << to_string(r.policy.kind) << " fee " << format_fixed(r.policy.fee, 4) << '\n'
              << "converged " << (r.clearing.converged ? "yes" : "NO") << " after " << r.clearing.iterations
              << " iterations, kkt residual " << format_double(r.clearing.kkt_residual) << '\n'
              << "clearing price " << format_fixed(r.clearing_price, 4) << " EUR/MW\n"
              << "volume " << format_fixed(r.total_volume, 2) << " MW, collected " << format_fixed(r.collected, 2)
              << " EUR, " << r.relevant_trades << " trades above " << format_double(kTradeThreshold) << " MW\n"
              << "max line rate " << format_fixed(r.rates.maximum, 4) << " on line " << line.id << " ("
              << line.from_bus << "-" << line.to_bus << "), average " << format_fixed(r.rates.average, 4) << '\n'
              << "inter-zone exchange " << format_fixed(r.zones.total, 2) << " MW\n";
    if (r.oracle) {
        const auto& o = *r.oracle;
        if (o.bisection_available) {
            std::cout << "oracle: bisection price " << format_fixed(o.bisection_price, 4) << ", max net power delta "
                      << format_double(o.bisection_max_delta_mw) << " MW\n";
        }
        std::cout << "oracle: qp objective delta " << format_double(o.objective_rel_delta) << " (relative)\n";
    }
    std::cout << "outputs in " << dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peer-to-peer electricity market clearing with grid-cost allocation"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "clear one scenario and write trades, metrics and flows");
    std::string run_scenario;
    std::string run_out;
    bool run_verify = false;
    SolverFlags run_solver;
    PolicyFlags run_policy;
    run->add_option("scenario", run_scenario, "scenario file")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--out", run_out, "output directory");
    run->add_flag("--verify", run_verify, "compare with the dispatch oracles");
    run_solver.attach(run);
    run_policy.attach(run, true);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "clear a scenario over a grid of fees");
    std::string sweep_scenario;
    std::string sweep_out;
    double fee_min = 0.0;
    double fee_max = 60.0;
    double step = 1.0;
    bool pct = false;
    unsigned workers = 1;
    SolverFlags sweep_solver;
    PolicyFlags sweep_policy;
    sweep->add_option("scenario", sweep_scenario, "scenario file")->required()->check(CLI::ExistingFile);
    sweep->add_option("-o,--out", sweep_out, "output directory");
    sweep->add_option("--fee-min", fee_min)->capture_default_str();
    sweep->add_option("--fee-max", fee_max)->capture_default_str();
    sweep->add_option("--step", step)->capture_default_str();
    sweep->add_flag("--pct", pct, "read the fee range as % of the free-market price");
    sweep->add_option("--workers", workers, "fee points cleared concurrently")->capture_default_str();
    sweep_solver.attach(sweep);
    sweep_policy.attach(sweep, false);

    // distances
    auto* dist = app.add_subcommand("distances", "electrical distance between two buses");
    BusId from = 0;
    BusId to = 0;
    std::string metric = "power_transfer";
    std::string network_path = std::string(P2PM_DATA_DIR) + "/new_england.net";
    dist->add_option("from", from)->required();
    dist->add_option("to", to)->required();
    dist->add_option("metric", metric, "thevenin | power_transfer")->capture_default_str();
    dist->add_option("--network", network_path)->capture_default_str();

    // powerflow
    auto* pf = app.add_subcommand("powerflow", "DC power flow of a trades file");
    std::string pf_scenario;
    std::string pf_trades;
    std::string pf_out;
    std::optional<BusId> pf_slack;
    pf->add_option("scenario", pf_scenario, "scenario file")->required()->check(CLI::ExistingFile);
    pf->add_option("--trades", pf_trades, "trades file from run")->required()->check(CLI::ExistingFile);
    pf->add_option("--slack", pf_slack, "slack bus (default: highest bus id)");
    pf->add_option("-o,--out", pf_out, "output directory");

    // recommend-fee
    auto* rec = app.add_subcommand("recommend-fee", "pick a fee from a sweep table");
    std::string rec_sweep;
    std::string target = "max_line_rate";
    double rate = 1.0;
    rec->add_option("sweep", rec_sweep, "sweep.csv from the sweep command")->required()->check(CLI::ExistingFile);
    rec->add_option("--target", target, "max_line_rate | revenue")->capture_default_str();
    rec->add_option("--rate", rate, "acceptable max line rate")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (run->parsed()) {
            auto s = load_scenario(run_scenario);
            run_solver.apply(s.solver);
            run_policy.apply(s.policy);
            const Case c = load_case(s);
            if (run_policy.fee_pct) s.policy.fee = *run_policy.fee_pct / 100.0 * free_market_price(c, s.solver);
            const auto report = run_case(c, s.policy, s.solver, run_verify || s.verify);
            const auto dir = output_dir(run_out, s);
            write_run_outputs(dir, c, report);
            print_run_summary(report, c, dir);
        } else if (sweep->parsed()) {
            auto s = load_scenario(sweep_scenario);
            sweep_solver.apply(s.solver);
            sweep_policy.apply(s.policy);
            const Case c = load_case(s);
            if (pct) {
                const double price = free_market_price(c, s.solver);
                fee_min *= price / 100.0;
                fee_max *= price / 100.0;
                step *= price / 100.0;
            }
            const auto fees = fee_grid(fee_min, fee_max, step);
            const auto records = run_sweep(c, s.policy, s.solver, fees, workers);
            const auto dir = output_dir(sweep_out, s);
            write_sweep_outputs(dir, c.network(), records);
            write_sweep(std::cout, records);
        } else if (dist->parsed()) {
            const auto network = load_network(network_path);
            const auto m = parse_distance_metric(metric);
            if (m == DistanceMetric::power_transfer) {
                std::cout << format_double(power_transfer_distance(network, from, to)) << '\n';
            } else {
                const auto path = shortest_path(network, thevenin_line_weights(network), from, to);
                std::cout << format_double(path.total_weight) << "\npath";
                for (const auto b : path.nodes) std::cout << ' ' << b;
                std::cout << "\nzones_crossed " << zones_crossed(path, network) << '\n';
            }
        } else if (pf->parsed()) {
            auto s = load_scenario(pf_scenario);
            if (pf_slack) s.slack = *pf_slack;
            const Case c = load_case(s);
            const auto trades = read_trades(pf_trades, c.community());
            const auto net = settled_net_powers(c.community(), trades);
            const auto flows =
                c.flow().solve(net_injections(c.network(), c.community(), {net.data(), c.community().size()}));
            const auto congestion = congestion_report(flows, c.network());
            const auto dir = output_dir(pf_out, s);
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
            std::ofstream flows_out(dir / "flows.csv");
            std::ofstream cong_out(dir / "congestion.csv");
            if (!flows_out || !cong_out) throw IoError("cannot write into '" + dir.string() + "'");
            write_flows(flows_out, c.network(), flows);
            write_congestion(cong_out, c.network(), congestion);
            write_congestion(std::cout, c.network(), congestion);
        } else if (rec->parsed()) {
            const auto records = read_sweep(rec_sweep);
            FeeRecommendation r;
            if (target == "max_line_rate") {
                r = recommend_fee_for_rate(records, rate);
            } else if (target == "revenue") {
                r = recommend_fee_for_revenue(records);
            } else {
                std::cerr << "error: --target must be max_line_rate or revenue\n";
                return kExitUsage;
            }
            std::cout << "fee = " << format_double(r.fee) << "\nmax_rate = " << format_double(r.max_rate)
                      << "\naverage_rate = " << format_double(r.average_rate)
                      << "\ncollected_eur = " << format_double(r.collected)
                      << "\nvolume_mw = " << format_double(r.volume)
                      << "\ninterzone_mw = " << format_double(r.interzone) << '\n';
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
