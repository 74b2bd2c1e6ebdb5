#include "p2pm/experiment.hpp"

#include "p2pm/error.hpp"
#include "p2pm/text_format.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

namespace p2pm {

namespace fs = std::filesystem;

namespace {

using Eigen::Index;

std::string fmt(double v) { return format_double(v); }
const char* fmt(bool v) { return v ? "true" : "false"; }

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

fs::path resolve(const fs::path& base, const std::string& value) {
    const fs::path p(value);
    return p.is_absolute() ? p : base / p;
}

struct SolverField {
    const char* key;
    double SolverConfig::*member;
};

constexpr SolverField kSolverFields[] = {
    {"alpha0", &SolverConfig::alpha0},       {"beta0", &SolverConfig::beta0},
    {"alpha_decay", &SolverConfig::alpha_decay}, {"beta_decay", &SolverConfig::beta_decay},
    {"rho", &SolverConfig::rho},             {"tau", &SolverConfig::tau},
    {"delta", &SolverConfig::delta},         {"eps_price", &SolverConfig::eps_price},
    {"eps_primal", &SolverConfig::eps_primal},
};

double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

bool set_solver_field(SolverConfig& config, std::string_view key, double value) {
    for (const auto& f : kSolverFields) {
        if (key == f.key) {
            config.*(f.member) = value;
            return true;
        }
    }
    if (key == "max_iterations") {
        config.max_iterations = static_cast<int>(value);
        return true;
    }
    if (key == "threads") {
        config.threads = static_cast<unsigned>(std::max(1.0, value));
        return true;
    }
    return false;
}

Scenario parse_scenario(std::istream& in, const std::string& source, const fs::path& base_dir) {
    const auto doc = parse_text_document(in, source, "scenario");
    Scenario s;
    auto section = [&](std::string_view name) -> const TextSection& {
        const auto* sec = doc.section(name);
        if (sec == nullptr) throw ParseError(source, 1, "missing [" + std::string(name) + "] section");
        return *sec;
    };
    auto require = [&](const TextSection& sec, std::string_view key) -> const TextEntry& {
        const auto* e = sec.find(key);
        if (e == nullptr) {
            throw ParseError(source, sec.line, "[" + sec.name + "] needs '" + std::string(key) + "'");
        }
        return *e;
    };

    const auto& network = section("network");
    s.network_path = resolve(base_dir, require(network, "path").value);
    if (const auto* e = network.find("slack")) s.slack = static_cast<BusId>(parse_int(e->value, source, e->line, "slack"));

    const auto& agents = section("agents");
    s.agents_path = resolve(base_dir, require(agents, "path").value);
    if (const auto* e = agents.find("partners")) s.partners_path = resolve(base_dir, e->value);

    if (const auto* policy = doc.section("policy")) {
        for (const auto& e : policy->entries) {
            if (e.key == "kind") {
                s.policy.kind = parse_policy_kind(e.value);
            } else if (e.key == "fee") {
                s.policy.fee = parse_double(e.value, source, e.line, "fee");
            } else if (e.key == "metric") {
                s.policy.metric = parse_distance_metric(e.value);
            } else if (e.key == "zone_fees") {
                std::istringstream fields(e.value);
                std::string tok;
                while (fields >> tok) s.policy.zone_fees.push_back(parse_double(tok, source, e.line, "zone_fees"));
            } else {
                throw ParseError(source, e.line, "unknown [policy] key '" + e.key + "'");
            }
        }
        s.policy.validate();
    }

    if (const auto* solver = doc.section("solver")) {
        for (const auto& e : solver->entries) {
            if (!set_solver_field(s.solver, e.key, parse_double(e.value, source, e.line, e.key))) {
                throw ParseError(source, e.line, "unknown [solver] key '" + e.key + "'");
            }
        }
        s.solver.validate();
    }

    if (const auto* output = doc.section("output")) {
        for (const auto& e : output->entries) {
            if (e.key == "directory") {
                s.output_dir = resolve(base_dir, e.value);
            } else if (e.key == "verify") {
                s.verify = parse_bool(e.value, source, e.line, "verify");
            } else {
                throw ParseError(source, e.line, "unknown [output] key '" + e.key + "'");
            }
        }
    }
    return s;
}

Scenario load_scenario(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return parse_scenario(in, path.string(), path.parent_path());
}

Case::Case(Network network, Community community, std::optional<BusId> slack)
    : network_(std::move(network)), community_(std::move(community)), grid_(network_),
      flow_(network_, slack.value_or(network_.highest_bus())) {
    for (const auto& agent : community_.agents()) {
        if (!network_.has_bus(agent.bus)) {
            throw ValidationError("agent " + std::to_string(agent.id) + " sits on unknown bus " +
                                  std::to_string(agent.bus));
        }
    }
}

Case load_case(const Scenario& scenario) {
    auto network = load_network(scenario.network_path);
    auto community = load_agents(scenario.agents_path, network, scenario.partners_path);
    if (scenario.slack && !network.has_bus(*scenario.slack)) {
        throw ValidationError("slack bus " + std::to_string(*scenario.slack) + " is not in the network");
    }
    return Case(std::move(network), std::move(community), scenario.slack);
}

RunReport run_case(const Case& c, const PolicySpec& policy, const SolverConfig& solver, bool verify) {
    const auto& community = c.community();
    RunReport r;
    r.policy = policy;
    r.gamma = build_gamma(policy, community, c.grid());
    r.clearing = clear_market(community, r.gamma, solver);
    r.clearing_price = clearing_price(r.clearing, community, kTradeThreshold);
    r.settled_net_powers = settled_net_powers(community, r.clearing.trades);
    r.flows = c.flow().solve(net_injections(c.network(), community,
                                            {r.settled_net_powers.data(), community.size()}));
    r.rates = line_rates(r.flows);
    r.zones = interzone_exchange(community, r.clearing.trades, c.network());
    r.tieline_flow = tieline_flow_total(c.network(), r.flows);
    r.congestion = congestion_report(r.flows, c.network());
    r.collected = total_collected(community, r.clearing.trades, r.gamma);
    for (std::size_t n = 0; n < community.size(); ++n) {
        if (community.agent(n).role != Role::producer) continue;
        for (const int m : community.partners(n)) {
            const auto i = static_cast<Index>(n);
            const double s = (r.clearing.trades(i, m) - r.clearing.trades(m, i)) / 2.0;
            r.total_volume += s;
            if (s > kTradeThreshold) ++r.relevant_trades;
        }
    }

    if (verify) {
        OracleComparison cmp;
        const bool uniform = policy.kind == PolicyKind::free || policy.kind == PolicyKind::unique;
        if (uniform && community.is_full_bipartite()) {
            const auto b = bisection_clearing(community, policy.kind == PolicyKind::free ? 0.0 : policy.fee);
            cmp.bisection_available = true;
            cmp.bisection_price = b.clearing_price;
            cmp.bisection_max_delta_mw = (b.net_powers - r.clearing.net_powers).cwiseAbs().maxCoeff();
        }
        const auto q = qp_reference(community, r.gamma);
        cmp.qp_objective = q.objective;
        // Evaluated on the reciprocal trades, which balance exactly; the raw
        // iterate may be off by up to N eps_primal in total.
        cmp.engine_objective = market_objective(community, r.gamma, coordinator_update(r.clearing.trades));
        cmp.objective_rel_delta =
            std::abs(cmp.engine_objective - cmp.qp_objective) / std::max(1.0, std::abs(cmp.qp_objective));
        cmp.qp_max_delta_mw = (q.net_powers - r.clearing.net_powers).cwiseAbs().maxCoeff();
        cmp.qp_stationarity = q.stationarity;
        cmp.qp_converged = q.converged;
        r.oracle = cmp;
    }
    return r;
}

SweepRecord summarize(const Case& c, double fee, const RunReport& report) {
    SweepRecord rec;
    rec.fee = fee;
    rec.converged = report.clearing.converged;
    rec.iterations = report.clearing.iterations;
    rec.volume = report.total_volume;
    rec.collected = report.collected;
    rec.interzone = report.zones.total;
    rec.average_rate = report.rates.average;
    rec.max_rate = report.rates.maximum;
    rec.argmax_line = c.network().lines().at(report.rates.argmax).id;
    rec.relevant_trades = report.relevant_trades;
    rec.clearing_price = report.clearing_price;
    rec.rates = report.rates.rates;
    return rec;
}

std::vector<double> fee_grid(double fee_min, double fee_max, double step) {
    if (!std::isfinite(fee_min) || !std::isfinite(fee_max) || fee_min < 0.0 || fee_min > fee_max) {
        throw ValidationError("fee range must satisfy 0 <= fee_min <= fee_max");
    }
    if (!(step > 0.0)) throw ValidationError("fee step must be positive");
    std::vector<double> fees;
    for (long i = 0;; ++i) {
        const double fee = fee_min + static_cast<double>(i) * step;
        if (fee > fee_max + 1e-9 * step) break;
        fees.push_back(std::min(fee, fee_max));
    }
    return fees;
}

std::vector<SweepRecord> run_sweep(const Case& c, const PolicySpec& policy, const SolverConfig& solver,
                                   std::span<const double> fees, unsigned workers) {
    for (std::size_t i = 1; i < fees.size(); ++i) {
        if (!(fees[i] > fees[i - 1])) throw ValidationError("sweep fees must be strictly increasing");
    }
    std::vector<SweepRecord> records(fees.size());
    std::vector<std::exception_ptr> errors(fees.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < fees.size(); i = next++) {
            try {
                PolicySpec p = policy;
                p.fee = fees[i];
                records[i] = summarize(c, fees[i], run_case(c, p, solver));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(std::max<std::size_t>(1, fees.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return records;
}

FeeRecommendation recommend_fee_for_rate(std::span<const SweepRecord> sweep, double target_max_rate) {
    if (sweep.empty()) throw ValidationError("empty sweep");
    auto at = [](const SweepRecord& r) {
        return FeeRecommendation{r.fee, r.max_rate, r.average_rate, r.collected, r.volume, r.interzone};
    };
    if (sweep.front().max_rate <= target_max_rate) return at(sweep.front());
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        const auto& a = sweep[i - 1];
        const auto& b = sweep[i];
        if (b.max_rate > target_max_rate) continue;
        const double t = (a.max_rate - target_max_rate) / (a.max_rate - b.max_rate);
        return {lerp(a.fee, b.fee, t),           target_max_rate, lerp(a.average_rate, b.average_rate, t),
                lerp(a.collected, b.collected, t), lerp(a.volume, b.volume, t), lerp(a.interzone, b.interzone, t)};
    }
    double low = sweep.front().max_rate;
    double high = low;
    for (const auto& r : sweep) {
        low = std::min(low, r.max_rate);
        high = std::max(high, r.max_rate);
    }
    throw OutOfRangeError("target max line rate " + fmt(target_max_rate) + " is not reached by the sweep", low, high);
}

FeeRecommendation recommend_fee_for_revenue(std::span<const SweepRecord> sweep) {
    if (sweep.empty()) throw ValidationError("empty sweep");
    const auto best = std::max_element(sweep.begin(), sweep.end(),
                                       [](const auto& a, const auto& b) { return a.collected < b.collected; });
    return {best->fee, best->max_rate, best->average_rate, best->collected, best->volume, best->interzone};
}

void write_trades(std::ostream& out, const Case& c, const RunReport& r) {
    const auto& community = c.community();
    out << format_header("trades") << "\nagent_id,partner_id,p_nm,y_nm,gamma_nm,perceived_price\n";
    for (std::size_t n = 0; n < community.size(); ++n) {
        const auto i = static_cast<Index>(n);
        for (const int m : community.partners(n)) {
            const double y = r.clearing.prices(i, m);
            const double g = r.gamma.values(i, m);
            out << community.agent(n).id << ',' << community.agent(static_cast<std::size_t>(m)).id << ','
                << fmt(r.clearing.trades(i, m)) << ',' << fmt(y) << ',' << fmt(g) << ',' << fmt(perceived_price(y, g))
                << '\n';
        }
    }
}

void write_agent_summary(std::ostream& out, const Case& c, const RunReport& r) {
    const auto& community = c.community();
    out << format_header("agent-results")
        << "\nagent_id,bus,role,net_power,settled_net_power,mu_hi,mu_lo,total_money,operator_share\n";
    for (std::size_t n = 0; n < community.size(); ++n) {
        const auto i = static_cast<Index>(n);
        const auto& agent = community.agent(n);
        std::vector<double> trades;
        std::vector<double> prices;
        std::vector<double> gamma;
        for (const int m : community.partners(n)) {
            trades.push_back(r.clearing.trades(i, m));
            prices.push_back(r.clearing.prices(i, m));
            gamma.push_back(r.gamma.values(i, m));
        }
        const auto pay = agent_payment(trades, prices, gamma);
        out << agent.id << ',' << agent.bus << ',' << to_string(agent.role) << ',' << fmt(r.clearing.net_powers(i))
            << ',' << fmt(r.settled_net_powers(i)) << ',' << fmt(r.clearing.mu_hi(i)) << ','
            << fmt(r.clearing.mu_lo(i)) << ',' << fmt(pay.total_money) << ',' << fmt(pay.operator_share) << '\n';
    }
}

void write_metrics(std::ostream& out, const Case& c, const RunReport& r) {
    const auto& net = c.network();
    const auto& last = r.clearing.history.back();
    out << format_header("metrics") << '\n';
    out << "\n[clearing]\n";
    out << "policy = " << to_string(r.policy.kind) << '\n';
    out << "fee = " << fmt(r.policy.fee) << '\n';
    if (r.policy.kind == PolicyKind::distance) out << "metric = " << to_string(r.policy.metric) << '\n';
    out << "converged = " << fmt(r.clearing.converged) << '\n';
    out << "iterations = " << r.clearing.iterations << '\n';
    out << "clearing_price = " << fmt(r.clearing_price) << '\n';
    out << "price_residual = " << fmt(last.price) << '\n';
    out << "primal_residual = " << fmt(last.primal) << '\n';
    out << "kkt_residual = " << fmt(r.clearing.kkt_residual) << '\n';
    out << "balance_mw = " << fmt(r.clearing.net_powers.sum()) << '\n';
    out << "total_volume_mw = " << fmt(r.total_volume) << '\n';
    out << "collected_eur = " << fmt(r.collected) << '\n';
    out << "relevant_trades = " << r.relevant_trades << '\n';

    const auto& argmax = net.lines().at(r.rates.argmax);
    out << "\n[grid]\n";
    out << "slack = " << r.flows.slack << '\n';
    out << "average_rate = " << fmt(r.rates.average) << '\n';
    out << "max_rate = " << fmt(r.rates.maximum) << '\n';
    out << "max_rate_line = " << argmax.id << '\n';
    out << "max_rate_from = " << argmax.from_bus << '\n';
    out << "max_rate_to = " << argmax.to_bus << '\n';
    out << "congested_lines = " << r.congestion.size() << '\n';
    out << "tieline_flow_mw = " << fmt(r.tieline_flow) << '\n';

    out << "\n[zones]\n# |net reciprocal trade volume| per unordered zone pair, MW\n";
    out << "interzone_total_mw = " << fmt(r.zones.total) << '\n';
    for (const auto& p : r.zones.pairs) out << p.zone_a << '_' << p.zone_b << " = " << fmt(p.mw) << '\n';

    if (r.oracle) {
        const auto& o = *r.oracle;
        out << "\n[oracle]\n";
        if (o.bisection_available) {
            out << "bisection_price = " << fmt(o.bisection_price) << '\n';
            out << "bisection_price_delta = " << fmt(r.clearing_price - o.bisection_price) << '\n';
            out << "bisection_max_delta_mw = " << fmt(o.bisection_max_delta_mw) << '\n';
        }
        out << "qp_converged = " << fmt(o.qp_converged) << '\n';
        out << "qp_stationarity = " << fmt(o.qp_stationarity) << '\n';
        out << "qp_objective = " << fmt(o.qp_objective) << '\n';
        out << "engine_objective = " << fmt(o.engine_objective) << '\n';
        out << "objective_rel_delta = " << fmt(o.objective_rel_delta) << '\n';
        out << "qp_max_delta_mw = " << fmt(o.qp_max_delta_mw) << '\n';
    }
}

void write_diagnostics(std::ostream& out, const RunReport& r) {
    out << format_header("diagnostics") << '\n';
    out << "iterations = " << r.clearing.iterations << '\n';
    out << "converged = " << fmt(r.clearing.converged) << '\n';
    out << "kkt_residual = " << fmt(r.clearing.kkt_residual) << '\n';
    out << "\n[residuals]\n# k price primal stationarity bound\n";
    for (std::size_t k = 0; k < r.clearing.history.size(); ++k) {
        const auto& h = r.clearing.history[k];
        out << k + 1 << ' ' << fmt(h.price) << ' ' << fmt(h.primal) << ' ' << fmt(h.stationarity) << ' ' << fmt(h.bound) << '\n';
    }
}

void write_flows(std::ostream& out, const Network& network, const FlowResult& flows) {
    out << format_header("flows") << "\n# slack bus " << flows.slack << "\nline_id,from_bus,to_bus,flow_mw,capacity_mw,rate\n";
    for (std::size_t l = 0; l < network.line_count(); ++l) {
        const auto& line = network.lines()[l];
        out << line.id << ',' << line.from_bus << ',' << line.to_bus << ',' << fmt(flows.flows[l]) << ','
            << fmt(line.capacity) << ',' << fmt(flows.rates[l]) << '\n';
    }
}

void write_congestion(std::ostream& out, const Network& network, const std::vector<CongestedLine>& congestion) {
    out << format_header("congestion") << "\nline_id,from_bus,to_bus,rate\n";
    for (const auto& c : congestion) {
        const auto& line = network.lines()[c.line];
        out << line.id << ',' << line.from_bus << ',' << line.to_bus << ',' << fmt(c.rate) << '\n';
    }
}

void write_trade_edges(std::ostream& out, const Case& c, const Eigen::MatrixXd& trades) {
    const auto& community = c.community();
    out << format_header("trade-edges") << "\n# producer to consumer, reciprocal MW; threshold "
        << fmt(kTradeThreshold) << " MW\nproducer_id,consumer_id,mw,interzone,above_threshold\n";
    for (std::size_t n = 0; n < community.size(); ++n) {
        if (community.agent(n).role != Role::producer) continue;
        const auto i = static_cast<Index>(n);
        const int zn = c.network().zone_of(community.agent(n).bus);
        for (const int m : community.partners(n)) {
            const auto& partner = community.agent(static_cast<std::size_t>(m));
            const double mw = (trades(i, m) - trades(m, i)) / 2.0;
            const bool inter = c.network().zone_of(partner.bus) != zn;
            out << community.agent(n).id << ',' << partner.id << ',' << fmt(mw) << ',' << (inter ? 1 : 0) << ','
                << (mw > kTradeThreshold ? 1 : 0) << '\n';
        }
    }
}

void write_gamma(std::ostream& out, const Community& community, const GammaMatrix& gamma) {
    out << format_header("gamma") << "\nagent_id,partner_id,gamma_nm\n";
    for (std::size_t n = 0; n < community.size(); ++n) {
        for (const int m : community.partners(n)) {
            out << community.agent(n).id << ',' << community.agent(static_cast<std::size_t>(m)).id << ','
                << fmt(gamma.values(static_cast<Index>(n), m)) << '\n';
        }
    }
}

void write_sweep(std::ostream& out, std::span<const SweepRecord> sweep) {
    out << format_header("sweep")
        << "\nfee,converged,iterations,volume_mw,collected_eur,interzone_mw,average_rate,max_rate,argmax_line,"
           "relevant_trades,clearing_price\n";
    for (const auto& r : sweep) {
        out << fmt(r.fee) << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ',' << fmt(r.volume) << ','
            << fmt(r.collected) << ',' << fmt(r.interzone) << ',' << fmt(r.average_rate) << ',' << fmt(r.max_rate)
            << ',' << r.argmax_line << ',' << r.relevant_trades << ',' << fmt(r.clearing_price) << '\n';
    }
}

void write_rate_distribution(std::ostream& out, const Network& network, std::span<const SweepRecord> sweep) {
    out << format_header("line-rates") << "\nfee,line_id,from_bus,to_bus,rate\n";
    for (const auto& r : sweep) {
        for (std::size_t l = 0; l < r.rates.size() && l < network.line_count(); ++l) {
            const auto& line = network.lines()[l];
            out << fmt(r.fee) << ',' << line.id << ',' << line.from_bus << ',' << line.to_bus << ',' << fmt(r.rates[l])
                << '\n';
        }
    }
}

void write_distance_matrix(std::ostream& out, const Community& community, const DistanceMatrix& distances) {
    out << format_header("distances") << "\n# metric " << to_string(distances.metric) << "\nagent_id";
    for (const auto& a : community.agents()) out << ',' << a.id;
    out << '\n';
    for (std::size_t n = 0; n < community.size(); ++n) {
        out << community.agent(n).id;
        for (std::size_t m = 0; m < community.size(); ++m) out << ',' << fmt(distances(n, m));
        out << '\n';
    }
}

std::vector<SweepRecord> read_sweep(const fs::path& path) {
    const auto table = read_csv(path, "sweep");
    const auto& src = table.source;
    const auto c_fee = table.column("fee");
    const auto c_conv = table.column("converged");
    const auto c_it = table.column("iterations");
    const auto c_vol = table.column("volume_mw");
    const auto c_col = table.column("collected_eur");
    const auto c_iz = table.column("interzone_mw");
    const auto c_avg = table.column("average_rate");
    const auto c_max = table.column("max_rate");
    const auto c_arg = table.column("argmax_line");
    const auto c_rel = table.column("relevant_trades");
    const auto c_price = table.column("clearing_price");
    std::vector<SweepRecord> out;
    for (const auto& row : table.rows) {
        const auto& f = row.fields;
        SweepRecord r;
        r.fee = parse_double(f[c_fee], src, row.line, "fee");
        r.converged = parse_bool(f[c_conv], src, row.line, "converged");
        r.iterations = static_cast<int>(parse_int(f[c_it], src, row.line, "iterations"));
        r.volume = parse_double(f[c_vol], src, row.line, "volume_mw");
        r.collected = parse_double(f[c_col], src, row.line, "collected_eur");
        r.interzone = parse_double(f[c_iz], src, row.line, "interzone_mw");
        r.average_rate = parse_double(f[c_avg], src, row.line, "average_rate");
        r.max_rate = parse_double(f[c_max], src, row.line, "max_rate");
        r.argmax_line = static_cast<int>(parse_int(f[c_arg], src, row.line, "argmax_line"));
        r.relevant_trades = static_cast<int>(parse_int(f[c_rel], src, row.line, "relevant_trades"));
        r.clearing_price = f[c_price] == "nan" ? std::nan("") : parse_double(f[c_price], src, row.line, "clearing_price");
        if (!out.empty() && !(r.fee > out.back().fee)) {
            throw ParseError(src, row.line, "fees must be strictly increasing");
        }
        out.push_back(r);
    }
    return out;
}

Eigen::MatrixXd read_trades(const fs::path& path, const Community& community) {
    const auto table = read_csv(path, "trades");
    const auto c_n = table.column("agent_id");
    const auto c_m = table.column("partner_id");
    const auto c_p = table.column("p_nm");
    const auto n = static_cast<Index>(community.size());
    Eigen::MatrixXd trades = Eigen::MatrixXd::Zero(n, n);
    for (const auto& row : table.rows) {
        const auto id_n = static_cast<AgentId>(parse_int(row.fields[c_n], table.source, row.line, "agent_id"));
        const auto id_m = static_cast<AgentId>(parse_int(row.fields[c_m], table.source, row.line, "partner_id"));
        std::size_t i = 0;
        std::size_t j = 0;
        try {
            i = community.index_of(id_n);
            j = community.index_of(id_m);
        } catch (const ValidationError& e) {
            throw ParseError(table.source, row.line, e.what());
        }
        if (!community.are_partners(i, j)) {
            throw ParseError(table.source, row.line,
                             "agents " + std::to_string(id_n) + " and " + std::to_string(id_m) + " are not partners");
        }
        trades(static_cast<Index>(i), static_cast<Index>(j)) =
            parse_double(row.fields[c_p], table.source, row.line, "p_nm");
    }
    return trades;
}

void write_run_outputs(const fs::path& dir, const Case& c, const RunReport& r) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    {
        auto out = open_output(dir / "trades.csv");
        write_trades(out, c, r);
    }
    {
        auto out = open_output(dir / "agents_out.csv");
        write_agent_summary(out, c, r);
    }
    {
        auto out = open_output(dir / "metrics.txt");
        write_metrics(out, c, r);
    }
    {
        auto out = open_output(dir / "diagnostics.txt");
        write_diagnostics(out, r);
    }
    {
        auto out = open_output(dir / "flows.csv");
        write_flows(out, c.network(), r.flows);
    }
    {
        auto out = open_output(dir / "congestion.csv");
        write_congestion(out, c.network(), r.congestion);
    }
    {
        auto out = open_output(dir / "trade_edges.csv");
        write_trade_edges(out, c, r.clearing.trades);
    }
    {
        auto out = open_output(dir / "gamma.csv");
        write_gamma(out, c.community(), r.gamma);
    }
}

void write_sweep_outputs(const fs::path& dir, const Network& network, std::span<const SweepRecord> sweep) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    {
        auto out = open_output(dir / "sweep.csv");
        write_sweep(out, sweep);
    }
    {
        auto out = open_output(dir / "line_rates.csv");
        write_rate_distribution(out, network, sweep);
    }
}

}  // namespace p2pm
