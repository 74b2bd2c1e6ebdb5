#pragma once

#include "p2pm/distance.hpp"
#include "p2pm/grid.hpp"
#include "p2pm/market.hpp"
#include "p2pm/oracle.hpp"
#include "p2pm/policy.hpp"
#include "p2pm/powerflow.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace p2pm {

/// Trades at or below this many MW are left out of trade counts and flagged
/// in plot exports; reported trades keep full precision.
inline constexpr double kTradeThreshold = 1e-2;

/// Scenario file ("# p2pm-scenario v1"). Relative paths resolve against the
/// scenario's directory.
///
///   [network]  path, slack
///   [agents]   path, partners
///   [policy]   kind, fee, metric, zone_fees (space separated)
///   [solver]   any SolverConfig field by name
///   [output]   directory, verify
struct Scenario {
    std::filesystem::path network_path;
    std::filesystem::path agents_path;
    std::filesystem::path partners_path;
    std::optional<BusId> slack;
    PolicySpec policy;
    SolverConfig solver;
    std::filesystem::path output_dir;
    bool verify = false;
};

Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(std::istream& in, const std::string& source, const std::filesystem::path& base_dir);

/// Applies one solver setting by its scenario key; false if the key is unknown.
bool set_solver_field(SolverConfig& config, std::string_view key, double value);

/// Loaded inputs shared by every run of a scenario. Read-only, so sweeps can
/// use it from several threads.
class Case {
public:
    Case(Network network, Community community, std::optional<BusId> slack = {});

    const Network& network() const noexcept { return network_; }
    const Community& community() const noexcept { return community_; }
    const GridSensitivities& grid() const noexcept { return grid_; }
    const DcPowerFlow& flow() const noexcept { return flow_; }

private:
    Network network_;
    Community community_;
    GridSensitivities grid_;
    DcPowerFlow flow_;
};

Case load_case(const Scenario& scenario);

struct OracleComparison {
    bool bisection_available = false;
    double bisection_price = 0.0;
    double bisection_max_delta_mw = 0.0;
    double qp_objective = 0.0;
    double engine_objective = 0.0;
    double objective_rel_delta = 0.0;
    double qp_max_delta_mw = 0.0;
    double qp_stationarity = 0.0;
    bool qp_converged = false;
};

struct RunReport {
    PolicySpec policy;
    GammaMatrix gamma;
    ClearingResult clearing;
    double clearing_price = 0.0;
    Eigen::VectorXd settled_net_powers;
    FlowResult flows;
    RateSummary rates;
    ZoneExchangeReport zones;
    double tieline_flow = 0.0;
    std::vector<CongestedLine> congestion;
    double total_volume = 0.0;  ///< MW sold, reciprocal trades
    double collected = 0.0;     ///< Γ_SO, €
    int relevant_trades = 0;    ///< producer to consumer trades above kTradeThreshold
    std::optional<OracleComparison> oracle;
};

RunReport run_case(const Case& c, const PolicySpec& policy, const SolverConfig& solver, bool verify = false);

struct SweepRecord {
    double fee = 0.0;
    bool converged = false;
    int iterations = 0;
    double volume = 0.0;
    double collected = 0.0;
    double interzone = 0.0;
    double average_rate = 0.0;
    double max_rate = 0.0;
    int argmax_line = 0;  ///< line id
    int relevant_trades = 0;
    double clearing_price = 0.0;
    std::vector<double> rates;
};

SweepRecord summarize(const Case& c, double fee, const RunReport& report);

/// min, min + step, ... up to max (inclusive within rounding).
std::vector<double> fee_grid(double fee_min, double fee_max, double step);

/// One independent clearing per fee. Records come back in fee order whatever
/// the number of workers.
std::vector<SweepRecord> run_sweep(const Case& c, const PolicySpec& policy, const SolverConfig& solver,
                                   std::span<const double> fees, unsigned workers = 1);

struct FeeRecommendation {
    double fee = 0.0;
    double max_rate = 0.0;
    double average_rate = 0.0;
    double collected = 0.0;
    double volume = 0.0;
    double interzone = 0.0;
};

/// Smallest fee whose (interpolated) max line rate is <= target. Throws
/// OutOfRangeError if no grid point reaches the target.
FeeRecommendation recommend_fee_for_rate(std::span<const SweepRecord> sweep, double target_max_rate);
/// Grid fee with the largest Γ_SO.
FeeRecommendation recommend_fee_for_revenue(std::span<const SweepRecord> sweep);

// Writers. Every file starts with its "# p2pm-<kind> v1" line.

void write_trades(std::ostream& out, const Case& c, const RunReport& r);
void write_agent_summary(std::ostream& out, const Case& c, const RunReport& r);
void write_metrics(std::ostream& out, const Case& c, const RunReport& r);
void write_diagnostics(std::ostream& out, const RunReport& r);
void write_flows(std::ostream& out, const Network& network, const FlowResult& flows);
void write_congestion(std::ostream& out, const Network& network, const std::vector<CongestedLine>& congestion);
void write_trade_edges(std::ostream& out, const Case& c, const Eigen::MatrixXd& trades);
void write_gamma(std::ostream& out, const Community& community, const GammaMatrix& gamma);
void write_sweep(std::ostream& out, std::span<const SweepRecord> sweep);
void write_rate_distribution(std::ostream& out, const Network& network, std::span<const SweepRecord> sweep);
void write_distance_matrix(std::ostream& out, const Community& community, const DistanceMatrix& distances);

std::vector<SweepRecord> read_sweep(const std::filesystem::path& path);
/// Reads a trades file back into an agent by agent matrix.
Eigen::MatrixXd read_trades(const std::filesystem::path& path, const Community& community);

/// Writes trades.csv, agents_out.csv, metrics.txt, diagnostics.txt,
/// flows.csv, congestion.csv, trade_edges.csv and gamma.csv into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const Case& c, const RunReport& r);
/// Writes sweep.csv and line_rates.csv into `dir`.
void write_sweep_outputs(const std::filesystem::path& dir, const Network& network, std::span<const SweepRecord> sweep);

}  // namespace p2pm
