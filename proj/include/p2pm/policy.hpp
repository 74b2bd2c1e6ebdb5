#pragma once

#include "p2pm/distance.hpp"
#include "p2pm/grid.hpp"

#include <Eigen/Dense>

#include <span>
#include <string_view>
#include <vector>

namespace p2pm {

enum class PolicyKind { free, unique, distance, zonal };

const char* to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view text);

struct PolicySpec {
    PolicyKind kind = PolicyKind::free;
    double fee = 0.0;  ///< €/MW, or €/MW per distance unit for the distance policy
    DistanceMetric metric = DistanceMetric::power_transfer;
    /// Optional per-zone fees for the zonal policy (index 0 is zone 1). When
    /// set, a trade pays the sum of the fees of the zones its path visits
    /// instead of fee times the zone count.
    std::vector<double> zone_fees;

    /// Throws ValidationError on negative or non-finite fees.
    void validate() const;
};

/// Product-differentiation prices per ordered agent pair (€/MW). Non-partner
/// entries and the diagonal are 0.
struct GammaMatrix {
    Eigen::MatrixXd values;

    double operator()(std::size_t n, std::size_t m) const {
        return values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }
};

/// The fee is split evenly between partners: producers carry +half and
/// consumers -half. Throws MissingDependencyError if the distance policy is
/// given no distances or the zonal policy no zone crossings.
GammaMatrix build_gamma(const PolicySpec& policy, const Community& community, const DistanceMatrix* distances = nullptr,
                        const ZoneCrossings* zones = nullptr);

/// Convenience overload that derives distances and zone crossings from the grid.
GammaMatrix build_gamma(const PolicySpec& policy, const Community& community, const GridSensitivities& grid);

constexpr double perceived_price(double price, double gamma) noexcept { return price - gamma; }

struct Payment {
    double total_money = 0.0;     ///< Σ ŷ·P, € (negative when paying)
    double operator_share = 0.0;  ///< Σ γ·P, €
};

/// One agent's row of trades, prices and gamma.
Payment agent_payment(std::span<const double> trades, std::span<const double> prices, std::span<const double> gamma);

/// Γ_SO = Σ_n Σ_m γ_nm P_nm over partner pairs.
double total_collected(const Community& community, const Eigen::MatrixXd& trades, const GammaMatrix& gamma);

}  // namespace p2pm
