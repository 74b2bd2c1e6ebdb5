#include "p2pm/policy.hpp"

#include "p2pm/error.hpp"

#include <cmath>

namespace p2pm {

const char* to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::free: return "free";
        case PolicyKind::unique: return "unique";
        case PolicyKind::distance: return "distance";
        case PolicyKind::zonal: return "zonal";
    }
    return "?";
}

PolicyKind parse_policy_kind(std::string_view text) {
    if (text == "free") return PolicyKind::free;
    if (text == "unique") return PolicyKind::unique;
    if (text == "distance") return PolicyKind::distance;
    if (text == "zonal") return PolicyKind::zonal;
    throw ValidationError("unknown policy '" + std::string(text) + "' (free | unique | distance | zonal)");
}

void PolicySpec::validate() const {
    if (!std::isfinite(fee) || fee < 0.0) throw ValidationError("policy fee must be a finite value >= 0");
    for (std::size_t z = 0; z < zone_fees.size(); ++z) {
        if (!std::isfinite(zone_fees[z]) || zone_fees[z] < 0.0) {
            throw ValidationError("zone fee for zone " + std::to_string(z + 1) + " must be a finite value >= 0");
        }
    }
}

GammaMatrix build_gamma(const PolicySpec& policy, const Community& community, const DistanceMatrix* distances,
                        const ZoneCrossings* zones) {
    policy.validate();
    const auto n = community.size();
    GammaMatrix gamma{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
    if (policy.kind == PolicyKind::free) return gamma;
    if (policy.kind == PolicyKind::distance && distances == nullptr) {
        throw MissingDependencyError("distance policy needs a distance matrix");
    }
    if (policy.kind == PolicyKind::zonal && zones == nullptr) {
        throw MissingDependencyError("zonal policy needs zone crossings along Thevenin shortest paths");
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double sign = community.agent(i).role == Role::producer ? 0.5 : -0.5;
        for (const int partner : community.partners(i)) {
            const auto j = static_cast<std::size_t>(partner);
            double charge = 0.0;
            switch (policy.kind) {
                case PolicyKind::free: break;
                case PolicyKind::unique: charge = policy.fee; break;
                case PolicyKind::distance: charge = policy.fee * (*distances)(i, j); break;
                case PolicyKind::zonal:
                    if (policy.zone_fees.empty()) {
                        charge = policy.fee * (*zones)(i, j);
                    } else {
                        for (const int z : zones->zones(i, j)) {
                            if (z < 1 || static_cast<std::size_t>(z) > policy.zone_fees.size()) {
                                throw ValidationError("no zone fee given for zone " + std::to_string(z));
                            }
                            charge += policy.zone_fees[static_cast<std::size_t>(z - 1)];
                        }
                    }
                    break;
            }
            gamma.values(static_cast<Eigen::Index>(i), partner) = sign * charge;
        }
    }
    return gamma;
}

GammaMatrix build_gamma(const PolicySpec& policy, const Community& community, const GridSensitivities& grid) {
    switch (policy.kind) {
        case PolicyKind::distance: {
            const auto d = distance_matrix(community, grid, policy.metric);
            return build_gamma(policy, community, &d, nullptr);
        }
        case PolicyKind::zonal: {
            const auto z = zone_crossings(community, grid);
            return build_gamma(policy, community, nullptr, &z);
        }
        default: return build_gamma(policy, community, nullptr, nullptr);
    }
}

Payment agent_payment(std::span<const double> trades, std::span<const double> prices, std::span<const double> gamma) {
    if (trades.size() != prices.size() || trades.size() != gamma.size()) {
        throw ValidationError("agent_payment: trade, price and gamma rows differ in length");
    }
    Payment p;
    for (std::size_t m = 0; m < trades.size(); ++m) {
        p.total_money += perceived_price(prices[m], gamma[m]) * trades[m];
        p.operator_share += gamma[m] * trades[m];
    }
    return p;
}

double total_collected(const Community& community, const Eigen::MatrixXd& trades, const GammaMatrix& gamma) {
    double total = 0.0;
    for (std::size_t n = 0; n < community.size(); ++n) {
        for (const int m : community.partners(n)) {
            total += gamma.values(static_cast<Eigen::Index>(n), m) * trades(static_cast<Eigen::Index>(n), m);
        }
    }
    return total;
}

}  // namespace p2pm
