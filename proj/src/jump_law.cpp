#include "oddskit/jump_law.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oddskit/errors.hpp"
#include "oddskit/quadrature.hpp"

namespace oddskit {

std::string to_string(jump_family f) {
    switch (f) {
    case jump_family::symmetric_gaussian: return "symmetric-gaussian";
    case jump_family::double_exponential: return "double-exponential";
    case jump_family::empirical_bins: return "empirical-bins";
    }
    return "?";
}

jump_family jump_family_from_string(const std::string& s) {
    if (s == "symmetric-gaussian" || s == "gaussian") return jump_family::symmetric_gaussian;
    if (s == "double-exponential") return jump_family::double_exponential;
    if (s == "empirical-bins") return jump_family::empirical_bins;
    throw config_error("unknown jump family: " + s);
}

void jump_law::validate() const {
    switch (family) {
    case jump_family::symmetric_gaussian:
        if (!(sd > 0.0) || !std::isfinite(sd)) throw config_error("jump sd must be positive");
        break;
    case jump_family::double_exponential:
        if (!(eta_up > 0.0) || !(eta_dn > 0.0) || !std::isfinite(eta_up) || !std::isfinite(eta_dn))
            throw config_error("jump rates must be positive");
        break;
    case jump_family::empirical_bins: {
        if (bin_edges.size() != bin_masses.size() + 1 || bin_masses.empty())
            throw config_error("empirical bins: need edges.size() == masses.size() + 1");
        if (!std::is_sorted(bin_edges.begin(), bin_edges.end()))
            throw config_error("empirical bins: edges must be increasing");
        for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i)
            if (!(bin_edges[i + 1] > bin_edges[i]))
                throw config_error("empirical bins: edges must be strictly increasing");
        double sum = 0.0;
        for (double m : bin_masses) {
            if (m < 0.0 || !std::isfinite(m)) throw config_error("empirical bins: bad mass");
            sum += m;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw config_error("empirical bins: masses must sum to 1");
        break;
    }
    }
    if (!(second_moment() >= 0.0) || !std::isfinite(second_moment()))
        throw config_error("jump law second moment must be finite and non-negative");
}

double jump_law::mean() const {
    switch (family) {
    case jump_family::symmetric_gaussian: return 0.0;
    case jump_family::double_exponential:
        // p_up/eta_up - (1-p_up)/eta_dn = 0 by construction of p_up
        return 0.0;
    case jump_family::empirical_bins: {
        double m = 0.0;
        for (std::size_t i = 0; i < bin_masses.size(); ++i)
            m += bin_masses[i] * 0.5 * (bin_edges[i] + bin_edges[i + 1]);
        return m;
    }
    }
    return 0.0;
}

double jump_law::second_moment() const {
    switch (family) {
    case jump_family::symmetric_gaussian: return sd * sd;
    case jump_family::double_exponential: {
        const double pu = p_up();
        return pu * 2.0 / (eta_up * eta_up) + (1.0 - pu) * 2.0 / (eta_dn * eta_dn);
    }
    case jump_family::empirical_bins: {
        // E[z^2] over a uniform bin [a,b] is (a^2 + ab + b^2)/3.
        double m2 = 0.0;
        for (std::size_t i = 0; i < bin_masses.size(); ++i) {
            const double a = bin_edges[i], b = bin_edges[i + 1];
            m2 += bin_masses[i] * (a * a + a * b + b * b) / 3.0;
        }
        return m2;
    }
    }
    return 0.0;
}

double jump_law::density(double z) const {
    switch (family) {
    case jump_family::symmetric_gaussian: {
        const double u = z / sd;
        return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
    }
    case jump_family::double_exponential: {
        const double pu = p_up();
        if (z >= 0.0) return pu * eta_up * std::exp(-eta_up * z);
        return (1.0 - pu) * eta_dn * std::exp(eta_dn * z);
    }
    case jump_family::empirical_bins: {
        auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), z);
        if (it == bin_edges.begin() || it == bin_edges.end()) return 0.0;
        const std::size_t i = static_cast<std::size_t>(it - bin_edges.begin()) - 1;
        return bin_masses[i] / (bin_edges[i + 1] - bin_edges[i]);
    }
    }
    return 0.0;
}

double jump_law::sample(rng_stream& rs) const {
    switch (family) {
    case jump_family::symmetric_gaussian: return sd * rs.normal();
    case jump_family::double_exponential: {
        const double u = rs.uniform();
        if (u < p_up()) return rs.exponential() / eta_up;
        return -rs.exponential() / eta_dn;
    }
    case jump_family::empirical_bins: {
        double u = rs.uniform();
        double acc = 0.0;
        std::size_t i = 0;
        for (; i < bin_masses.size(); ++i) {
            acc += bin_masses[i];
            if (u <= acc || i + 1 == bin_masses.size()) break;
        }
        const double a = bin_edges[i], b = bin_edges[i + 1];
        return a + (b - a) * rs.uniform();
    }
    }
    return 0.0;
}

double jump_law::truncated_mean(double radius) const {
    switch (family) {
    case jump_family::symmetric_gaussian:
        return 0.0; // odd integrand over a symmetric interval
    case jump_family::double_exponential: {
        // int_0^R z * eta e^{-eta z} dz = (1 - e^{-eta R}(1 + eta R)) / eta
        auto half = [](double eta, double R) {
            return (1.0 - std::exp(-eta * R) * (1.0 + eta * R)) / eta;
        };
        const double pu = p_up();
        return pu * half(eta_up, radius) - (1.0 - pu) * half(eta_dn, radius);
    }
    case jump_family::empirical_bins: {
        // Integrate z over each bin intersected with (-radius, radius);
        // density is mass/(width) within the bin.
        double acc = 0.0;
        for (std::size_t i = 0; i < bin_masses.size(); ++i) {
            const double a = std::max(bin_edges[i], -radius);
            const double b = std::min(bin_edges[i + 1], radius);
            if (b <= a) continue;
            const double dens = bin_masses[i] / (bin_edges[i + 1] - bin_edges[i]);
            acc += dens * 0.5 * (b * b - a * a);
        }
        return acc;
    }
    }
    return 0.0;
}

double jump_expectation(const jump_law& law, int nodes, std::uint64_t mc_seed,
                        const std::function<double(double)>& g) {
    switch (law.family) {
    case jump_family::symmetric_gaussian:
        return gauss_expect_normal(law.sd, nodes, g);
    case jump_family::double_exponential: {
        const quad_rule& q = gauss_laguerre(nodes);
        const double pu = law.p_up();
        double up = 0.0, dn = 0.0;
        for (std::size_t i = 0; i < q.nodes.size(); ++i) {
            up += q.weights[i] * g(q.nodes[i] / law.eta_up);
            dn += q.weights[i] * g(-q.nodes[i] / law.eta_dn);
        }
        return pu * up + (1.0 - pu) * dn;
    }
    case jump_family::empirical_bins: {
        rng_stream rs(mc_seed);
        double acc = 0.0;
        for (int i = 0; i < law.mc_draws; ++i) acc += g(law.sample(rs));
        return acc / law.mc_draws;
    }
    }
    return 0.0;
}

} // namespace oddskit
