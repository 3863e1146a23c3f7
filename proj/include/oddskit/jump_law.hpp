#pragma once

// ---------------------------------------------------------------------------
// Jump-size laws for the log-odds process.  All laws are centered (mean zero)
// except possibly the empirical-bins family, which carries whatever the
// fitted histogram says.  Expectations of smooth functionals run through
// deterministic quadrature for the parametric families and through seeded
// Monte Carlo for the histogram family.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oddskit/rng.hpp"

namespace oddskit {

enum class jump_family { symmetric_gaussian, double_exponential, empirical_bins };

std::string to_string(jump_family f);
jump_family jump_family_from_string(const std::string& s);

struct jump_law {
    jump_family family = jump_family::symmetric_gaussian;

    // symmetric_gaussian
    double sd = 0.3;

    // double_exponential: up/down rates; the mixing weight that centers the
    // law is derived, p_up = eta_up / (eta_up + eta_dn).
    double eta_up = 10.0;
    double eta_dn = 10.0;

    // empirical_bins: piecewise-uniform histogram.  edges has size()+1 of
    // masses; masses must sum to 1 within 1e-12.
    std::vector<double> bin_edges;
    std::vector<double> bin_masses;

    // Monte Carlo fallback used by expectation() for empirical bins.
    int mc_draws = 200000;

    void validate() const; // throws config_error

    double p_up() const { return eta_up / (eta_up + eta_dn); }

    double mean() const;
    double second_moment() const;

    double density(double z) const;
    double sample(rng_stream& rs) const;

    // E[z 1{|z| < radius}], closed form per family.
    double truncated_mean(double radius) const;
};

// E[g(Z)] under the law. Parametric families use Gauss–Hermite /
// Gauss–Laguerre rules with `nodes` points (per side for the exponential
// family); the histogram family uses law.mc_draws pseudo-random draws seeded
// with `mc_seed` so the result is reproducible.
double jump_expectation(const jump_law& law, int nodes, std::uint64_t mc_seed,
                        const std::function<double(double)>& g);

} // namespace oddskit
