#pragma once

// ---------------------------------------------------------------------------
// Belief surfaces: aggregate per-time calibration estimates into smoothed
// nonnegative surfaces sigma_b(tau, m), lambda(tau, m), sJ2(tau, m) over
// time-to-resolution tau = T - t and moneyness m (logit units, m = x).
//
// Pipeline: bin_estimates() pools samples into a weighted (tau, m) grid;
// fit_surface() runs a penalized least-squares fit over a cubic
// tensor-product B-spline basis with a squared-link parameterization
// f = g^2 (nonnegativity is structural), curvature penalty alpha * ||H f||^2,
// generalized cross-validation for alpha unless fixed, and bootstrap bands.
// ---------------------------------------------------------------------------

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oddskit/bspline.hpp"
#include "oddskit/errors.hpp"

namespace oddskit {

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

struct grid_spec {
    std::size_t n_tau = 24; // tau cells
    std::size_t n_m = 15;   // moneyness cells
    // NaN bounds are inferred from the pooled samples.
    double tau_min = std::numeric_limits<double>::quiet_NaN();
    double tau_max = std::numeric_limits<double>::quiet_NaN();
    double m_min = std::numeric_limits<double>::quiet_NaN();
    double m_max = std::numeric_limits<double>::quiet_NaN();

    void validate() const;
};

// One event series' contribution to a surface layer: per-sample times,
// moneyness coordinates, estimate values, and posterior filter variances.
struct calib_series {
    std::vector<double> t;       // observation times (seconds)
    std::vector<double> m;       // moneyness per sample (filtered x)
    std::vector<double> value;   // layer estimate per sample
    std::vector<double> var_hat; // posterior filter variance per sample
    double resolution_time = 0.0; // T; every sample needs tau = T - t > 0

    void validate() const;
};

struct surface_grid {
    std::vector<double> tau_axis; // cell centers, strictly increasing
    std::vector<double> m_axis;   // cell centers, strictly increasing
    std::vector<double> values;   // row-major [i_tau * n_m() + i_m]
    std::vector<double> weights;  // same layout; >= 0, 0 marks empty cells

    std::size_t n_tau() const { return tau_axis.size(); }
    std::size_t n_m() const { return m_axis.size(); }
    double value_at(std::size_t i, std::size_t j) const { return values[i * n_m() + j]; }
    double weight_at(std::size_t i, std::size_t j) const { return weights[i * n_m() + j]; }
    std::size_t populated_cells() const;
    // Distinct populated rows/columns decide 2-D fit viability.
    std::size_t populated_tau_bins() const;
    std::size_t populated_m_bins() const;

    void validate() const;
};

// Weighted binning into (tau, m) cells. Per-cell value is the weighted mean
// of samples (weights 1/var_hat, or plain mean when variances are absent or
// zero); per-cell weight is count x mean inverse posterior variance (count
// alone when variances are absent or zero).
surface_grid bin_estimates(const std::vector<calib_series>& series, const grid_spec& spec);

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct fit_config {
    // NaN -> alpha picked by generalized cross-validation on a log grid.
    double alpha = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_basis_tau = 12;
    std::size_t n_basis_m = 9;
    double news_relax = 0.1;        // tau-curvature multiplier inside news windows
    double edge_penalty_boost = 2.0; // curvature multiplier at extreme |m|
    double edge_quantile = 0.90;     // |m| quantile where the boost starts
    std::size_t bootstrap_resamples = 200;
    std::uint64_t bootstrap_seed = 7011;
    bool compute_bands = true;
    std::size_t max_iterations = 80; // damped Gauss-Newton cap per fit

    void validate() const;
};

// One fitted nonnegative surface layer: f(tau, m) = g(tau, m)^2 with g a
// tensor-product cubic B-spline over axis-normalized coordinates.
struct surface_layer {
    bool one_d = false; // true: fallback fit in tau only (m ignored)
    bspline_basis basis_tau; // over [0, 1]
    bspline_basis basis_m;   // over [0, 1]; unused when one_d
    std::vector<double> coef; // g coefficients, row-major [i_tau_basis * n_bm + j]
    double tau_lo = 0.0, tau_hi = 0.0; // knot hull (grid axis ends)
    double m_lo = 0.0, m_hi = 0.0;
    double alpha = 0.0;          // penalty actually used
    double curvature_norm = 0.0; // ||H f||^2 of the fit (normalized coords)
    std::vector<double> tau_axis, m_axis; // grid axes (band support)
    std::vector<double> band;             // pointwise SE per grid node, row-major

    // Spline evaluation without a hull check (internal / serialization use).
    double value_at(double tau, double m) const;
    // Bilinear interpolation of the bootstrap band over the grid nodes.
    double band_at(double tau, double m) const;

    nlohmann::json to_json() const;
    static surface_layer from_json(const nlohmann::json& j);
};

// Penalized fit of one layer. Falls back to a 1-D fit in tau when fewer
// than 4x4 populated cells span the grid. news_windows are tau-intervals
// where the tau-curvature penalty is scaled by cfg.news_relax.
surface_layer fit_surface(const surface_grid& grid, const fit_config& cfg,
                          const std::vector<std::pair<double, double>>& news_windows = {});

// ---------------------------------------------------------------------------
// Assembled surface and evaluation
// ---------------------------------------------------------------------------

struct belief_surface {
    surface_layer sigma_b;
    surface_layer lambda;
    surface_layer sJ2;
    std::vector<std::pair<double, double>> news_windows;

    nlohmann::json to_json() const;
    static belief_surface from_json(const nlohmann::json& j);
};

// Fits the three layers (in parallel) from their binned grids.
belief_surface build_belief_surface(const surface_grid& sigma_b_grid,
                                    const surface_grid& lambda_grid,
                                    const surface_grid& sJ2_grid, const fit_config& cfg,
                                    const std::vector<std::pair<double, double>>& news_windows = {});

struct surface_point {
    double sigma_b = 0.0;
    double lambda = 0.0;
    double sJ2 = 0.0;
    double band_sigma_b = 0.0;
    double band_lambda = 0.0;
    double band_sJ2 = 0.0;
};

// Hull-checked evaluation of one layer / all layers. Queries outside the
// knot hull throw data_error listing the hull bounds.
double evaluate(const surface_layer& layer, double tau, double m);
surface_point evaluate(const belief_surface& surf, double tau, double m);

// Gridded CSV export over the stored axes:
// tau,m,sigma_b,lambda,sJ2,band_sigma_b,band_lambda,band_sJ2
void write_surface_csv(const belief_surface& surf, const std::string& path,
                       const std::string& manifest_id = "");

} // namespace oddskit
