#pragma once

// ---------------------------------------------------------------------------
// Clamped B-spline basis on a uniform knot vector, with derivatives.  Used
// by the surface builder for tensor-product penalized fits.
// ---------------------------------------------------------------------------

#include <cstddef>
#include <vector>

#include "oddskit/errors.hpp"

namespace oddskit {

class bspline_basis {
  public:
    bspline_basis() = default;

    bspline_basis(std::size_t n_basis, double lo, double hi, int degree = 3)
        : degree_(degree), n_(n_basis), lo_(lo), hi_(hi) {
        if (n_basis < static_cast<std::size_t>(degree + 1))
            throw config_error("bspline: need at least degree+1 basis functions");
        if (!(hi > lo)) throw config_error("bspline: empty domain");
        const std::size_t n_knots = n_basis + static_cast<std::size_t>(degree) + 1;
        knots_.resize(n_knots);
        const std::size_t n_seg = n_basis - static_cast<std::size_t>(degree);
        for (std::size_t i = 0; i < n_knots; ++i) {
            if (i <= static_cast<std::size_t>(degree)) {
                knots_[i] = lo;
            } else if (i >= n_basis) {
                knots_[i] = hi;
            } else {
                const double f = static_cast<double>(i - static_cast<std::size_t>(degree)) /
                                 static_cast<double>(n_seg);
                knots_[i] = lo + f * (hi - lo);
            }
        }
    }

    std::size_t size() const { return n_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }

    // Values (deriv = 0) or d-th derivatives of every basis function at x.
    // x is clamped to the domain; out is resized to size().
    void eval(double x, int deriv, std::vector<double>& out) const {
        if (x < lo_) x = lo_;
        if (x > hi_) x = hi_;
        out.assign(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) out[i] = basis(i, degree_, x, deriv);
    }

    std::vector<double> eval(double x, int deriv = 0) const {
        std::vector<double> out;
        eval(x, deriv, out);
        return out;
    }

    // Greville abscissae: coefficients equal to these reproduce f(x) = x.
    std::vector<double> greville() const {
        std::vector<double> g(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = 0.0;
            for (int j = 1; j <= degree_; ++j) s += knots_[i + static_cast<std::size_t>(j)];
            g[i] = s / degree_;
        }
        return g;
    }

  private:
    double basis(std::size_t i, int k, double x, int deriv) const {
        if (deriv > 0) {
            // d/dx B_{i,k} = k/(t_{i+k}-t_i) B_{i,k-1} - k/(t_{i+k+1}-t_{i+1}) B_{i+1,k-1}
            if (k == 0) return 0.0;
            const double d1 = knots_[i + static_cast<std::size_t>(k)] - knots_[i];
            const double d2 = knots_[i + static_cast<std::size_t>(k) + 1] - knots_[i + 1];
            double v = 0.0;
            if (d1 > 0.0) v += k / d1 * basis(i, k - 1, x, deriv - 1);
            if (d2 > 0.0) v -= k / d2 * basis(i + 1, k - 1, x, deriv - 1);
            return v;
        }
        if (k == 0) {
            // Half-open segments, closed at the right domain edge.
            const bool last = knots_[i + 1] >= hi_;
            if (last) return (x >= knots_[i] && x <= knots_[i + 1] && knots_[i] < knots_[i + 1])
                                 ? 1.0
                                 : 0.0;
            return (x >= knots_[i] && x < knots_[i + 1]) ? 1.0 : 0.0;
        }
        const double d1 = knots_[i + static_cast<std::size_t>(k)] - knots_[i];
        const double d2 = knots_[i + static_cast<std::size_t>(k) + 1] - knots_[i + 1];
        double v = 0.0;
        if (d1 > 0.0) v += (x - knots_[i]) / d1 * basis(i, k - 1, x, 0);
        if (d2 > 0.0)
            v += (knots_[i + static_cast<std::size_t>(k) + 1] - x) / d2 * basis(i + 1, k - 1, x, 0);
        return v;
    }

    int degree_ = 3;
    std::size_t n_ = 0;
    double lo_ = 0.0, hi_ = 1.0;
    std::vector<double> knots_;
};

} // namespace oddskit
