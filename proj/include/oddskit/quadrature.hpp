#pragma once

// ---------------------------------------------------------------------------
// Gaussian quadrature rules built by Golub–Welsch (eigenvalues of the Jacobi
// matrix of the orthogonal-polynomial recurrence).  Computed once per size
// and cached; fully deterministic.
// ---------------------------------------------------------------------------

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oddskit {

struct quad_rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline quad_rule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag,
                              double mu0) {
    const int n = static_cast<int>(diag.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        J(i, i) = diag(i);
        if (i + 1 < n) {
            J(i, i + 1) = offdiag(i);
            J(i + 1, i) = offdiag(i);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    quad_rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        r.weights[i] = mu0 * v0 * v0;
    }
    return r;
}

} // namespace detail

// Nodes/weights for \int f(t) e^{-t^2} dt  (physicists' Hermite).
inline const quad_rule& gauss_hermite(int n) {
    static std::map<int, quad_rule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(n - 1);
    for (int i = 1; i < n; ++i) off(i - 1) = std::sqrt(i / 2.0);
    return cache.emplace(n, detail::golub_welsch(diag, off, std::sqrt(M_PI))).first->second;
}

// Nodes/weights for \int_0^inf f(t) e^{-t} dt.
inline const quad_rule& gauss_laguerre(int n) {
    static std::map<int, quad_rule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Eigen::VectorXd diag(n);
    Eigen::VectorXd off(n - 1);
    for (int i = 0; i < n; ++i) diag(i) = 2.0 * i + 1.0;
    for (int i = 1; i < n; ++i) off(i - 1) = static_cast<double>(i);
    return cache.emplace(n, detail::golub_welsch(diag, off, 1.0)).first->second;
}

// E[g(Z)] for Z ~ N(0, sd^2) via Gauss–Hermite.
template <class F> double gauss_expect_normal(double sd, int n_nodes, F&& g) {
    const quad_rule& q = gauss_hermite(n_nodes);
    const double scale = std::sqrt(2.0) * sd;
    double acc = 0.0;
    for (std::size_t i = 0; i < q.nodes.size(); ++i) acc += q.weights[i] * g(scale * q.nodes[i]);
    return acc / std::sqrt(M_PI);
}

} // namespace oddskit
