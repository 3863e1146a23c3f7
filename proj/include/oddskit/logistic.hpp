#pragma once

// ---------------------------------------------------------------------------
// Logistic map between log-odds space and probability space, with the
// derivatives that show up in drift, pricing, and hedging formulas.
// All state is kept in log-odds x; probabilities are a view of it.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <cmath>

namespace oddskit {

// Hard clamp for log-odds state.  |x| = 30 corresponds to p within ~9e-14 of
// a boundary; beyond this every downstream quantity underflows anyway.
inline constexpr double kLogitClamp = 30.0;

inline double clamp_logit(double x) {
    return std::clamp(x, -kLogitClamp, kLogitClamp);
}

// S(x) = 1 / (1 + e^-x), evaluated in a branch that never overflows.
inline double sigmoid(double x) {
    x = clamp_logit(x);
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// S'(x) = p (1 - p)
inline double sigmoid_d1(double x) {
    const double p = sigmoid(x);
    return p * (1.0 - p);
}

// S''(x) = p (1 - p) (1 - 2p)
inline double sigmoid_d2(double x) {
    const double p = sigmoid(x);
    return p * (1.0 - p) * (1.0 - 2.0 * p);
}

// Inverse map; input is clamped into the open interval so the result is
// finite and respects the log-odds clamp.
inline double logit(double p) {
    const double lo = sigmoid(-kLogitClamp);
    const double hi = sigmoid(kLogitClamp);
    p = std::clamp(p, lo, hi);
    return clamp_logit(std::log(p / (1.0 - p)));
}

} // namespace oddskit
