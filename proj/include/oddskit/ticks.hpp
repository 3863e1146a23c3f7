#pragma once

// ---------------------------------------------------------------------------
// Raw tick handling: parse the venue CSV, build a trade-weighted canonical
// mid on a uniform grid, clamp into (0,1), and carry per-bin covariates for
// the heteroskedastic noise model (spread, inverse depth, trade rate,
// aggressor imbalance) plus a halt mask.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <string>
#include <vector>

namespace oddskit {

struct tick_record {
    std::int64_t ts_ms = 0;
    double bid = 0.0;
    double ask = 0.0;
    double trade_px = 0.0; // valid only when has_trade
    double trade_sz = 0.0;
    bool has_trade = false;
    bool f_halt = false;
    bool f_crossed = false;
    bool f_locked = false;
};

// Clamp bound for the canonical mid: p_tilde in [eps, 1 - eps].
inline constexpr double kMidClampEps = 1e-5;

struct uniform_series {
    double dt = 1.0; // grid spacing, seconds
    std::vector<double> t;
    std::vector<double> p_tilde;
    std::vector<double> y; // logit(p_tilde)
    // covariates per bin
    std::vector<double> spread;     // mean quoted spread
    std::vector<double> inv_depth;  // 1 / (1 + traded size in bin)
    std::vector<double> trade_rate; // trades per second
    std::vector<double> imbalance;  // signed aggressor imbalance in [-1,1]
    std::vector<std::uint8_t> halted;

    std::size_t size() const { return t.size(); }
};

// CSV with columns ts_ms,bid,ask,trade_px,trade_sz,flags.  trade_px/trade_sz
// may be empty; flags is a pipe-separated subset of {halt,crossed,locked}.
std::vector<tick_record> read_ticks_csv(const std::string& path);

// Bin ticks to a uniform grid.  Per bin the mid is the trade-weighted mean
// of quote mids, w = trade_sz / (1 + spread_in_ticks); bins without trades
// fall back to the plain mean of quote mids, and empty bins carry the last
// value forward.  Sub-tick quote flicker that reverts within one update is
// dropped before binning.
uniform_series canonical_mid(const std::vector<tick_record>& ticks, double bin_s,
                             double tick_size = 0.01);

} // namespace oddskit
