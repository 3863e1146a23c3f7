#include "oddskit/ticks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "oddskit/csv.hpp"
#include "oddskit/errors.hpp"
#include "oddskit/logistic.hpp"

namespace oddskit {

namespace {

bool parse_flag_set(const std::string& s, tick_record& rec) {
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, '|')) {
        if (tok.empty()) continue;
        if (tok == "halt") rec.f_halt = true;
        else if (tok == "crossed") rec.f_crossed = true;
        else if (tok == "locked") rec.f_locked = true;
        else return false;
    }
    return true;
}

} // namespace

std::vector<tick_record> read_ticks_csv(const std::string& path) {
    csv_table t = read_csv(path);
    const char* needed[] = {"ts_ms", "bid", "ask", "trade_px", "trade_sz", "flags"};
    int col[6];
    for (int i = 0; i < 6; ++i) {
        col[i] = t.column(needed[i]);
        if (col[i] < 0) throw data_error(std::string("ticks: missing column '") + needed[i] + "'");
    }
    std::vector<tick_record> out;
    out.reserve(t.rows.size());
    std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();
    for (const auto& row : t.rows) {
        if (row.size() < 6) throw data_error("ticks: short row");
        tick_record r;
        try {
            r.ts_ms = std::stoll(row[col[0]]);
            r.bid = std::stod(row[col[1]]);
            r.ask = std::stod(row[col[2]]);
            if (!row[col[3]].empty()) {
                r.trade_px = std::stod(row[col[3]]);
                r.trade_sz = row[col[4]].empty() ? 0.0 : std::stod(row[col[4]]);
                r.has_trade = true;
            }
        } catch (const std::exception&) {
            throw data_error("ticks: non-numeric field");
        }
        if (!parse_flag_set(row[col[5]], r)) throw data_error("ticks: unknown flag token");
        if (r.ts_ms < prev_ts) throw data_error("ticks: timestamps must be nondecreasing");
        prev_ts = r.ts_ms;
        if (!(r.bid >= 0.0 && r.ask <= 1.0) || !std::isfinite(r.bid) || !std::isfinite(r.ask))
            throw data_error("ticks: quotes outside [0,1]");
        if (r.bid > r.ask && !(r.f_crossed || r.f_locked))
            throw data_error("ticks: crossed book without crossed/locked flag");
        out.push_back(r);
    }
    return out;
}

uniform_series canonical_mid(const std::vector<tick_record>& ticks, double bin_s,
                             double tick_size) {
    if (!(bin_s > 0.0)) throw config_error("canonical_mid: bin must be positive");
    if (!(tick_size > 0.0)) throw config_error("canonical_mid: tick size must be positive");
    if (ticks.empty()) throw data_error("canonical_mid: empty tick input");

    // Usable ticks: keep halts out of the mid but remember where they were.
    std::vector<const tick_record*> quotes;
    quotes.reserve(ticks.size());
    for (const auto& r : ticks)
        if (!(r.f_halt || r.f_crossed || r.f_locked)) quotes.push_back(&r);
    if (quotes.empty()) throw data_error("canonical_mid: all ticks flagged unusable");

    // Debounce: drop an isolated sub-tick mid flicker that reverts on the
    // next update.
    std::vector<bool> keep(quotes.size(), true);
    auto mid_of = [](const tick_record* r) { return 0.5 * (r->bid + r->ask); };
    for (std::size_t k = 1; k + 1 < quotes.size(); ++k) {
        const double prev = mid_of(quotes[k - 1]);
        const double cur = mid_of(quotes[k]);
        const double next = mid_of(quotes[k + 1]);
        if (cur != prev && std::abs(cur - prev) < tick_size * (1.0 - 1e-9) &&
            std::abs(next - prev) < 1e-12)
            keep[k] = false;
    }

    const std::int64_t ts0 = ticks.front().ts_ms;
    const auto bin_of = [&](std::int64_t ts) {
        return static_cast<std::size_t>(static_cast<double>(ts - ts0) / 1000.0 / bin_s);
    };
    const std::size_t n_bins = bin_of(ticks.back().ts_ms) + 1;

    struct bin_acc {
        double wsum = 0, wmid = 0;
        double mids = 0;
        int n_quotes = 0;
        double spread_sum = 0;
        double traded = 0;
        int n_trades = 0;
        double buy_sz = 0, sell_sz = 0;
        bool halt = false;
    };
    std::vector<bin_acc> bins(n_bins);
    for (const auto& r : ticks)
        if (r.f_halt) bins[bin_of(r.ts_ms)].halt = true;
    for (std::size_t k = 0; k < quotes.size(); ++k) {
        if (!keep[k]) continue;
        const tick_record& r = *quotes[k];
        bin_acc& b = bins[bin_of(r.ts_ms)];
        const double mid = mid_of(&r);
        const double spr = r.ask - r.bid;
        b.mids += mid;
        b.n_quotes += 1;
        b.spread_sum += spr;
        if (r.has_trade && r.trade_sz > 0.0) {
            const double w = r.trade_sz / (1.0 + spr / tick_size);
            b.wsum += w;
            b.wmid += w * mid;
            b.traded += r.trade_sz;
            b.n_trades += 1;
            if (r.trade_px >= mid) b.buy_sz += r.trade_sz;
            else b.sell_sz += r.trade_sz;
        }
    }

    uniform_series s;
    s.dt = bin_s;
    s.t.resize(n_bins);
    s.p_tilde.resize(n_bins);
    s.y.resize(n_bins);
    s.spread.resize(n_bins);
    s.inv_depth.resize(n_bins);
    s.trade_rate.resize(n_bins);
    s.imbalance.resize(n_bins);
    s.halted.resize(n_bins);

    double last_mid = std::numeric_limits<double>::quiet_NaN();
    double last_spread = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const bin_acc& a = bins[b];
        double mid;
        if (a.wsum > 0.0) mid = a.wmid / a.wsum;
        else if (a.n_quotes > 0) mid = a.mids / a.n_quotes;
        else mid = last_mid; // gap: carry last value forward
        if (!std::isfinite(mid)) {
            // leading bins before the first usable quote: seed from the first
            // usable quote's mid
            mid = mid_of(quotes.front());
        }
        last_mid = mid;
        if (a.n_quotes > 0) last_spread = a.spread_sum / a.n_quotes;

        s.t[b] = static_cast<double>(b) * bin_s;
        s.p_tilde[b] = std::clamp(mid, kMidClampEps, 1.0 - kMidClampEps);
        s.y[b] = logit(s.p_tilde[b]);
        s.spread[b] = last_spread;
        s.inv_depth[b] = 1.0 / (1.0 + a.traded);
        s.trade_rate[b] = a.n_trades / bin_s;
        const double tot = a.buy_sz + a.sell_sz;
        s.imbalance[b] = tot > 0.0 ? (a.buy_sz - a.sell_sz) / tot : 0.0;
        s.halted[b] = a.halt ? 1 : 0;
    }
    return s;
}

} // namespace oddskit
