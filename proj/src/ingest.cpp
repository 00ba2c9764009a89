#include "rnp/ingest.hpp"
#include "rnp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace rnp::ingest {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, std::size_t line_no, const char* field) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("line " + std::to_string(line_no) + ": cannot parse " + field +
                              " value '" + s + "'");
    }
}

std::vector<std::string> read_lines(const std::string& csv) {
    std::vector<std::string> lines;
    std::stringstream ss(csv);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

} // namespace

std::vector<RawChainRow> parse_chain_csv(const std::string& csv) {
    const auto lines = read_lines(csv);
    if (lines.empty()) throw ValidationError("empty chain CSV");
    const auto header = split_line(lines[0]);
    const std::vector<std::string> expect{"date",     "expiry",    "strike", "side",
                                          "bid",      "ask",       "underlying", "forward"};
    if (header.size() < 7)
        throw ValidationError("line 1: chain CSV header must be "
                              "date,expiry,strike,side,bid,ask,underlying[,forward]");
    for (std::size_t i = 0; i < 7; ++i)
        if (header[i] != expect[i])
            throw ValidationError("line 1: expected header column '" + expect[i] + "', got '" +
                                  header[i] + "'");
    const bool has_forward = header.size() >= 8 && header[7] == "forward";

    std::vector<RawChainRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_line(lines[i]);
        if (f.size() < 7)
            throw ValidationError("line " + std::to_string(i + 1) + ": expected at least 7 fields");
        RawChainRow r;
        r.date = f[0];
        r.expiry = f[1];
        r.strike = parse_num(f[2], i + 1, "strike");
        if (f[3] == "call" || f[3] == "C")
            r.side = models::OptionSide::Call;
        else if (f[3] == "put" || f[3] == "P")
            r.side = models::OptionSide::Put;
        else
            throw ValidationError("line " + std::to_string(i + 1) + ": side must be call or put");
        r.bid = parse_num(f[4], i + 1, "bid");
        r.ask = parse_num(f[5], i + 1, "ask");
        r.underlying = parse_num(f[6], i + 1, "underlying");
        if (has_forward && f.size() >= 8 && !f[7].empty())
            r.forward = parse_num(f[7], i + 1, "forward");
        if (r.strike <= 0.0)
            throw ValidationError("line " + std::to_string(i + 1) + ": strike must be positive");
        if (r.bid > r.ask)
            throw ValidationError("line " + std::to_string(i + 1) + ": bid exceeds ask");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string chain_to_csv(const std::vector<RawChainRow>& rows) {
    std::string out = "date,expiry,strike,side,bid,ask,underlying,forward\n";
    char buf[64];
    for (const auto& r : rows) {
        out += r.date + "," + r.expiry + ",";
        std::snprintf(buf, sizeof(buf), "%.10g,", r.strike);
        out += buf;
        out += r.side == models::OptionSide::Call ? "call," : "put,";
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,", r.bid, r.ask, r.underlying);
        out += buf;
        if (r.forward) {
            std::snprintf(buf, sizeof(buf), "%.10g", *r.forward);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

namespace {

struct SideQuote {
    double strike;
    double bid;
    double mid;
};

// Zero-bid filter scanning outward from the forward: drop zero bids, and
// after two consecutive zero-bid strikes drop everything further out.
std::vector<SideQuote> filter_outward(std::vector<SideQuote> side, bool scan_descending) {
    std::sort(side.begin(), side.end(), [&](const SideQuote& a, const SideQuote& b) {
        return scan_descending ? a.strike > b.strike : a.strike < b.strike;
    });
    std::vector<SideQuote> kept;
    int consecutive_zero = 0;
    for (const auto& q : side) {
        if (consecutive_zero >= 2) break;
        if (q.bid <= 0.0) {
            ++consecutive_zero;
            continue;
        }
        consecutive_zero = 0;
        kept.push_back(q);
    }
    return kept;
}

} // namespace

std::vector<CleanedChain> clean_chain(const std::vector<RawChainRow>& rows) {
    std::map<std::pair<std::string, std::string>, std::vector<const RawChainRow*>> groups;
    for (const auto& r : rows) groups[{r.date, r.expiry}].push_back(&r);

    std::vector<CleanedChain> out;
    for (const auto& [key, group] : groups) {
        CleanedChain c;
        c.date = key.first;
        c.expiry = key.second;

        // Forward: explicit column wins; otherwise derive from the near-ATM
        // put-call pair (discount-free parity; flagged in the output).
        for (const auto* r : group)
            if (r->forward) c.forward = *r->forward;
        if (c.forward <= 0.0) {
            std::map<double, std::pair<double, double>> mids; // strike -> (call, put)
            std::map<double, std::pair<double, double>> bids;
            for (const auto* r : group) {
                auto& m = mids[r->strike];
                auto& b = bids[r->strike];
                if (r->side == models::OptionSide::Call) {
                    m.first = 0.5 * (r->bid + r->ask);
                    b.first = r->bid;
                } else {
                    m.second = 0.5 * (r->bid + r->ask);
                    b.second = r->bid;
                }
            }
            double best_gap = std::numeric_limits<double>::infinity();
            for (const auto& [k, cp] : mids) {
                const auto& b = bids[k];
                if (b.first <= 0.0 || b.second <= 0.0) continue;
                const double gap = std::abs(cp.first - cp.second);
                if (gap < best_gap) {
                    best_gap = gap;
                    c.forward = k + cp.first - cp.second;
                    c.forward_from_parity = true;
                }
            }
            if (c.forward <= 0.0)
                throw ValidationError("no forward for (" + c.date + ", " + c.expiry +
                                      "): provide an explicit forward column or a strike quoted "
                                      "on both sides");
        }

        // Keep out-of-the-money quotes only: puts at K <= F, calls at K > F.
        std::vector<SideQuote> puts, calls;
        for (const auto* r : group) {
            const double mid = 0.5 * (r->bid + r->ask);
            if (r->side == models::OptionSide::Put && r->strike <= c.forward)
                puts.push_back({r->strike, r->bid, mid});
            if (r->side == models::OptionSide::Call && r->strike > c.forward)
                calls.push_back({r->strike, r->bid, mid});
        }
        for (const auto& q : filter_outward(puts, true)) c.puts[q.strike] = q.mid;
        for (const auto& q : filter_outward(calls, false)) c.calls[q.strike] = q.mid;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<RawChainRow> clean_chain_rows(const std::vector<RawChainRow>& rows) {
    const auto cleaned = clean_chain(rows);
    // Index original rows for bid/ask recovery.
    std::map<std::tuple<std::string, std::string, double, int>, const RawChainRow*> index;
    for (const auto& r : rows)
        index[{r.date, r.expiry, r.strike, r.side == models::OptionSide::Call ? 1 : 0}] = &r;
    std::vector<RawChainRow> out;
    for (const auto& c : cleaned) {
        auto emit = [&](const std::map<double, double>& side, models::OptionSide s) {
            for (const auto& [k, mid] : side) {
                (void)mid;
                auto it = index.find({c.date, c.expiry, k, s == models::OptionSide::Call ? 1 : 0});
                if (it == index.end()) continue;
                RawChainRow r = *it->second;
                r.forward = c.forward; // make the derived forward explicit
                out.push_back(std::move(r));
            }
        };
        emit(c.puts, models::OptionSide::Put);
        emit(c.calls, models::OptionSide::Call);
    }
    return out;
}

// ---------------------------------------------------------------------------
// FX smile expansion
// ---------------------------------------------------------------------------

double tenor_years(const std::string& tenor) {
    if (tenor.size() < 2) throw ValidationError("bad tenor '" + tenor + "'");
    const char unit = tenor.back();
    double n = 0.0;
    try {
        n = std::stod(tenor.substr(0, tenor.size() - 1));
    } catch (const std::exception&) {
        throw ValidationError("bad tenor '" + tenor + "'");
    }
    switch (unit) {
    case 'D': return n / 365.0;
    case 'W': return 7.0 * n / 365.0;
    case 'M': return 30.0 * n / 365.0;
    case 'Y': return n;
    default: throw ValidationError("bad tenor unit in '" + tenor + "'");
    }
}

std::vector<FXPillarRow> parse_pillar_csv(const std::string& csv) {
    const auto lines = read_lines(csv);
    if (lines.empty()) throw ValidationError("empty pillar CSV");
    const auto header = split_line(lines[0]);
    const std::vector<std::string> expect{"date", "tenor",  "pair",  "atm_vol",
                                          "rr_10", "rr_25", "bf_10", "bf_25",
                                          "spot", "dom_rate", "for_rate"};
    if (header.size() != expect.size())
        throw ValidationError("line 1: pillar CSV header must be date,tenor,pair,atm_vol,rr_10,"
                              "rr_25,bf_10,bf_25,spot,dom_rate,for_rate");
    for (std::size_t i = 0; i < expect.size(); ++i)
        if (header[i] != expect[i])
            throw ValidationError("line 1: expected header column '" + expect[i] + "'");
    std::vector<FXPillarRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_line(lines[i]);
        if (f.size() != expect.size())
            throw ValidationError("line " + std::to_string(i + 1) + ": expected " +
                                  std::to_string(expect.size()) + " fields");
        FXPillarRow r;
        r.date = f[0];
        r.tenor = f[1];
        r.pair = f[2];
        r.atm_vol = parse_num(f[3], i + 1, "atm_vol");
        r.rr_10 = parse_num(f[4], i + 1, "rr_10");
        r.rr_25 = parse_num(f[5], i + 1, "rr_25");
        r.bf_10 = parse_num(f[6], i + 1, "bf_10");
        r.bf_25 = parse_num(f[7], i + 1, "bf_25");
        r.spot = parse_num(f[8], i + 1, "spot");
        r.dom_rate = parse_num(f[9], i + 1, "dom_rate");
        r.for_rate = parse_num(f[10], i + 1, "for_rate");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<SmileQuote> expand_fx_smile(const FXPillarRow& pillar) {
    if (pillar.atm_vol <= 0.0) throw ValidationError("ATM vol must be positive");
    const double T = tenor_years(pillar.tenor);
    // sigma_call(d) = ATM + BF(d) + RR(d)/2, sigma_put(d) = ATM + BF(d) - RR(d)/2.
    struct Pillar {
        const char* label;
        double delta;
        models::OptionSide side;
        double vol;
    };
    const Pillar pillars[5] = {
        {"10dp", -0.10, models::OptionSide::Put, pillar.atm_vol + pillar.bf_10 - 0.5 * pillar.rr_10},
        {"25dp", -0.25, models::OptionSide::Put, pillar.atm_vol + pillar.bf_25 - 0.5 * pillar.rr_25},
        {"atm", 0.0, models::OptionSide::Call, pillar.atm_vol},
        {"25dc", 0.25, models::OptionSide::Call, pillar.atm_vol + pillar.bf_25 + 0.5 * pillar.rr_25},
        {"10dc", 0.10, models::OptionSide::Call, pillar.atm_vol + pillar.bf_10 + 0.5 * pillar.rr_10},
    };
    std::vector<SmileQuote> out;
    for (const auto& p : pillars) {
        if (p.vol <= 0.0) throw ValidationError("pillar vols must stay positive across the smile");
        models::GKParams gk{pillar.spot, pillar.dom_rate, pillar.for_rate, p.vol, T};
        SmileQuote q;
        q.label = p.label;
        q.vol = p.vol;
        if (std::string(p.label) == "atm") {
            // ATM read as the delta-neutral straddle strike.
            q.strike = gk.forward() * std::exp(-0.5 * p.vol * p.vol * T);
            q.delta = models::gk_delta_premium_adjusted(gk, q.strike, models::OptionSide::Call);
        } else {
            q.strike = models::delta_to_strike(gk, p.delta, p.side);
            q.delta = p.delta;
        }
        q.price = models::gk_price(gk, q.strike, p.side);
        out.push_back(std::move(q));
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].strike <= out[i - 1].strike)
            throw NumericalError("smile strikes are not strictly increasing; quotes inconsistent");
    return out;
}

std::string smile_to_csv(const FXPillarRow& pillar, const std::vector<SmileQuote>& quotes) {
    std::string out = "date,tenor,pair,label,delta,vol,strike,price\n";
    char buf[128];
    for (const auto& q : quotes) {
        out += pillar.date + "," + pillar.tenor + "," + pillar.pair + "," + q.label + ",";
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.12g,%.12g\n", q.delta, q.vol, q.strike,
                      q.price);
        out += buf;
    }
    return out;
}

} // namespace rnp::ingest
