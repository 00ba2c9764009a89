#pragma once

#include "rnp/models.hpp"
#include "rnp/quotes.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rnp::ingest {

struct RawChainRow {
    std::string date;   // ISO-8601
    std::string expiry; // ISO-8601
    double strike = 0.0;
    models::OptionSide side = models::OptionSide::Call;
    double bid = 0.0;
    double ask = 0.0;
    double underlying = 0.0;
    std::optional<double> forward;
};

// CSV dialect: comma-separated, header row required, UTF-8, '.' decimal.
// Header: date,expiry,strike,side,bid,ask,underlying,forward
std::vector<RawChainRow> parse_chain_csv(const std::string& csv);
std::string chain_to_csv(const std::vector<RawChainRow>& rows);

struct CleanedChain {
    std::string date;
    std::string expiry;
    double forward = 0.0;
    bool forward_from_parity = false; // no forward column; derived near ATM
    std::map<double, double> puts;    // mid prices, OTM only
    std::map<double, double> calls;
};

// CBOE-style filters per (date, expiry): drop in-the-money options relative
// to the forward, drop zero-bid quotes, truncate each side after two strikes
// in a row with zero bids (scanning outward from the forward), price at the
// bid/ask midpoint.
std::vector<CleanedChain> clean_chain(const std::vector<RawChainRow>& rows);

// Row-level variant whose output re-cleans to itself (CLI `clean`).
std::vector<RawChainRow> clean_chain_rows(const std::vector<RawChainRow>& rows);

struct FXPillarRow {
    std::string date;
    std::string tenor; // e.g. 1M
    std::string pair;
    double atm_vol = 0.0;
    double rr_10 = 0.0;
    double rr_25 = 0.0;
    double bf_10 = 0.0;
    double bf_25 = 0.0;
    double spot = 0.0;
    double dom_rate = 0.0; // continuously compounded deposit rates
    double for_rate = 0.0;
};

// Header: date,tenor,pair,atm_vol,rr_10,rr_25,bf_10,bf_25,spot,dom_rate,for_rate
std::vector<FXPillarRow> parse_pillar_csv(const std::string& csv);

struct SmileQuote {
    std::string label; // 10dp, 25dp, atm, 25dc, 10dc
    double delta = 0.0;
    double vol = 0.0;
    double strike = 0.0;
    double price = 0.0;
};

// Five (strike, price) quotes from ATM/RR/BF pillars using the standard
// smile identities and the premium-included spot delta convention; strikes
// come out strictly increasing.
std::vector<SmileQuote> expand_fx_smile(const FXPillarRow& pillar);

double tenor_years(const std::string& tenor);
std::string smile_to_csv(const FXPillarRow& pillar, const std::vector<SmileQuote>& quotes);

} // namespace rnp::ingest
