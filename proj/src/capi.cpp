#include "rnp.h"

#include "rnp/distribution.hpp"
#include "rnp/errors.hpp"
#include "rnp/experiments.hpp"
#include "rnp/fx.hpp"
#include "rnp/ingest.hpp"
#include "rnp/projector.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>
#include <string>

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return RNP_OK;
    } catch (const rnp::NumericalError& e) {
        g_last_error = e.what();
        return RNP_ERR_NUMERICAL;
    } catch (const rnp::Error& e) {
        g_last_error = e.what();
        return RNP_ERR_VALIDATION;
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return RNP_ERR_VALIDATION;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return RNP_ERR_INTERNAL;
    }
}

std::map<double, double> parse_quote_pairs(const json& j) {
    std::map<double, double> out;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2)
            throw rnp::ValidationError("quote entries must be [strike, price] pairs");
        out[pair[0].get<double>()] = pair[1].get<double>();
    }
    return out;
}

} // namespace

struct rnp_quotes {
    rnp::MarketQuotes quotes;
};

struct rnp_fx_market {
    rnp::fx::FXMarket market;
};

extern "C" {

const char* rnp_version(void) { return "1.0.0"; }

const char* rnp_last_error(void) { return g_last_error.c_str(); }

void rnp_string_free(char* s) { std::free(s); }

int rnp_quotes_parse_json(const char* json_text, rnp_quotes** out) {
    return guarded([&]() {
        if (!json_text || !out) throw rnp::ValidationError("null argument");
        const json j = json::parse(json_text);
        rnp::MarketQuotes q;
        q.gross_rate = j.at("gross_rate").get<double>();
        rnp::AssetQuotes aq;
        aq.forward = j.at("forward").get<double>();
        if (j.contains("puts")) aq.puts = parse_quote_pairs(j["puts"]);
        if (j.contains("calls")) aq.calls = parse_quote_pairs(j["calls"]);
        if (q.gross_rate <= 0.0 || aq.forward <= 0.0)
            throw rnp::ValidationError("gross_rate and forward must be positive");
        for (const auto& m : {aq.puts, aq.calls})
            for (const auto& [k, v] : m)
                if (k <= 0.0 || v < 0.0) throw rnp::ValidationError("bad quote entry");
        q.assets[0] = std::move(aq);
        *out = new rnp_quotes{std::move(q)};
    });
}

void rnp_quotes_free(rnp_quotes* q) { delete q; }

} // extern "C"

namespace {

struct MomentRequest {
    std::string payoff = "power:2";
    std::vector<std::array<double, 2>> payoff_points;
    double a_min = 0.0, a_max = 0.0;
    std::size_t grid_points = 2001;
    double maturity = 1.0;
    std::string method = "ols";
    double wls_scale = 0.0;
    bool payoff_nonneg = false;
    double weight_floor = 0.0;
    std::size_t eval_points = 501;
    bool rearrange = false;
};

MomentRequest parse_request(const json& j, const rnp::MarketQuotes& quotes) {
    MomentRequest r;
    if (j.contains("payoff")) r.payoff = j["payoff"].get<std::string>();
    if (j.contains("payoff_points"))
        for (const auto& p : j["payoff_points"])
            r.payoff_points.push_back({p[0].get<double>(), p[1].get<double>()});
    const auto& aq = quotes.assets.at(0);
    double kmin = aq.forward, kmax = aq.forward;
    for (const auto& m : {aq.puts, aq.calls})
        for (const auto& [k, v] : m) {
            (void)v;
            kmin = std::min(kmin, k);
            kmax = std::max(kmax, k);
        }
    r.a_min = 0.5 * kmin;
    r.a_max = 1.5 * kmax;
    if (j.contains("bounds")) {
        r.a_min = j["bounds"][0].get<double>();
        r.a_max = j["bounds"][1].get<double>();
    }
    if (j.contains("grid_points")) r.grid_points = j["grid_points"].get<std::size_t>();
    if (j.contains("maturity")) r.maturity = j["maturity"].get<double>();
    if (j.contains("method")) r.method = j["method"].get<std::string>();
    if (j.contains("wls_scale")) r.wls_scale = j["wls_scale"].get<double>();
    if (j.contains("payoff_nonneg")) r.payoff_nonneg = j["payoff_nonneg"].get<bool>();
    if (j.contains("weight_floor")) r.weight_floor = j["weight_floor"].get<double>();
    if (j.contains("eval_points")) r.eval_points = j["eval_points"].get<std::size_t>();
    if (j.contains("rearrange")) r.rearrange = j["rearrange"].get<bool>();
    return r;
}

std::function<double(double)> payoff_function(const MomentRequest& r) {
    if (r.payoff == "svix") return [](double s) { return s * s; };
    if (r.payoff == "vix") return [](double s) { return std::log(s); };
    if (r.payoff.rfind("power:", 0) == 0) {
        const double n = std::stod(r.payoff.substr(6));
        return [n](double s) { return std::pow(s, n); };
    }
    if (r.payoff.rfind("indicator:", 0) == 0) {
        const double x = std::stod(r.payoff.substr(10));
        return [x](double s) { return s <= x ? 1.0 : 0.0; };
    }
    if (r.payoff == "file") {
        auto pts = r.payoff_points;
        if (pts.size() < 2)
            throw rnp::ValidationError("payoff 'file' needs at least 2 payoff_points");
        std::sort(pts.begin(), pts.end(),
                  [](const auto& a, const auto& b) { return a[0] < b[0]; });
        return [pts](double s) {
            if (s <= pts.front()[0]) return pts.front()[1];
            if (s >= pts.back()[0]) return pts.back()[1];
            for (std::size_t i = 1; i < pts.size(); ++i)
                if (s <= pts[i][0]) {
                    const double t = (s - pts[i - 1][0]) / (pts[i][0] - pts[i - 1][0]);
                    return pts[i - 1][1] + t * (pts[i][1] - pts[i - 1][1]);
                }
            return pts.back()[1];
        };
    }
    throw rnp::ValidationError("unknown payoff '" + r.payoff + "'");
}

rnp::BasisSet basis_from_quotes(const rnp::MarketQuotes& quotes) {
    const auto& aq = quotes.assets.at(0);
    rnp::StrikeSet ss;
    ss.forward = aq.forward;
    for (const auto& [k, v] : aq.puts) {
        (void)v;
        ss.put_strikes.push_back(k);
    }
    for (const auto& [k, v] : aq.calls) {
        (void)v;
        ss.call_strikes.push_back(k);
    }
    return rnp::BasisSet::univariate(ss, 0);
}

json portfolio_to_json(const rnp::ReplicatingPortfolio& p) {
    json elems = json::array();
    for (std::size_t i = 0; i < p.basis.size(); ++i)
        elems.push_back(p.basis.elements[i].describe());
    json coeffs = json::array();
    for (Eigen::Index i = 0; i < p.coefficients.size(); ++i) coeffs.push_back(p.coefficients(i));
    return json{{"elements", elems},
                {"coefficients", coeffs},
                {"diagnostics",
                 {{"l2_residual", p.diagnostics.l2_residual},
                  {"sup_residual", p.diagnostics.sup_residual},
                  {"condition", p.diagnostics.condition}}}};
}

json request_echo(const MomentRequest& r) {
    return json{{"payoff", r.payoff},
                {"bounds", {r.a_min, r.a_max}},
                {"grid_points", r.grid_points},
                {"maturity", r.maturity},
                {"method", r.method},
                {"wls_scale", r.wls_scale},
                {"payoff_nonneg", r.payoff_nonneg},
                {"weight_floor", r.weight_floor},
                {"eval_points", r.eval_points},
                {"rearrange", r.rearrange}};
}

} // namespace

extern "C" {

int rnp_estimate_moment(const rnp_quotes* q, const char* request_json, char** result_json) {
    return guarded([&]() {
        if (!q || !request_json || !result_json) throw rnp::ValidationError("null argument");
        const json jr = json::parse(request_json);
        const MomentRequest r = parse_request(jr, q->quotes);
        const rnp::BasisSet basis = basis_from_quotes(q->quotes);
        const rnp::StateGrid grid = rnp::build_state_grid(r.a_min, r.a_max, r.grid_points);

        rnp::FitMethod method = rnp::Ols{};
        if (r.method == "wls") {
            const double scale =
                r.wls_scale > 0.0 ? r.wls_scale : 0.1 * q->quotes.assets.at(0).forward;
            method = rnp::Wls{rnp::cauchy_weights(grid, q->quotes.assets.at(0).forward, scale)};
        } else if (r.method == "constrained") {
            rnp::Constrained c;
            c.payoff_nonneg = r.payoff_nonneg;
            if (r.weight_floor > 0.0) c.weight_floor = r.weight_floor;
            method = c;
        } else if (r.method != "ols") {
            throw rnp::ValidationError("method must be ols, wls or constrained");
        }

        const auto g = payoff_function(r);
        const rnp::MomentEstimate est = rnp::estimate_moment(g, basis, grid, q->quotes, method);

        json out;
        out["estimate"] = est.estimate;
        const double fwd = q->quotes.assets.at(0).forward;
        const double rf = q->quotes.gross_rate;
        if (r.payoff == "svix") {
            const double svix2 = (est.estimate - fwd * fwd) / (r.maturity * fwd * fwd);
            out["svix_squared"] = svix2;
            if (svix2 >= 0.0) out["svix"] = std::sqrt(svix2);
        } else if (r.payoff == "vix") {
            const double s0 = fwd / rf;
            const double vix2 = 2.0 / r.maturity * (std::log(rf) - (est.estimate - std::log(s0)));
            out["vix_squared"] = vix2;
            if (vix2 >= 0.0) out["vix"] = std::sqrt(vix2);
        }
        out["portfolio"] = portfolio_to_json(est.portfolio);
        out["config"] = request_echo(r);
        *result_json = dup_string(out.dump(2) + "\n");
    });
}

int rnp_estimate_distribution(const rnp_quotes* q, const char* request_json, char** result_csv,
                              char** meta_json) {
    return guarded([&]() {
        if (!q || !request_json || !result_csv || !meta_json)
            throw rnp::ValidationError("null argument");
        const json jr = json::parse(request_json);
        const MomentRequest r = parse_request(jr, q->quotes);
        const rnp::BasisSet basis = basis_from_quotes(q->quotes);
        rnp::RNDistribution dist =
            rnp::estimate_cdf(basis, r.a_min, r.a_max, q->quotes, r.eval_points);
        if (r.rearrange) dist = rnp::rearrange_monotone(dist);
        *result_csv = dup_string(rnp::distribution_to_csv(dist));
        json meta;
        meta["config"] = request_echo(r);
        meta["monotonized"] = dist.monotonized;
        *meta_json = dup_string(meta.dump(2) + "\n");
    });
}

int rnp_fx_market_parse_json(const char* json_text, rnp_fx_market** out) {
    return guarded([&]() {
        if (!json_text || !out) throw rnp::ValidationError("null argument");
        const json j = json::parse(json_text);
        rnp::fx::FXMarket m;
        m.spot1 = j.at("spot1").get<double>();
        m.spot2 = j.at("spot2").get<double>();
        m.gross_usd = j.at("gross_usd").get<double>();
        m.gross_gbp = j.at("gross_gbp").get<double>();
        m.gross_eur = j.at("gross_eur").get<double>();
        m.calls1 = parse_quote_pairs(j.at("calls1"));
        m.calls2 = parse_quote_pairs(j.at("calls2"));
        if (j.contains("cross_calls")) m.cross_calls = parse_quote_pairs(j["cross_calls"]);
        m.validate();
        *out = new rnp_fx_market{std::move(m)};
    });
}

void rnp_fx_market_free(rnp_fx_market* m) { delete m; }

int rnp_fx_dependence(const rnp_fx_market* m, const char* request_json, char** result_json) {
    return guarded([&]() {
        if (!m || !request_json || !result_json) throw rnp::ValidationError("null argument");
        const json j = json::parse(request_json);
        auto grid_of = [&](const char* key) {
            const json& g = j.at(key);
            return rnp::build_state_grid(g.at("lo").get<double>(), g.at("hi").get<double>(),
                                         g.value("n", std::size_t{201}));
        };
        const rnp::fx::JointGrid grids{grid_of("grid1"), grid_of("grid2")};
        std::vector<double> k1, k2, k3;
        for (const auto& [k, v] : m->market.calls1) {
            (void)v;
            k1.push_back(k);
        }
        for (const auto& [k, v] : m->market.calls2) {
            (void)v;
            k2.push_back(k);
        }
        for (const auto& [k, v] : m->market.cross_calls) {
            (void)v;
            k3.push_back(k);
        }
        const rnp::BasisSet basis = rnp::fx::build_fx_basis(k1, k2, k3);
        const rnp::fx::FxDependence dep = rnp::fx::fx_covariance(m->market, basis, grids);

        json out;
        out["covariance"] = dep.covariance;
        out["correlation"] = dep.correlation;
        out["var1"] = dep.var1;
        out["var2"] = dep.var2;
        if (j.contains("tail")) {
            json tails = json::array();
            for (const auto& t : j["tail"]) {
                const double q1 = t[0].get<double>(), q2 = t[1].get<double>();
                const rnp::fx::TailEstimate te =
                    rnp::fx::joint_tail_probability(m->market, basis, grids, q1, q2);
                tails.push_back({{"q1", q1},
                                 {"q2", q2},
                                 {"probability", te.probability},
                                 {"raw", te.raw}});
            }
            out["tail_probabilities"] = tails;
        }
        // Debug comparison of the two cross-call discounting conventions
        // (derivation: R_f S2_t C_gbp ; paper display: R_f_gbp applied).
        double sum_deriv = 0.0, sum_display = 0.0;
        for (const auto& [k, px] : m->market.cross_calls) {
            (void)k;
            sum_deriv += m->market.gross_usd * m->market.spot2 * px;
            sum_display += m->market.gross_gbp * m->market.spot2 * px;
        }
        out["cross_call_sum_derivation_convention"] = sum_deriv;
        out["cross_call_sum_display_convention"] = sum_display;
        out["config"] = {{"grid1", {{"lo", grids.grid1.a_min()}, {"hi", grids.grid1.a_max()},
                                    {"n", grids.grid1.size()}}},
                         {"grid2", {{"lo", grids.grid2.a_min()}, {"hi", grids.grid2.a_max()},
                                    {"n", grids.grid2.size()}}}};
        *result_json = dup_string(out.dump(2) + "\n");
    });
}

int rnp_clean_chain_csv(const char* csv_text, char** cleaned_csv) {
    return guarded([&]() {
        if (!csv_text || !cleaned_csv) throw rnp::ValidationError("null argument");
        const auto rows = rnp::ingest::parse_chain_csv(csv_text);
        const auto cleaned = rnp::ingest::clean_chain_rows(rows);
        *cleaned_csv = dup_string(rnp::ingest::chain_to_csv(cleaned));
    });
}

int rnp_expand_fx_smile_csv(const char* pillars_csv, char** quotes_csv) {
    return guarded([&]() {
        if (!pillars_csv || !quotes_csv) throw rnp::ValidationError("null argument");
        const auto rows = rnp::ingest::parse_pillar_csv(pillars_csv);
        std::string out = "date,tenor,pair,label,delta,vol,strike,price\n";
        for (const auto& r : rows) {
            const auto quotes = rnp::ingest::expand_fx_smile(r);
            const std::string block = rnp::ingest::smile_to_csv(r, quotes);
            out += block.substr(block.find('\n') + 1); // strip per-block header
        }
        *quotes_csv = dup_string(out);
    });
}

int rnp_run_study(const char* config_json, uint64_t seed, const char* out_dir, char** meta_json) {
    return guarded([&]() {
        if (!config_json || !out_dir) throw rnp::ValidationError("null argument");
        rnp::experiments::ExperimentConfig cfg =
            rnp::experiments::parse_config_json(config_json);
        if (seed != 0) cfg.seed = seed;
        const rnp::experiments::StudyOutput out = rnp::experiments::run_study(cfg);
        rnp::experiments::write_study(out, out_dir);
        if (meta_json) *meta_json = dup_string(out.meta_json);
    });
}

int rnp_default_study_config(const char* study, char** config_json) {
    return guarded([&]() {
        if (!study || !config_json) throw rnp::ValidationError("null argument");
        *config_json = dup_string(rnp::experiments::default_config_json(study));
    });
}

} // extern "C"
