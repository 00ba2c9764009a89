// Command-line front end; links the shared library through the C API only.

#include <rnp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CLI::ValidationError("--", "cannot open file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_output(const std::string& out_path, const std::string& content) {
    if (out_path.empty() || out_path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw CLI::ValidationError("--out", "cannot write file: " + out_path);
    f << content;
}

// Maps C API status codes onto the documented exit codes
// (0 success, 2 validation error, 3 numerical failure).
int fail(int status) {
    std::cerr << "error: " << rnp_last_error() << "\n";
    return status == RNP_ERR_NUMERICAL ? 3 : 2;
}

struct OwnedString {
    char* ptr = nullptr;
    ~OwnedString() { rnp_string_free(ptr); }
    std::string str() const { return ptr ? std::string(ptr) : std::string(); }
};

struct MomentArgs {
    std::string quotes_path;
    std::string payoff = "svix";
    std::string payoff_file;
    std::vector<double> bounds;
    std::size_t grid_points = 2001;
    double maturity = 1.0;
    std::string method = "ols";
    double wls_scale = 0.0;
    bool nonneg = false;
    double weight_floor = 0.0;
    std::size_t eval_points = 501;
    bool rearrange = false;
    std::string out;
};

json build_request(const MomentArgs& a) {
    json req;
    req["payoff"] = a.payoff_file.empty() ? a.payoff : std::string("file");
    if (!a.payoff_file.empty()) {
        json pts = json::array();
        std::ifstream f(a.payoff_file);
        if (!f) throw CLI::ValidationError("--payoff-file", "cannot open " + a.payoff_file);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#' || (line_no == 1 && line.find(',') == 0)) continue;
            std::stringstream ss(line);
            std::string s_str, g_str;
            if (!std::getline(ss, s_str, ',') || !std::getline(ss, g_str))
                throw CLI::ValidationError("--payoff-file", "line " + std::to_string(line_no) +
                                                                ": expected 's,g' pair");
            try {
                pts.push_back({std::stod(s_str), std::stod(g_str)});
            } catch (const std::exception&) {
                throw CLI::ValidationError("--payoff-file", "line " + std::to_string(line_no) +
                                                                ": cannot parse numbers");
            }
        }
        req["payoff_points"] = pts;
    }
    if (a.bounds.size() == 2) req["bounds"] = a.bounds;
    req["grid_points"] = a.grid_points;
    req["maturity"] = a.maturity;
    req["method"] = a.method;
    if (a.wls_scale > 0.0) req["wls_scale"] = a.wls_scale;
    req["payoff_nonneg"] = a.nonneg;
    if (a.weight_floor > 0.0) req["weight_floor"] = a.weight_floor;
    req["eval_points"] = a.eval_points;
    req["rearrange"] = a.rearrange;
    return req;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-neutral moment, distribution and dependence estimation from option "
                 "prices via payoff-span projection"};
    app.require_subcommand(1);

    MomentArgs margs;
    auto add_moment_options = [&](CLI::App* cmd, bool distribution) {
        cmd->add_option("--quotes", margs.quotes_path, "quotes JSON file")->required();
        if (!distribution)
            cmd->add_option("--payoff", margs.payoff,
                            "payoff spec: svix | vix | power:n | indicator:x");
        cmd->add_option("--payoff-file", margs.payoff_file, "CSV of s,g(s) pairs");
        cmd->add_option("--bounds", margs.bounds, "state-space bounds a_min a_max")->expected(2);
        cmd->add_option("--grid-points", margs.grid_points, "state grid size");
        cmd->add_option("--maturity", margs.maturity, "maturity in years (svix/vix scaling)");
        cmd->add_option("--method", margs.method, "ols | wls | constrained");
        cmd->add_option("--wls-scale", margs.wls_scale, "Cauchy weight scale (wls)");
        cmd->add_flag("--nonneg", margs.nonneg, "constrain the replicating payoff to be >= 0");
        cmd->add_option("--weight-floor", margs.weight_floor,
                        "constrain coefficients to beta >= -c");
        if (distribution) {
            cmd->add_option("--eval-points", margs.eval_points, "CDF/PDF evaluation grid size");
            cmd->add_flag("--rearrange", margs.rearrange, "monotonize the CDF by rearrangement");
        }
        cmd->add_option("--out", margs.out, "output path (default stdout)");
    };

    CLI::App* c_moment = app.add_subcommand("estimate-moment",
                                            "estimate a risk-neutral moment by projection");
    add_moment_options(c_moment, false);

    CLI::App* c_dist = app.add_subcommand("estimate-distribution",
                                          "estimate the risk-neutral CDF/PDF");
    add_moment_options(c_dist, true);

    std::string fx_market_path, fx_out;
    std::vector<double> fx_grid1, fx_grid2;
    std::size_t fx_grid_n = 201;
    std::vector<double> fx_tail;
    CLI::App* c_fx = app.add_subcommand("fx-corr",
                                        "option-implied covariance/correlation and joint tail "
                                        "probabilities for two dollar rates");
    c_fx->add_option("--market", fx_market_path, "FX market JSON (three-pair quotes)")->required();
    c_fx->add_option("--grid1", fx_grid1, "leg-1 grid bounds lo hi")->expected(2)->required();
    c_fx->add_option("--grid2", fx_grid2, "leg-2 grid bounds lo hi")->expected(2)->required();
    c_fx->add_option("--grid-points", fx_grid_n, "points per leg grid");
    c_fx->add_option("--tail", fx_tail, "joint tail thresholds q1 q2 (repeatable)");
    c_fx->add_option("--out", fx_out, "output path (default stdout)");

    std::string clean_in, clean_out;
    CLI::App* c_clean = app.add_subcommand("clean", "clean a raw option-chain CSV");
    c_clean->add_option("--in", clean_in, "raw chain CSV")->required();
    c_clean->add_option("--out", clean_out, "output path (default stdout)");

    std::string smile_in, smile_out;
    CLI::App* c_smile = app.add_subcommand("expand-smile",
                                           "expand FX ATM/RR/BF pillars into strike quotes");
    c_smile->add_option("--in", smile_in, "pillar CSV")->required();
    c_smile->add_option("--out", smile_out, "output path (default stdout)");

    std::string sim_study, sim_config, sim_out_dir;
    std::uint64_t sim_seed = 0;
    bool sim_print_config = false;
    auto add_sim_options = [&](CLI::App* cmd) {
        cmd->add_option("--study", sim_study,
                        "univariate_convergence | fx_recovery | sector_mse")
            ->required();
        cmd->add_option("--config", sim_config, "experiment config JSON (default: built-in)");
        cmd->add_option("--seed", sim_seed, "seed override (0 keeps the config seed)");
        cmd->add_option("--out", sim_out_dir, "output directory");
        cmd->add_flag("--print-config", sim_print_config,
                      "print the effective default config and exit");
    };
    CLI::App* c_sim = app.add_subcommand("simulate", "run a seeded simulation study");
    add_sim_options(c_sim);
    CLI::App* c_exp = app.add_subcommand("experiments", "experiment runner");
    CLI::App* c_exp_run = c_exp->add_subcommand("run", "run a seeded simulation study");
    add_sim_options(c_exp_run);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_moment->parsed() || c_dist->parsed()) {
            const std::string quotes_text = read_file(margs.quotes_path);
            rnp_quotes* q = nullptr;
            int rc = rnp_quotes_parse_json(quotes_text.c_str(), &q);
            if (rc != RNP_OK) return fail(rc);
            const json req = build_request(margs);
            if (c_moment->parsed()) {
                OwnedString result;
                rc = rnp_estimate_moment(q, req.dump().c_str(), &result.ptr);
                rnp_quotes_free(q);
                if (rc != RNP_OK) return fail(rc);
                write_output(margs.out, result.str());
            } else {
                OwnedString csv, meta;
                rc = rnp_estimate_distribution(q, req.dump().c_str(), &csv.ptr, &meta.ptr);
                rnp_quotes_free(q);
                if (rc != RNP_OK) return fail(rc);
                write_output(margs.out, csv.str());
                std::cerr << meta.str();
            }
            return 0;
        }
        if (c_fx->parsed()) {
            const std::string market_text = read_file(fx_market_path);
            rnp_fx_market* m = nullptr;
            int rc = rnp_fx_market_parse_json(market_text.c_str(), &m);
            if (rc != RNP_OK) return fail(rc);
            json req;
            req["grid1"] = {{"lo", fx_grid1[0]}, {"hi", fx_grid1[1]}, {"n", fx_grid_n}};
            req["grid2"] = {{"lo", fx_grid2[0]}, {"hi", fx_grid2[1]}, {"n", fx_grid_n}};
            if (!fx_tail.empty()) {
                if (fx_tail.size() % 2 != 0) {
                    std::cerr << "error: --tail expects q1 q2 pairs\n";
                    rnp_fx_market_free(m);
                    return 2;
                }
                json tails = json::array();
                for (std::size_t i = 0; i < fx_tail.size(); i += 2)
                    tails.push_back({fx_tail[i], fx_tail[i + 1]});
                req["tail"] = tails;
            }
            OwnedString result;
            rc = rnp_fx_dependence(m, req.dump().c_str(), &result.ptr);
            rnp_fx_market_free(m);
            if (rc != RNP_OK) return fail(rc);
            write_output(fx_out, result.str());
            return 0;
        }
        if (c_clean->parsed()) {
            OwnedString cleaned;
            const int rc = rnp_clean_chain_csv(read_file(clean_in).c_str(), &cleaned.ptr);
            if (rc != RNP_OK) return fail(rc);
            write_output(clean_out, cleaned.str());
            return 0;
        }
        if (c_smile->parsed()) {
            OwnedString quotes;
            const int rc = rnp_expand_fx_smile_csv(read_file(smile_in).c_str(), &quotes.ptr);
            if (rc != RNP_OK) return fail(rc);
            write_output(smile_out, quotes.str());
            return 0;
        }
        if (c_sim->parsed() || c_exp->parsed()) {
            std::string config_text;
            if (!sim_config.empty()) {
                config_text = read_file(sim_config);
            } else {
                OwnedString def;
                const int rc = rnp_default_study_config(sim_study.c_str(), &def.ptr);
                if (rc != RNP_OK) return fail(rc);
                config_text = def.str();
            }
            // Force the study named on the command line.
            json cfg = json::parse(config_text, nullptr, true, true);
            cfg["study"] = sim_study;
            if (sim_print_config) {
                std::cout << cfg.dump(2) << "\n";
                return 0;
            }
            if (sim_out_dir.empty()) {
                std::cerr << "error: --out directory is required\n";
                return 2;
            }
            OwnedString meta;
            const int rc =
                rnp_run_study(cfg.dump().c_str(), sim_seed, sim_out_dir.c_str(), &meta.ptr);
            if (rc != RNP_OK) return fail(rc);
            std::cout << meta.str();
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
