// Monte Carlo driver for the spawning GLMB filter.

#include "sglmb/config.hpp"
#include "sglmb/runner.hpp"
#include "sglmb/simulator.hpp"
#include "sglmb/testing/selftest.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#ifndef SGLMB_GIT_HASH
#define SGLMB_GIT_HASH "unknown"
#endif

namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

std::string trial_name(int trial, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "trial_%03d.%s", trial, ext);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GLMB filter with object spawning: Monte Carlo runs and self-checks"};
    std::string config_path;
    std::string out_dir = "out";
    int trials = -1;
    long long seed = -1;
    double p_t = -1.0;
    long long cap = -1;
    long long hmax = -1;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    bool selftest = false, mutate = false, check = false, diagnostics = false;
    bool export_truth = false, export_scans = false, dump_config = false, quiet = false;

    app.add_option("--config", config_path, "scenario JSON; built-in reference scenario when omitted")
        ->check(CLI::ExistingFile);
    app.add_option("--trials", trials, "number of Monte Carlo trials")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "master seed")->check(CLI::NonNegativeNumber);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--p-t", p_t, "spawn probability override (0 disables spawning)")->check(CLI::Range(0.0, 1.0));
    app.add_option("--cap", cap, "component cap override")->check(CLI::PositiveNumber);
    app.add_option("--hmax", hmax, "Gibbs sweep budget override")->check(CLI::NonNegativeNumber);
    app.add_option("--threads", threads, "worker threads (trials run in parallel)")->check(CLI::PositiveNumber);
    app.add_flag("--selftest", selftest, "run the oracle suite and exit");
    app.add_flag("--mutate", mutate, "with --selftest: perturb a model constant on the main path");
    app.add_flag("--check", check, "verify structural invariants after every scan");
    app.add_flag("--diagnostics", diagnostics, "write per-scan JSON lines under diagnostics/");
    app.add_flag("--export-truth", export_truth, "write truth.json");
    app.add_flag("--export-scans", export_scans, "write simulated measurements under scans/");
    app.add_flag("--dump-config", dump_config, "print the expanded configuration and exit");
    app.add_flag("-q,--quiet", quiet, "no progress output");
    CLI11_PARSE(app, argc, argv);

    if (selftest) {
        sglmb::testing::SelftestOptions opt;
        opt.mutate = mutate;
        const bool ok = sglmb::testing::print_selftest(std::cout, sglmb::testing::run_selftest(opt));
        std::cout << (ok ? "selftest passed" : "selftest FAILED") << '\n';
        return ok ? 0 : 2;
    }

    sglmb::Scenario s;
    try {
        if (!config_path.empty()) s = sglmb::load_scenario(read_file(config_path));
    } catch (const std::exception& e) {
        std::cerr << "sglmb: config error: " << e.what() << '\n';
        return 1;
    }
    if (trials > 0) s.montecarlo.trials = trials;
    if (seed >= 0) s.montecarlo.seed = static_cast<std::uint64_t>(seed);
    if (p_t >= 0.0) s.models.spawn.p_t = p_t;
    if (cap > 0) s.filter.cap = static_cast<std::size_t>(cap);
    if (hmax >= 0) s.filter.h_max = static_cast<std::size_t>(hmax);

    if (dump_config) {
        std::cout << sglmb::to_json(s).dump(2) << '\n';
        return 0;
    }

    try {
        const fs::path out(out_dir);
        fs::create_directories(out / "trials");
        if (diagnostics) fs::create_directories(out / "diagnostics");
        if (export_scans) fs::create_directories(out / "scans");

        const auto truth = sglmb::generate_truth(s.truth, s.montecarlo.horizon);
        if (export_truth) open_out(out / "truth.json") << sglmb::truth_to_json(truth).dump(2) << '\n';

        const auto t0 = std::chrono::steady_clock::now();
        int done = 0;
        auto results = sglmb::run_monte_carlo(
            s, truth, s.montecarlo.trials, s.montecarlo.seed, threads, check,
            [&](const sglmb::TrialResult& r) {
                ++done;
                if (!quiet) {
                    std::cerr << "trial " << r.trial << " done in " << r.wall_seconds << " s (" << done << "/"
                              << s.montecarlo.trials << ")\n";
                }
            });
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        {
            auto os = open_out(out / "cardinality.csv");
            sglmb::write_cardinality_csv(os, results, truth);
        }
        {
            auto os = open_out(out / "ospa.csv");
            sglmb::write_ospa_csv(os, results);
        }
        {
            auto os = open_out(out / "ancestry.csv");
            sglmb::write_ancestry_csv(os, results);
        }
        std::size_t violations = 0;
        nlohmann::json trial_meta = nlohmann::json::array();
        for (const auto& r : results) {
            auto os = open_out(out / "trials" / trial_name(r.trial, "csv"));
            sglmb::write_trial_csv(os, r);
            if (diagnostics) {
                auto ds = open_out(out / "diagnostics" / trial_name(r.trial, "jsonl"));
                sglmb::write_diagnostics_jsonl(ds, r);
            }
            if (export_scans) {
                auto ss = open_out(out / "scans" / trial_name(r.trial, "csv"));
                sglmb::write_scans_csv(
                    ss, sglmb::generate_scans(truth, s.models.sensor, s.montecarlo.seed,
                                              static_cast<std::uint64_t>(r.trial)));
            }
            for (const auto& v : r.violations) std::cerr << "sglmb: trial " << r.trial << ": " << v << '\n';
            violations += r.violations.size();
            trial_meta.push_back({{"trial", r.trial},
                                  {"wall_seconds", r.wall_seconds},
                                  {"invariant_violations", r.violations.size()}});
        }

        nlohmann::json meta{
            {"schema_version", kSchemaVersion},
            {"git_hash", SGLMB_GIT_HASH},
            {"config", sglmb::to_json(s)},
            {"seeds",
             {{"master", s.montecarlo.seed},
              {"measurements", "derive_seed(master, measurements, {trial, scan})"},
              {"filter", "derive_seed(master, gibbs, {trial, scan})"}}},
            {"threads", threads},
            {"invariants_checked", check},
            {"invariant_violations", violations},
            {"wall_seconds", wall},
            {"trials", trial_meta},
        };
        open_out(out / "meta.json") << meta.dump(2) << '\n';
        if (!quiet) std::cerr << "wrote " << out.string() << " (" << wall << " s)\n";
        return violations == 0 ? 0 : 3;
    } catch (const std::exception& e) {
        std::cerr << "sglmb: " << e.what() << '\n';
        return 1;
    }
}
