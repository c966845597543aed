// Command-line front end: simulate / estimate / exploit / sweep / selftest.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pnradar/errors.hpp"
#include "pnradar/estimator.hpp"
#include "pnradar/exploit.hpp"
#include "pnradar/harness.hpp"
#include "pnradar/ofdm.hpp"
#include "pnradar/scenario.hpp"

namespace {

using namespace pnradar;

struct GlobalOptions {
    std::uint64_t seed = 0;  // 0 = take the scenario's seed
    int threads = 0;
    std::string profile = "desk";
    std::string scenario_path;
    std::optional<std::string> snr_db, f3db, floop, range, velocity;
    std::optional<bool> pn_free;
};

Scenario resolve_scenario(const GlobalOptions& g) {
    Scenario s;
    if (!g.scenario_path.empty()) {
        s = load_scenario(g.scenario_path);
    } else if (g.profile == "paper") {
        s = Scenario::paper_default();
    } else if (g.profile == "desk") {
        s = Scenario::desk_default();
    } else {
        throw Error("unknown profile '" + g.profile + "'");
    }
    if (g.snr_db) s.snr_db = parse_quantity(*g.snr_db);
    if (g.f3db) s.oscillator.f3db_hz = parse_quantity(*g.f3db);
    if (g.floop) {
        s.oscillator = OscillatorModel::pll(s.oscillator.f3db_hz, parse_quantity(*g.floop));
    }
    if (g.range) s.target.range = parse_quantity(*g.range);
    if (g.velocity) s.target.radial_velocity = parse_quantity(*g.velocity);
    if (g.pn_free) s.run.pn_free = *g.pn_free;
    if (g.seed != 0) s.run.seed = g.seed;
    return s;
}

void add_common(CLI::App* cmd, GlobalOptions& g) {
    cmd->add_option("--scenario", g.scenario_path, "Scenario TOML file");
    cmd->add_option("--seed", g.seed, "Master seed (overrides scenario)");
    cmd->add_option("--threads", g.threads, "OpenMP worker count");
    cmd->add_option("--profile", g.profile, "Built-in scenario when no file given: desk|paper");
    cmd->add_option("--snr-db", g.snr_db, "Override SNR [dB]");
    cmd->add_option("--f3dB", g.f3db, "Override oscillator 3 dB bandwidth (e.g. 200kHz)");
    cmd->add_option("--floop", g.floop, "Override PLL loop bandwidth (switches to PLL)");
    cmd->add_option("--range", g.range, "Override target range [m]");
    cmd->add_option("--velocity", g.velocity, "Override radial velocity [m/s]");
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_pn_sidecar(const std::filesystem::path& path, const Eigen::VectorXd& xi) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(xi.data()),
              static_cast<std::streamsize>(xi.size() * sizeof(double)));
}

Eigen::VectorXd read_pn_sidecar(const std::filesystem::path& path, int expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read PN sidecar " + path.string());
    Eigen::VectorXd xi(expected);
    in.read(reinterpret_cast<char*>(xi.data()),
            static_cast<std::streamsize>(expected * sizeof(double)));
    if (!in) throw IoError("PN sidecar " + path.string() + " too short");
    return xi;
}

int cmd_simulate(const GlobalOptions& g, const std::string& out_path, int pn_index,
                 int noise_index) {
    const Scenario s = resolve_scenario(g);
    const Target target = s.derived_target();
    const NoiseModel noise = s.derived_noise();

    Rng sym_rng = make_stream(s.run.seed, 0, 0, StreamTag::symbols);
    const CMat symbols = generate_symbols(s.frame, sym_rng);
    Rng pn_rng = make_stream(s.run.seed, pn_index, 0, StreamTag::phase_noise);
    Rng noise_rng = make_stream(s.run.seed, noise_index, 0, StreamTag::awgn);
    SynthesisOptions opts;
    opts.pn_free = s.run.pn_free;
    const Observation obs =
        synthesize(symbols, s.frame, target, s.oscillator, noise, pn_rng, noise_rng, opts);
    save_observation(obs, out_path);
    std::cout << "wrote " << out_path << " (N=" << s.frame.n_subcarriers
              << ", M=" << s.frame.n_symbols << ", sigma2=" << fmt(noise.sigma2)
              << ", tau=" << fmt(target.delay_s) << " s)\n";
    if (!target.cp_valid) {
        std::cout << "note: target delay exceeds the CP duration (ambiguous-range regime)\n";
    }
    return 0;
}

int cmd_estimate(const GlobalOptions& g, const std::string& in_path,
                 const std::string& method_name_str, const std::string& out_path) {
    const Scenario s = resolve_scenario(g);
    const Observation obs = load_observation(in_path);
    if (obs.Y.rows() != s.frame.n_subcarriers || obs.Y.cols() != s.frame.n_symbols) {
        throw Error("observation dimensions do not match the scenario frame");
    }
    const auto method = method_from_name(method_name_str);
    if (!method || *method == Method::fft_pn_free) {
        throw Error("estimate method must be fft or map-isaa");
    }
    const double c = s.speed_of_light();
    const GridSpec grid = GridSpec::for_frame(s.frame, s.run.delay_pad, s.run.doppler_pad);

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open " + out_path);
    out << "iter,tau_s,nu,range_m,velocity_mps,objective,cg_iters_pn,converged\n";

    Eigen::VectorXd xi = Eigen::VectorXd::Zero(s.frame.grid_size());
    double tau = 0, nu = 0;
    if (*method == Method::fft) {
        const PeakEstimate peak =
            fft_estimate(obs.Y, obs.X, s.frame, grid, s.run.interpolate);
        tau = peak.tau;
        nu = peak.nu;
        const double objective =
            hybrid_objective(obs.Y, obs.X, s.frame, s.oscillator, obs.sigma2, tau, nu, xi);
        out << "0," << fmt(tau) << ',' << fmt(nu) << ',' << fmt(tau * c / 2) << ','
            << fmt(nu * c / 2) << ',' << fmt(objective) << ",0,1\n";
    } else {
        IsaaOptions opts;
        opts.grid = grid;
        opts.interpolate = s.run.interpolate;
        const IsaaResult res =
            map_isaa(obs.Y, obs.X, s.frame, s.oscillator, obs.sigma2, opts);
        for (size_t i = 0; i < res.trace.iterations.size(); ++i) {
            const IterationRecord& rec = res.trace.iterations[i];
            const bool last = i + 1 == res.trace.iterations.size();
            out << rec.iteration << ',' << fmt(rec.tau) << ',' << fmt(rec.nu) << ','
                << fmt(rec.tau * c / 2) << ',' << fmt(rec.nu * c / 2) << ','
                << fmt(rec.objective) << ',' << rec.cg_iterations << ','
                << (last && res.trace.converged ? 1 : 0) << '\n';
        }
        tau = res.tau;
        nu = res.nu;
        xi = res.xi;
        for (const std::string& note : res.trace.annotations) {
            std::cerr << "note: " << note << "\n";
        }
    }
    write_pn_sidecar(out_path + ".pn.f64", xi);
    std::cout << "tau_hat = " << fmt(tau) << " s (range " << fmt(tau * c / 2) << " m), nu_hat = "
              << fmt(nu) << " (velocity " << fmt(nu * c / 2) << " m/s)\n";
    std::cout << "trace written to " << out_path << ", PN estimate to " << out_path
              << ".pn.f64\n";
    return 0;
}

int cmd_exploit(const GlobalOptions& g, const std::string& in_path, int max_k,
                const std::string& out_path, bool weighted) {
    const Scenario s = resolve_scenario(g);
    const double c = s.speed_of_light();

    // Principal delay: last trace row.
    std::ifstream in(in_path);
    if (!in) throw IoError("cannot open trace " + in_path);
    std::string line, last;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    if (last.empty()) throw IoError("trace " + in_path + " has no rows");
    std::istringstream row(last);
    std::string field;
    std::getline(row, field, ',');  // iter
    std::getline(row, field, ',');
    const double tau_hat = std::stod(field);

    const Eigen::VectorXd xi = read_pn_sidecar(in_path + ".pn.f64", s.frame.grid_size());
    const LagProfile profile = sample_cov_row(xi);
    const auto candidates = ambiguity_candidates(tau_hat, s.frame, max_k);
    const ResolveResult res =
        resolve_ambiguity(profile, s.oscillator, s.frame, candidates, weighted);

    const Target truth = s.derived_target();
    const int true_index =
        static_cast<int>(std::floor(truth.delay_s / s.frame.elementary_duration));

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open " + out_path);
    out << "trial,tau_hat_principal_s,tau_resolved_s,k_selected,correct";
    for (int k = 0; k <= max_k; ++k) out << ",dist_k" << k;
    out << "\n0," << fmt(tau_hat) << ',' << fmt(res.tau) << ',' << res.selected_index << ','
        << (res.selected_index == true_index ? 1 : 0);
    for (double d : res.distances) out << ',' << fmt(d);
    out << '\n';

    std::cout << "resolved delay " << fmt(res.tau) << " s (range " << fmt(res.tau * c / 2)
              << " m), ambiguity index " << res.selected_index << "\n";
    return 0;
}

int cmd_sweep(const GlobalOptions& g, const std::string& axis, const std::string& values_csv,
              const std::string& out_path, int pn_draws, int noise_draws,
              const std::string& methods_csv, bool exploit, int max_k) {
    SweepPlan plan;
    plan.base = resolve_scenario(g);
    if (exploit) plan.base.run.exploit = true;
    if (max_k >= 0) plan.base.run.max_ambiguity = max_k;
    plan.axis = axis;
    plan.seed = plan.base.run.seed;
    plan.trials.pn_draws = pn_draws > 0 ? pn_draws : plan.base.run.pn_draws;
    plan.trials.noise_draws = noise_draws > 0 ? noise_draws : plan.base.run.noise_draws;

    std::stringstream vals(values_csv);
    std::string item;
    while (std::getline(vals, item, ',')) {
        if (!item.empty()) plan.values.push_back(parse_quantity(item));
    }
    if (!methods_csv.empty()) {
        plan.methods.clear();
        std::stringstream ms(methods_csv);
        while (std::getline(ms, item, ',')) {
            const auto method = method_from_name(item);
            if (!method) throw Error("unknown method '" + item + "'");
            plan.methods.push_back(*method);
        }
    }

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open " + out_path);
    run_sweep(plan, out);
    std::cout << "sweep written to " << out_path << "\n";
    return 0;
}

int cmd_selftest(std::uint64_t seed) {
    const SelftestReport report = run_selftest(seed ? seed : 20240901);
    for (const SelftestSuite& suite : report.suites) {
        std::printf("%-28s %4d passed %4d failed\n", suite.name.c_str(), suite.passed,
                    suite.failed);
    }
    std::printf("selftest: %s (%d failures)\n", report.ok() ? "OK" : "FAILED",
                report.total_failed());
    return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OFDM monostatic radar simulation under oscillator phase noise"};
    app.require_subcommand(1);

    GlobalOptions g;

    auto* simulate = app.add_subcommand("simulate", "Synthesize one observation file");
    add_common(simulate, g);
    std::string sim_out = "observation.bin";
    int pn_index = 0, noise_index = 0;
    simulate->add_option("--out", sim_out, "Output observation file");
    simulate->add_option("--pn-index", pn_index, "PN realization index");
    simulate->add_option("--noise-index", noise_index, "Noise realization index");

    auto* estimate = app.add_subcommand("estimate", "Run delay-Doppler estimation");
    add_common(estimate, g);
    std::string est_in, est_method = "map-isaa", est_out = "trace.csv";
    estimate->add_option("--in", est_in, "Observation file")->required();
    estimate->add_option("--method", est_method, "fft | map-isaa");
    estimate->add_option("--out", est_out, "Trace CSV output");

    auto* exploit = app.add_subcommand("exploit", "Resolve range ambiguity from a trace");
    add_common(exploit, g);
    std::string exp_in, exp_out = "resolution.csv";
    int exp_k = 1;
    bool exp_weighted = false;
    exploit->add_option("--in", exp_in, "Trace CSV from estimate")->required();
    exploit->add_option("--K", exp_k, "Maximum ambiguity index");
    exploit->add_option("--out", exp_out, "Resolution CSV output");
    exploit->add_flag("--weighted", exp_weighted, "Weight lags by averaging count");

    auto* sweep = app.add_subcommand("sweep", "Monte Carlo parameter sweep");
    add_common(sweep, g);
    std::string sweep_axis = "snr_db", sweep_values, sweep_out = "sweep.csv",
                sweep_methods;
    int sweep_pn = 0, sweep_noise = 0, sweep_k = -1;
    bool sweep_exploit = false;
    sweep->add_option("--axis", sweep_axis, "snr_db | f3dB | floop | range_m");
    sweep->add_option("--values", sweep_values, "Comma-separated axis values")->required();
    sweep->add_option("--out", sweep_out, "Sweep CSV output");
    sweep->add_option("--pn-draws", sweep_pn, "PN realizations per point");
    sweep->add_option("--noise-draws", sweep_noise, "Noise realizations per point");
    sweep->add_option("--methods", sweep_methods, "Methods (default fft,fft-pn-free,map-isaa)");
    sweep->add_flag("--exploit", sweep_exploit, "Run ambiguity resolution per trial");
    sweep->add_option("--K", sweep_k, "Maximum ambiguity index for --exploit");

    auto* selftest = app.add_subcommand("selftest", "Run the equivalence/identity suites");
    selftest->add_option("--seed", g.seed, "Selftest seed");
    selftest->add_option("--threads", g.threads, "OpenMP worker count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (g.threads > 0) omp_set_num_threads(g.threads);
        if (simulate->parsed()) return cmd_simulate(g, sim_out, pn_index, noise_index);
        if (estimate->parsed()) return cmd_estimate(g, est_in, est_method, est_out);
        if (exploit->parsed()) return cmd_exploit(g, exp_in, exp_k, exp_out, exp_weighted);
        if (sweep->parsed()) {
            return cmd_sweep(g, sweep_axis, sweep_values, sweep_out, sweep_pn, sweep_noise,
                             sweep_methods, sweep_exploit, sweep_k);
        }
        if (selftest->parsed()) return cmd_selftest(g.seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
