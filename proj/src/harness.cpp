#include "pnradar/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "pnradar/errors.hpp"
#include "pnradar/estimator.hpp"
#include "pnradar/exploit.hpp"
#include "pnradar/ofdm.hpp"
#include "pnradar/reference.hpp"

namespace pnradar {

std::string method_name(Method method) {
    switch (method) {
        case Method::fft: return "fft";
        case Method::fft_pn_free: return "fft-pn-free";
        case Method::map_isaa: return "map-isaa";
    }
    return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
    if (name == "fft") return Method::fft;
    if (name == "fft-pn-free" || name == "fft_pn_free") return Method::fft_pn_free;
    if (name == "map-isaa" || name == "map_isaa") return Method::map_isaa;
    return std::nullopt;
}

namespace {

struct TrialScore {
    double range_err = 0.0;
    double velocity_err = 0.0;
    double pn_err_sq = 0.0;
    int iterations = 0;
    bool exploit_correct = false;
    bool failed = false;
};

std::string fmt_g(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

std::vector<MetricsRecord> run_point(const Scenario& scenario,
                                     const std::vector<Method>& methods,
                                     const TrialCounts& trials, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const FrameConfig& frame = scenario.frame;
    const double c = scenario.speed_of_light();
    const Target target = scenario.derived_target();
    const NoiseModel noise = scenario.derived_noise();
    const int nm = frame.grid_size();
    const int total = trials.total();
    const double period = frame.elementary_duration;
    const int true_index = static_cast<int>(std::floor(target.delay_s / period));

    Rng sym_rng = make_stream(seed, 0, 0, StreamTag::symbols);
    const CMat symbols = generate_symbols(frame, sym_rng);
    const CVec q = q_vector(symbols, frame, target.delay_s, target.doppler_norm);
    const CMat clean =
        target.gain * Eigen::Map<const CMat>(q.data(), frame.n_subcarriers, frame.n_symbols);

    std::optional<PnSampler> sampler;
    if (!scenario.run.pn_free) {
        sampler.emplace(build_covariance(scenario.oscillator, frame, target.delay_s));
    }

    GridSpec grid = GridSpec::for_frame(frame, scenario.run.delay_pad, scenario.run.doppler_pad);
    IsaaOptions iopts;
    iopts.grid = grid;
    iopts.interpolate = scenario.run.interpolate;

    const bool need_pn_free =
        std::find(methods.begin(), methods.end(), Method::fft_pn_free) != methods.end();
    const bool need_isaa =
        std::find(methods.begin(), methods.end(), Method::map_isaa) != methods.end();
    const Eigen::VectorXd zero_xi = Eigen::VectorXd::Zero(nm);

    std::vector<std::vector<TrialScore>> scores(methods.size(),
                                                std::vector<TrialScore>(total));

#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < total; ++t) {
        const int pn_index = t / trials.noise_draws;
        const int noise_index = t % trials.noise_draws;
        try {
            Eigen::VectorXd xi_true = zero_xi;
            if (sampler) {
                Rng pn_rng = make_stream(seed, pn_index, 0, StreamTag::phase_noise);
                xi_true = sampler->draw(pn_rng);
            }
            Rng noise_rng = make_stream(seed, noise_index, 0, StreamTag::awgn);
            const CMat y = apply_pn_and_noise(clean, xi_true, noise.sigma2, noise_rng);
            CMat y_pn_free;
            if (need_pn_free) {
                Rng noise_rng2 = make_stream(seed, noise_index, 0, StreamTag::awgn);
                y_pn_free = apply_pn_and_noise(clean, zero_xi, noise.sigma2, noise_rng2);
            }

            PeakEstimate fft_peak;
            bool have_fft_peak = false;
            IsaaResult isaa;
            if (need_isaa) {
                isaa = map_isaa(y, symbols, frame, scenario.oscillator, noise.sigma2, iopts);
            }

            for (size_t mi = 0; mi < methods.size(); ++mi) {
                TrialScore& score = scores[mi][t];
                double tau_est = 0.0, nu_est = 0.0;
                const Eigen::VectorXd* xi_est = &zero_xi;
                switch (methods[mi]) {
                    case Method::fft: {
                        if (!have_fft_peak) {
                            fft_peak = fft_estimate(y, symbols, frame, grid,
                                                    scenario.run.interpolate);
                            have_fft_peak = true;
                        }
                        tau_est = fft_peak.tau;
                        nu_est = fft_peak.nu;
                        break;
                    }
                    case Method::fft_pn_free: {
                        const PeakEstimate peak = fft_estimate(y_pn_free, symbols, frame, grid,
                                                               scenario.run.interpolate);
                        tau_est = peak.tau;
                        nu_est = peak.nu;
                        break;
                    }
                    case Method::map_isaa: {
                        tau_est = isaa.tau;
                        nu_est = isaa.nu;
                        xi_est = &isaa.xi;
                        score.iterations =
                            static_cast<int>(isaa.trace.iterations.size()) - 1;
                        break;
                    }
                }

                double tau_for_range = tau_est;
                if (scenario.run.exploit) {
                    if (methods[mi] == Method::map_isaa) {
                        const LagProfile profile = sample_cov_row(*xi_est);
                        const auto candidates = ambiguity_candidates(
                            tau_est, frame, scenario.run.max_ambiguity);
                        const ResolveResult resolved = resolve_ambiguity(
                            profile, scenario.oscillator, frame, candidates);
                        tau_for_range = resolved.tau;
                        score.exploit_correct = resolved.selected_index == true_index;
                    } else {
                        // FFT estimates carry delay information only through
                        // b(tau): always the principal interval.
                        score.exploit_correct = true_index == 0;
                    }
                }

                score.range_err = tau_for_range * c / 2.0 - target.range_m;
                score.velocity_err = nu_est * c / 2.0 - target.radial_velocity_mps;
                score.pn_err_sq = (*xi_est - xi_true).squaredNorm();
            }
        } catch (const std::exception&) {
            for (size_t mi = 0; mi < methods.size(); ++mi) scores[mi][t].failed = true;
        }
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::vector<MetricsRecord> records;
    records.reserve(methods.size());
    for (size_t mi = 0; mi < methods.size(); ++mi) {
        MetricsRecord rec;
        rec.method = methods[mi];
        rec.trials = total;
        rec.wall_seconds = wall;
        double range_sq = 0.0, vel_sq = 0.0, pn_sq = 0.0, iters = 0.0;
        int ok = 0, correct = 0;
        for (const TrialScore& s : scores[mi]) {
            if (s.failed) {
                ++rec.failures;
                continue;
            }
            ++ok;
            range_sq += s.range_err * s.range_err;
            vel_sq += s.velocity_err * s.velocity_err;
            pn_sq += s.pn_err_sq;
            iters += s.iterations;
            correct += s.exploit_correct ? 1 : 0;
        }
        if (ok > 0) {
            rec.range_rmse_m = std::sqrt(range_sq / ok);
            rec.velocity_rmse_mps = std::sqrt(vel_sq / ok);
            rec.pn_rmse_rad = std::sqrt(pn_sq / (static_cast<double>(nm) * ok));
            rec.mean_iterations = iters / ok;
            if (scenario.run.exploit) rec.success_rate = static_cast<double>(correct) / ok;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

Scenario apply_axis(const Scenario& base, const std::string& axis, double value) {
    Scenario s = base;
    if (axis == "snr_db") {
        s.snr_db = value;
        s.sigma2.reset();
    } else if (axis == "f3dB" || axis == "f3db") {
        s.oscillator.f3db_hz = value;
    } else if (axis == "floop") {
        if (s.oscillator.kind != OscillatorKind::pll) {
            throw Error("sweep axis floop requires a PLL oscillator");
        }
        s.oscillator.floop_hz = value;
    } else if (axis == "range_m" || axis == "range") {
        s.target.range = value;
    } else {
        throw Error("unknown sweep axis '" + axis + "'");
    }
    return s;
}

const char* const kSweepCsvHeader =
    "axis_name,axis_value,method,range_rmse_m,velocity_rmse_mps,pn_rmse_rad,success_rate,"
    "mean_iters,trials,failures";

std::string metrics_csv_row(const MetricsRecord& r) {
    std::ostringstream out;
    out << r.axis_name << ',' << fmt_g(r.axis_value) << ',' << method_name(r.method) << ','
        << fmt_g(r.range_rmse_m) << ',' << fmt_g(r.velocity_rmse_mps) << ','
        << fmt_g(r.pn_rmse_rad) << ',' << (r.success_rate ? fmt_g(*r.success_rate) : "") << ','
        << fmt_g(r.mean_iterations) << ',' << r.trials << ',' << r.failures;
    return out.str();
}

namespace {

std::uint64_t fnv1a(const std::string& data) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char ch : data) {
        hash ^= ch;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string point_cache_key(const SweepPlan& plan, double value) {
    char buf[64];
    std::ostringstream key;
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g;", v);
        key << buf;
    };
    const Scenario& b = plan.base;
    key << plan.axis << ';';
    put(value);
    for (Method m : plan.methods) key << method_name(m) << ';';
    key << plan.trials.pn_draws << ';' << plan.trials.noise_draws << ';' << plan.seed << ';';
    key << b.frame.n_subcarriers << ';' << b.frame.n_symbols << ';';
    put(b.frame.subcarrier_spacing);
    put(b.frame.cp_duration);
    put(b.frame.carrier_frequency);
    key << (b.oscillator.kind == OscillatorKind::fro ? "fro" : "pll") << ';';
    put(b.oscillator.f3db_hz);
    put(b.oscillator.floop_hz);
    put(b.target.range);
    put(b.target.radial_velocity);
    put(b.target.gain.real());
    put(b.target.gain.imag());
    put(b.snr_db);
    key << b.run.pn_free << ';' << b.run.exploit << ';' << b.run.max_ambiguity << ';'
        << b.run.delay_pad << ';' << b.run.doppler_pad << ';' << b.run.interpolate << ';';
    put(b.run.c_override);
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(key.str())));
    return buf;
}

}  // namespace

void run_sweep(const SweepPlan& plan, std::ostream& csv,
               std::optional<std::filesystem::path> cache_dir) {
    if (!cache_dir) {
        if (const char* env = std::getenv("PNRADAR_CACHE_DIR"); env && *env) {
            cache_dir = std::filesystem::path(env);
        }
    }
    if (cache_dir) std::filesystem::create_directories(*cache_dir);

    std::vector<double> values = plan.values;
    std::sort(values.begin(), values.end());

    csv << kSweepCsvHeader << '\n';
    csv.flush();
    for (double value : values) {
        std::filesystem::path cache_file;
        if (cache_dir) {
            cache_file = *cache_dir / ("pnradar_point_" + point_cache_key(plan, value) + ".csv");
            if (std::ifstream in(cache_file); in) {
                std::string line;
                while (std::getline(in, line)) {
                    if (!line.empty()) csv << line << '\n';
                }
                csv.flush();
                continue;
            }
        }

        const Scenario scenario = apply_axis(plan.base, plan.axis, value);
        const std::uint64_t point_seed =
            derive_seed(plan.seed, fnv1a(plan.axis), fnv1a(fmt_g(value)), StreamTag::generic);
        std::vector<MetricsRecord> records =
            run_point(scenario, plan.methods, plan.trials, point_seed);

        std::ostringstream rows;
        for (MetricsRecord& rec : records) {
            rec.axis_name = plan.axis;
            rec.axis_value = value;
            rows << metrics_csv_row(rec) << '\n';
        }
        csv << rows.str();
        csv.flush();  // partial results survive interruption
        if (cache_dir) {
            std::ofstream out(cache_file);
            out << rows.str();
        }
    }
}

bool SelftestReport::ok() const { return total_failed() == 0; }

int SelftestReport::total_failed() const {
    int failed = 0;
    for (const auto& suite : suites) failed += suite.failed;
    return failed;
}

namespace {

FrameConfig toy_frame(int n, int m) {
    FrameParams p;
    p.n_subcarriers = n;
    p.n_symbols = m;
    p.subcarrier_spacing = 50e6 / n;
    p.cp_duration = n / 50e6 / 4.0;
    p.carrier_frequency = 28e9;
    return make_frame(p);
}

struct SuiteRunner {
    SelftestSuite suite;
    void check(bool ok) { ok ? ++suite.passed : ++suite.failed; }
};

}  // namespace

SelftestReport run_selftest(std::uint64_t seed) {
    SelftestReport report;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    {  // PN statistics: closed forms, evenness, PLL -> FRO limit
        SuiteRunner s{{"pn-statistics"}};
        const OscillatorModel fro = OscillatorModel::free_running(200e3);
        for (int i = 0; i < 200; ++i) {
            const double tau = uniform(rng) * 4e-6;
            const double dt = (uniform(rng) * 2 - 1) * 8e-6;
            // variance-difference route vs the closed-form implementation
            const double lemma = 0.5 * (dpn_variance(fro, tau + dt) +
                                        dpn_variance(fro, tau - dt)) -
                                 dpn_variance(fro, dt);
            const double closed = dpn_correlation(fro, dt, tau);
            const double scale = std::max(dpn_variance(fro, tau), 1e-30);
            s.check(std::abs(lemma - closed) <= 1e-12 * scale);
            s.check(dpn_correlation(fro, -dt, tau) == closed);
        }
        const OscillatorModel slow_pll = OscillatorModel::pll(150e3, 1.0);
        for (int i = 0; i < 50; ++i) {
            const double tau = uniform(rng) * 1e-5;
            const double pll_var = dpn_variance(slow_pll, tau);
            const double fro_var = 4.0 * kPi * slow_pll.f3db_hz * tau;
            s.check(std::abs(pll_var - fro_var) <= 1e-4 * std::max(fro_var, 1e-30));
        }
        report.suites.push_back(s.suite);
    }

    {  // fast TBT matvec against the dense materialization
        SuiteRunner s{{"dense-vs-fast-matvec"}};
        for (int i = 0; i < 25; ++i) {
            const int n = 4 + static_cast<int>(uniform(rng) * 12);
            const int m = 1 + static_cast<int>(uniform(rng) * 3);
            const FrameConfig frame = toy_frame(n, m);
            const OscillatorModel osc = (i % 2 == 0)
                                            ? OscillatorModel::free_running(100e3)
                                            : OscillatorModel::pll(100e3, 300e3);
            const double tau = uniform(rng) * 2.0 * frame.cp_duration;
            const TbtCovariance cov = build_covariance(osc, frame, tau);
            const Eigen::MatrixXd dense = materialize_dense(cov);
            Eigen::VectorXd v(n * m);
            for (int k = 0; k < n * m; ++k) v[k] = normal(rng);
            const Eigen::VectorXd fast = tbt_matvec(cov, v, MatvecMode::exact, m);
            const Eigen::VectorXd ref = dense * v;
            s.check((fast - ref).norm() <= 1e-10 * std::max(1.0, ref.norm()));
        }
        report.suites.push_back(s.suite);
    }

    {  // CG against dense solves
        SuiteRunner s{{"cg-solver"}};
        for (int i = 0; i < 20; ++i) {
            const int n = 8 + static_cast<int>(uniform(rng) * 8);
            const FrameConfig frame = toy_frame(n, 2);
            const OscillatorModel osc = OscillatorModel::pll(100e3, 500e3);
            const double tau = (0.2 + uniform(rng)) * frame.cp_duration;
            const TbtCovariance cov = build_covariance(osc, frame, tau);
            const double jitter = 1e-10 * cov.diag_value();
            TbtOperator op(cov, MatvecMode::exact, cov.n_blocks(), jitter);
            Eigen::VectorXd b(2 * n);
            for (int k = 0; k < 2 * n; ++k) b[k] = normal(rng);
            const CgResult cg = cg_solve(
                [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) { op.apply(in, out); }, b,
                CgOptions{1e-10, 400},
                [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
                    op.precondition(in, out);
                });
            Eigen::MatrixXd dense = materialize_dense(cov);
            dense.diagonal().array() += jitter;
            const Eigen::VectorXd ref = dense.ldlt().solve(b);
            s.check((cg.x - ref).norm() <= 1e-6 * std::max(1.0, ref.norm()));
        }
        report.suites.push_back(s.suite);
    }

    {  // steering / q-vector kernels
        SuiteRunner s{{"q-vector"}};
        for (int i = 0; i < 20; ++i) {
            const int n = 4 + static_cast<int>(uniform(rng) * 12);
            const int m = 1 + static_cast<int>(uniform(rng) * 4);
            const FrameConfig frame = toy_frame(n, m);
            const CMat x = generate_symbols(frame, rng);
            const double tau = uniform(rng) * frame.elementary_duration;
            const double nu = (uniform(rng) * 2 - 1) * frame.doppler_period() / 4;
            const CVec fast = q_vector(x, frame, tau, nu);
            const CVec ref = reference::q_vector_naive(x, frame, tau, nu);
            s.check((fast - ref).norm() <= 1e-9 * ref.norm());
            s.check(std::abs(fast.squaredNorm() - x.squaredNorm()) <=
                    1e-9 * x.squaredNorm());
        }
        report.suites.push_back(s.suite);
    }

    {  // FFT profile against the steering-vector loop
        SuiteRunner s{{"fft-profile"}};
        for (int i = 0; i < 6; ++i) {
            const int n = 8, m = 4;
            const FrameConfig frame = toy_frame(n, m);
            GridSpec grid;
            grid.delay_bins = 16;
            grid.doppler_bins = 8;
            CMat y(n, m), what(n, m);
            const CMat x = generate_symbols(frame, rng);
            for (int j = 0; j < m; ++j) {
                for (int k = 0; k < n; ++k) {
                    y(k, j) = Cplx(normal(rng), normal(rng));
                    what(k, j) = std::polar(1.0, normal(rng));
                }
            }
            const Eigen::MatrixXd fast = fft_profile(y, x, frame, what, grid);
            const Eigen::MatrixXd ref = reference::profile_naive(y, x, frame, what, grid);
            s.check((fast - ref).norm() <= 1e-9 * std::max(1.0, ref.norm()));
        }
        report.suites.push_back(s.suite);
    }

    {  // projector factorization identity
        SuiteRunner s{{"projector-identity"}};
        for (int i = 0; i < 30; ++i) {
            const int n = 8, m = 2, nm = n * m;
            const FrameConfig frame = toy_frame(n, m);
            const CMat x = generate_symbols(frame, rng);
            const double tau = uniform(rng) * frame.elementary_duration;
            const double nu = (uniform(rng) * 2 - 1) * frame.doppler_period() / 4;
            const CVec q = q_vector(x, frame, tau, nu);
            Eigen::VectorXd xi(nm);
            for (int k = 0; k < nm; ++k) xi[k] = normal(rng);
            CVec v(nm);
            for (int k = 0; k < nm; ++k) v[k] = Cplx(normal(rng), normal(rng));

            CVec w(nm);
            for (int k = 0; k < nm; ++k) w[k] = std::polar(1.0, -xi[k]);
            // Xi Pq_perp Xi^H v
            CVec t = w.conjugate().cwiseProduct(v);
            t -= q * (q.dot(t) / q.squaredNorm());
            const CVec lhs = w.cwiseProduct(t);
            // Pq'_perp v with q' = Xi q
            const CVec xq = w.cwiseProduct(q);
            const CVec rhs = v - xq * (xq.dot(v) / xq.squaredNorm());
            s.check((lhs - rhs).norm() <= 1e-10 * std::max(1.0, rhs.norm()));
        }
        report.suites.push_back(s.suite);
    }

    {  // real/imag quadratic form lemmas for Hermitian matrices
        SuiteRunner s{{"hermitian-lemmas"}};
        for (int i = 0; i < 50; ++i) {
            const int n = 2 + static_cast<int>(uniform(rng) * 14);
            Eigen::MatrixXcd a(n, n);
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c) a(r, c) = Cplx(normal(rng), normal(rng));
            }
            a = ((a + a.adjoint()) / 2).eval();
            Eigen::VectorXd xr(n), yr(n);
            for (int k = 0; k < n; ++k) {
                xr[k] = normal(rng);
                yr[k] = normal(rng);
            }
            const Cplx quad = xr.cast<Cplx>().transpose() * a * xr.cast<Cplx>();
            const double real_quad = xr.transpose() * a.real() * xr;
            s.check(std::abs(quad - Cplx(real_quad, 0.0)) <= 1e-12 * std::max(1.0, real_quad));

            const Cplx xay = xr.cast<Cplx>().transpose() * a * yr.cast<Cplx>();
            const Cplx yax = yr.cast<Cplx>().transpose() * a * xr.cast<Cplx>();
            const Cplx lhs = Cplx(0.0, 1.0) * (xay - yax);
            const double rhs = 2.0 * yr.transpose() * a.imag() * xr;
            s.check(std::abs(lhs - Cplx(rhs, 0.0)) <= 1e-12 * std::max(1.0, std::abs(rhs)));
        }
        report.suites.push_back(s.suite);
    }

    {  // delay-Doppler update route equivalence
        SuiteRunner s{{"update-equivalence"}};
        for (int i = 0; i < 5; ++i) {
            const int n = 8, m = 2;
            const FrameConfig frame = toy_frame(n, m);
            const OscillatorModel osc = OscillatorModel::pll(100e3, 500e3);
            GridSpec grid;
            grid.delay_bins = 16;
            grid.doppler_bins = 8;
            const CMat x = generate_symbols(frame, rng);
            Rng trial_rng(derive_seed(seed, 100 + i, 0, StreamTag::generic));
            const Target target =
                target_params(uniform(rng) * 500.0, uniform(rng) * 30.0, {1.0, 0.0}, frame);
            const NoiseModel noise = noise_from_snr(15.0, {1.0, 0.0});
            const Observation obs =
                synthesize(x, frame, target, osc, noise, trial_rng, trial_rng);
            Eigen::VectorXd xi(n * m);
            for (int k = 0; k < n * m; ++k) xi[k] = 0.1 * normal(rng);
            const EquivalenceReport rep =
                appendix_equivalence_check(obs.Y, x, frame, osc, noise.sigma2, xi, grid);
            s.check(rep.agree);
        }
        report.suites.push_back(s.suite);
    }

    {  // FFT lag profile against the direct loop
        SuiteRunner s{{"lag-profile"}};
        for (int i = 0; i < 20; ++i) {
            const int nm = 8 + static_cast<int>(uniform(rng) * 56);
            Eigen::VectorXd xi(nm);
            for (int k = 0; k < nm; ++k) xi[k] = normal(rng);
            const LagProfile fast = sample_cov_row(xi);
            const Eigen::VectorXd ref = reference::lag_profile_naive(xi);
            s.check((fast.r - ref).norm() <= 1e-12 * std::max(1.0, ref.norm()));
        }
        report.suites.push_back(s.suite);
    }

    {  // structured residual PN update against the dense forms
        SuiteRunner s{{"residual-update"}};
        for (int i = 0; i < 6; ++i) {
            const int n = 8, m = 2;
            const FrameConfig frame = toy_frame(n, m);
            const OscillatorModel osc = (i % 2 == 0)
                                            ? OscillatorModel::free_running(150e3)
                                            : OscillatorModel::pll(150e3, 400e3);
            const CMat x = generate_symbols(frame, rng);
            Rng trial_rng(derive_seed(seed, 300 + i, 0, StreamTag::generic));
            const Target target = target_params(40.0 + 10 * i, 15.0, {1.0, 0.0}, frame);
            const NoiseModel noise = noise_from_snr(15.0, {1.0, 0.0});
            const Observation obs =
                synthesize(x, frame, target, osc, noise, trial_rng, trial_rng);
            Eigen::VectorXd xi(n * m);
            for (int k = 0; k < n * m; ++k) xi[k] = 0.05 * normal(rng);

            PnUpdateOptions opts;
            opts.cg.tol = 1e-12;
            opts.cg.max_iter = 600;
            const PnUpdateResult fast = residual_pn_update(
                obs.Y, x, frame, osc, noise.sigma2, target.delay_s, target.doppler_norm, xi,
                opts);
            const Eigen::VectorXd dense = reference::residual_pn_update_dense(
                obs.Y, x, frame, osc, noise.sigma2, target.delay_s, target.doppler_norm, xi);
            const Eigen::VectorXd quad = reference::quadratic_minimizer_dense(
                obs.Y, x, frame, osc, noise.sigma2, target.delay_s, target.doppler_norm, xi);
            s.check((fast.xi_delta - dense).norm() <= 1e-6 * std::max(1.0, dense.norm()));
            s.check((fast.xi_delta - quad).norm() <= 1e-6 * std::max(1.0, quad.norm()));
        }
        report.suites.push_back(s.suite);
    }

    return report;
}

}  // namespace pnradar
