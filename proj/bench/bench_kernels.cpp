// Timing comparison between the serial reference kernels and the
// FFT/OpenMP fast paths, plus thread scaling of the Monte Carlo driver.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>

#include "pnradar/estimator.hpp"
#include "pnradar/exploit.hpp"
#include "pnradar/harness.hpp"
#include "pnradar/ofdm.hpp"
#include "pnradar/reference.hpp"

using namespace pnradar;

namespace {

double time_of(const std::function<void()>& fn, int repeats) {
    fn();  // warm-up (FFT plans, caches)
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count() / repeats;
}

void report(const char* name, double reference_s, double fast_s) {
    std::printf("%-34s reference %10.4f ms   fast %10.4f ms   speedup %6.1fx\n", name,
                reference_s * 1e3, fast_s * 1e3, reference_s / fast_s);
}

FrameConfig bench_frame(int n, int m) {
    FrameParams p;
    p.n_subcarriers = n;
    p.n_symbols = m;
    p.subcarrier_spacing = 50e6 / n;
    p.cp_duration = n / 50e6 / 4.0;
    p.carrier_frequency = 28e9;
    return make_frame(p);
}

}  // namespace

int main() {
    Rng rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);

    {
        const FrameConfig frame = bench_frame(256, 10);
        const OscillatorModel osc = OscillatorModel::pll(200e3, 1e6);
        const TbtCovariance cov = build_covariance(osc, frame, 2e-7);
        const Eigen::MatrixXd dense = materialize_dense(cov);
        Eigen::VectorXd v(cov.size());
        for (int i = 0; i < cov.size(); ++i) v[i] = normal(rng);
        const TbtOperator op(cov, MatvecMode::exact, cov.n_blocks());
        Eigen::VectorXd out(cov.size());
        const double t_ref = time_of([&] { out.noalias() = dense * v; }, 20);
        const double t_fast = time_of([&] { op.apply(v, out); }, 20);
        report("tbt matvec (N=256, M=10, M0=M)", t_ref, t_fast);
    }

    {
        const FrameConfig frame = bench_frame(64, 8);
        Rng local(11);
        const CMat x = generate_symbols(frame, local);
        CMat y(64, 8), what(64, 8);
        for (int j = 0; j < 8; ++j) {
            for (int i = 0; i < 64; ++i) {
                y(i, j) = Cplx(normal(local), normal(local));
                what(i, j) = std::polar(1.0, 0.3 * normal(local));
            }
        }
        const GridSpec grid = GridSpec::for_frame(frame);
        Eigen::MatrixXd map;
        const double t_ref =
            time_of([&] { map = reference::profile_naive(y, x, frame, what, grid); }, 2);
        const double t_fast = time_of([&] { map = fft_profile(y, x, frame, what, grid); }, 20);
        report("delay-Doppler profile (N=64, M=8)", t_ref, t_fast);
    }

    {
        Eigen::VectorXd xi(2560);
        for (int i = 0; i < xi.size(); ++i) xi[i] = normal(rng);
        Eigen::VectorXd ref;
        LagProfile fast;
        const double t_ref = time_of([&] { ref = reference::lag_profile_naive(xi); }, 5);
        const double t_fast = time_of([&] { fast = sample_cov_row(xi); }, 20);
        report("lag profile (NM=2560)", t_ref, t_fast);
    }

    {
        Scenario s = Scenario::desk_default();
        s.run.pn_draws = 4;
        s.run.noise_draws = 4;
        const std::vector<Method> methods{Method::fft, Method::map_isaa};
        const TrialCounts trials{4, 4};
        const int max_threads = omp_get_max_threads();
        omp_set_num_threads(1);
        const double t1 = time_of([&] { run_point(s, methods, trials, 3); }, 1);
        omp_set_num_threads(max_threads);
        const double tn = time_of([&] { run_point(s, methods, trials, 3); }, 1);
        std::printf("%-34s 1 thread %9.1f ms   %d threads %9.1f ms   speedup %5.2fx\n",
                    "run_point (desk, 16 trials)", t1 * 1e3, max_threads, tn * 1e3, t1 / tn);
    }

    return 0;
}
