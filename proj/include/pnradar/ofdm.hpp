#pragma once

#include <Eigen/Dense>
#include <complex>
#include <filesystem>
#include <optional>

#include "pnradar/frame.hpp"
#include "pnradar/pn_model.hpp"
#include "pnradar/rng.hpp"

namespace pnradar {

using Cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Frequency-domain steering vector b(tau)[n] = exp(-j 2 pi n delta_f tau).
CVec delay_steering(const FrameConfig& frame, double tau);

/// Slow-time steering vector c(nu)[m] = exp(-j 2 pi fc m Tsym nu).
CVec doppler_steering(const FrameConfig& frame, double nu);

/// q(tau, nu) = vec(F_N^H [X .* b(tau) c^H(nu)]), column-major, unitary IDFT
/// per column. ||q||^2 = ||X||_F^2.
CVec q_vector(const CMat& symbols, const FrameConfig& frame, double tau, double nu);

/// i.i.d. uniform QPSK symbols {(+-1 +- j)/sqrt(2)}, N x M.
CMat generate_symbols(const FrameConfig& frame, Rng& rng);

/// Ground truth attached to synthetic observations for scoring.
struct Truth {
    Target target;
    Eigen::VectorXd xi;  // sampled PN vector (fast-time-major)
};

struct Observation {
    CMat Y;  // fast-time/slow-time observations, N x M
    CMat X;  // known transmit symbols
    double sigma2 = 0.0;
    std::optional<Truth> truth;
};

struct SynthesisOptions {
    bool pn_free = false;  // emit the ideal-oscillator model (W = all-ones)
};

/// Draws xi from R(tau), forms Y = alpha * W .* unvec(q) + Z with W =
/// unvec(exp(-j xi)) and per-entry complex noise variance 2 sigma^2.
/// Separate PN and noise streams keep Monte Carlo cross products exact.
Observation synthesize(const CMat& symbols, const FrameConfig& frame, const Target& target,
                       const OscillatorModel& osc, const NoiseModel& noise, Rng& pn_rng,
                       Rng& noise_rng, const SynthesisOptions& opts = {});

/// Convenience overload: one stream drives symbols, PN and noise in order.
Observation synthesize(const FrameConfig& frame, const Target& target,
                       const OscillatorModel& osc, const NoiseModel& noise, Rng& rng,
                       const SynthesisOptions& opts = {});

/// Applies exp(-j xi) elementwise as the multiplicative PN matrix and adds
/// noise drawn from noise_rng; reusable pieces for the harness which shares
/// one noise draw across the PN-impaired and PN-free observations.
CMat apply_pn_and_noise(const CMat& clean, const Eigen::VectorXd& xi, double sigma2,
                        Rng& noise_rng);

/// Flat binary observation file: little-endian u32 N, u32 M, f64 sigma2,
/// then row-major re/im-interleaved f64 for Y, then X.
void save_observation(const Observation& obs, const std::filesystem::path& path);
Observation load_observation(const std::filesystem::path& path);

}  // namespace pnradar
