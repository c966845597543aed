#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pnradar/ofdm.hpp"
#include "pnradar/pn_model.hpp"

namespace pnradar {

/// Uniform delay-Doppler search grid. Delay axis spans [0, T) with
/// delay_bins points (pad * N maps bins onto zero-padded DFT bins); the
/// Doppler axis spans one unambiguous period, reported back as signed values
/// centered on zero.
struct GridSpec {
    int delay_bins = 0;
    int doppler_bins = 0;
    double delay_window_min = 0.0;  // restriction window, [min, max) in seconds
    double delay_window_max = 0.0;  // 0 = no restriction

    static GridSpec for_frame(const FrameConfig& frame, int delay_pad = 4, int doppler_pad = 4);

    double delay_at(const FrameConfig& frame, double bin) const {
        return bin * frame.elementary_duration / delay_bins;
    }
    /// Signed Doppler for a (possibly fractional) bin index, wrapped into
    /// [-period/2, period/2).
    double doppler_at(const FrameConfig& frame, double bin) const;
    bool delay_allowed(const FrameConfig& frame, int bin) const;
};

/// Delay-Doppler map of the compensated matched-filter statistic
///   map[d,k] = | b^H(tau_d) (X^* .* F_N (W_hat^* .* Y)) c(nu_k) |^2
/// evaluated with zero-padded FFTs along both axes. W_hat = all-ones gives
/// the plain 2-D FFT statistic.
Eigen::MatrixXd fft_profile(const CMat& Y, const CMat& X, const FrameConfig& frame,
                            const CMat& W_hat, const GridSpec& grid);

struct PeakEstimate {
    double tau = 0.0;
    double nu = 0.0;
    int delay_bin = 0;
    int doppler_bin = 0;
    double value = 0.0;
};

/// Peak of a precomputed profile, ties broken toward the lowest delay bin
/// then lowest Doppler bin, with optional one-step parabolic interpolation
/// per axis.
PeakEstimate profile_peak(const Eigen::MatrixXd& map, const FrameConfig& frame,
                          const GridSpec& grid, bool interpolate = true);

/// Standard 2-D FFT estimate (W_hat = all-ones).
PeakEstimate fft_estimate(const CMat& Y, const CMat& X, const FrameConfig& frame,
                          const GridSpec& grid, bool interpolate = true);

/// Closed-form gain estimate q^H(tau, nu) Xi^H y / ||X||_F^2.
Cplx alpha_hat(const CMat& Y, const CMat& X, const FrameConfig& frame, double tau, double nu,
               const Eigen::VectorXd& xi);

/// Hybrid ML/MAP objective
///   y^H Xi Pq_perp Xi^H y / sigma^2 + xi^T R(tau)^{-1} xi + log det R(tau)
/// with the penalty evaluated through a dense jittered Cholesky. Diagnostic
/// oracle; dense and slow by design.
double hybrid_objective(const CMat& Y, const CMat& X, const FrameConfig& frame,
                        const OscillatorModel& osc, double sigma2, double tau, double nu,
                        const Eigen::VectorXd& xi);

enum class GammaPart { real, imag };

/// Diagonal-plus-rank-one application of Re{Gamma} or Im{Gamma} without
/// materializing the NM x NM matrix:
///   Gamma = diag(|y|^2) - u u^H / ||X||_F^2,  u = y^* .* e^{-j xi} .* q.
class GammaOperator {
public:
    GammaOperator(const CVec& y, const CVec& q, const Eigen::VectorXd& xi_hat, double xnorm2);

    void apply_real(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;
    void apply_imag(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;
    /// Im{Gamma} * 1 in closed form.
    Eigen::VectorXd imag_times_one() const;

private:
    CVec u_;
    Eigen::VectorXd y2_;
    double xnorm2_ = 0.0;
};

/// Free-function form: applies Re/Im of Gamma(tau, nu) at the given PN
/// estimate to a vector in O(NM).
Eigen::VectorXd gamma_apply(const CMat& Y, const CMat& X, const FrameConfig& frame,
                            const Eigen::VectorXd& xi_hat, double tau, double nu, GammaPart part,
                            const Eigen::VectorXd& v);

struct PnUpdateOptions {
    CgOptions cg;                 // shared by the prior solve and inner solve
    MatvecMode matvec_mode = MatvecMode::exact;
    double operator_jitter_rel = 1e-12;  // added to R(tau) in iterative solves
};

struct PnUpdateResult {
    Eigen::VectorXd xi_delta;
    int cg_iterations_prior = 0;  // R^{-1} xi_hat stage
    int cg_iterations_inner = 0;  // (Re{Gamma} R + sigma^2 I)^{-1} stage
    bool converged = true;
    bool used_symmetrized_fallback = false;  // plain CG stalled
};

/// Closed-form residual PN update
///   xi_delta = -R (Re{Gamma} R + sigma^2 I)^{-1} (Im{Gamma} 1 + sigma^2 R^{-1} xi_hat)
/// evaluated in four structured stages (CG + fast matvecs). The inner
/// operator is nonsymmetric; plain CG is attempted first. If it stalls, the
/// system is symmetrized through the block-banded Cholesky factor R = L L^T
/// as (L^T Re{Gamma} L + sigma^2 I) z = L^T rhs with xi_delta = -L z, whose
/// SPD CG iterates descend the update's quadratic objective even when
/// truncated.
PnUpdateResult residual_pn_update(const CMat& Y, const CMat& X, const FrameConfig& frame,
                                  const OscillatorModel& osc, double sigma2, double tau,
                                  double nu, const Eigen::VectorXd& xi_hat,
                                  const PnUpdateOptions& opts = {});

struct IsaaOptions {
    double eps_tau = 0.0;  // 0 = Ts/100
    double eps_nu = 0.0;   // 0 = 1 cm/s velocity tolerance
    int max_iterations = 20;
    int top_peaks = 8;     // delay candidates receiving the MAP penalty
    bool interpolate = true;
    /// Continuous within-bin refinement of each delay-Doppler update on the
    /// exact steering statistic (the update is a full maximization, not a
    /// grid read-off).
    bool polish = true;
    std::optional<GridSpec> grid;
    PnUpdateOptions pn;
};

struct IterationRecord {
    int iteration = 0;
    double tau = 0.0;
    double nu = 0.0;
    Eigen::VectorXd xi;
    double objective = 0.0;
    int cg_iterations = 0;
    bool cg_converged = true;
};

struct EstimateTrace {
    std::vector<IterationRecord> iterations;
    bool converged = false;
    int monotonicity_violations = 0;
    std::vector<std::string> annotations;
};

struct IsaaResult {
    double tau = 0.0;
    double nu = 0.0;
    Eigen::VectorXd xi;
    Cplx alpha{0.0, 0.0};
    EstimateTrace trace;
};

/// Algorithm: joint delay-Doppler-PN estimation by alternating closed-form
/// residual PN updates with FFT-based delay-Doppler updates; the MAP penalty
/// (quadratic prior + log-det, M0-truncated) is evaluated on the top-P
/// delay candidates. Returns the best iterate by objective value.
IsaaResult map_isaa(const CMat& Y, const CMat& X, const FrameConfig& frame,
                    const OscillatorModel& osc, double sigma2, const IsaaOptions& opts = {});

struct EquivalenceReport {
    bool agree = false;
    int argmin_delay = 0, argmin_doppler = 0;
    int argmax_delay = 0, argmax_doppler = 0;
    double objective_gap = 0.0;  // |L difference| between the two selections
};

/// Verifies on a small instance that the grid argmin of the full objective
/// equals the grid argmax of the FFT-form statistic minus the penalty
/// (the two routes of the delay-Doppler update).
EquivalenceReport appendix_equivalence_check(const CMat& Y, const CMat& X,
                                             const FrameConfig& frame,
                                             const OscillatorModel& osc, double sigma2,
                                             const Eigen::VectorXd& xi_hat,
                                             const GridSpec& grid);

}  // namespace pnradar
