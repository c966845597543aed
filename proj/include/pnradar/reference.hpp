#pragma once

#include <Eigen/Dense>

#include "pnradar/estimator.hpp"
#include "pnradar/ofdm.hpp"
#include "pnradar/pn_model.hpp"

/// Serial reference implementations of the fast kernels. These stay
/// independent of the FFT/structured code paths they are used to check, and
/// back the selftest suite and the benchmark comparisons.
namespace pnradar::reference {

/// Per-entry evaluation of q(tau, nu), O(N^2 M).
CVec q_vector_naive(const CMat& symbols, const FrameConfig& frame, double tau, double nu);

/// Steering-vector double loop over the whole grid, O(grid * NM).
Eigen::MatrixXd profile_naive(const CMat& Y, const CMat& X, const FrameConfig& frame,
                              const CMat& W_hat, const GridSpec& grid);

/// Direct double-loop lag averages.
Eigen::VectorXd lag_profile_naive(const Eigen::VectorXd& xi);

/// Dense Gamma matrix from its definition (projector route).
Eigen::MatrixXcd gamma_dense(const CMat& Y, const CMat& X, const FrameConfig& frame,
                             const Eigen::VectorXd& xi_hat, double tau, double nu);

/// Dense evaluation of the closed-form residual PN update.
Eigen::VectorXd residual_pn_update_dense(const CMat& Y, const CMat& X, const FrameConfig& frame,
                                         const OscillatorModel& osc, double sigma2, double tau,
                                         double nu, const Eigen::VectorXd& xi_hat);

/// Minimizer of the quadratic surrogate objective solved by normal
/// equations; independent route to the same update.
Eigen::VectorXd quadratic_minimizer_dense(const CMat& Y, const CMat& X, const FrameConfig& frame,
                                          const OscillatorModel& osc, double sigma2, double tau,
                                          double nu, const Eigen::VectorXd& xi_hat);

/// Monte Carlo estimate of the differential-PN correlation from discretized
/// Wiener phase trajectories (rate 4 pi f3dB), the generative route that the
/// closed-form correlation must match.
struct WienerCorrelationEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};
WienerCorrelationEstimate wiener_dpn_correlation(double f3db_hz, double dt_step, int lag_steps,
                                                 int tau_steps, int n_paths, Rng& rng);

}  // namespace pnradar::reference
