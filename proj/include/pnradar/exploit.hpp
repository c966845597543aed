#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pnradar/frame.hpp"

namespace pnradar {

/// Empirical lag profile of a PN estimate: entry i averages the NM - i
/// products xi_k * xi_{k+i}.
struct LagProfile {
    Eigen::VectorXd r;  // length NM [rad^2]
};

/// Lag averages via FFT autocorrelation followed by per-lag normalization.
LagProfile sample_cov_row(const Eigen::VectorXd& xi_hat);

/// Unfolds a principal delay estimate into {tau, tau + T, ..., tau + K T}.
/// Throws PrincipalOutOfRange unless 0 <= tau_hat < T.
std::vector<double> ambiguity_candidates(double tau_hat, const FrameConfig& frame, int max_index);

/// Analytic first row of R(tau): entry i2 = n2 + m2*N evaluated at the flat
/// lag -(i2*Ts + m2*Tcp).
Eigen::VectorXd covariance_row0(const OscillatorModel& osc, const FrameConfig& frame, double tau);

struct ResolveResult {
    double tau = 0.0;
    int selected_index = 0;                // k with the best row match
    std::vector<double> distances;         // squared distance per candidate
};

/// Selects the candidate delay whose parametric covariance row best matches
/// the empirical lag profile (least squares; ties go to the smaller delay).
/// The variance-weighted mode scales each lag by its averaging count.
ResolveResult resolve_ambiguity(const LagProfile& profile, const OscillatorModel& osc,
                                const FrameConfig& frame, const std::vector<double>& candidates,
                                bool variance_weighted = false);

}  // namespace pnradar
