#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <memory>
#include <vector>

#include "pnradar/frame.hpp"
#include "pnradar/rng.hpp"

namespace pnradar {

/// Variance of the differential phase-noise increment over a lag tau [rad^2].
/// FRO: 4*pi*f3dB*|tau|.  PLL: (2*f3dB/floop)*(1 - exp(-2*pi*floop*|tau|)).
/// Even in tau and nonnegative.
double dpn_variance(const OscillatorModel& osc, double tau);

/// Correlation of the differential PN process at time lag dt for target
/// delay tau:
///   [sigma2(tau+dt) + sigma2(tau-dt)]/2 - sigma2(dt).
/// Even in dt; equals dpn_variance at dt = 0. For FRO this reduces to the
/// closed form 4*pi*f3dB*max(tau - |dt|, 0).
double dpn_correlation(const OscillatorModel& osc, double dt, double tau);

struct BlockPolicy {
    /// A block counts as dominant until every later block's generator drops
    /// below eps_block * g0[0] in magnitude.
    double eps_block = 1e-6;
};

/// Generator representation of the symmetric Toeplitz-block-Toeplitz PN
/// covariance R(tau): M block generators of length 2N-1.
/// block_generators[m][k + N - 1] holds the correlation at lag k*Ts - m*Tsym
/// for k in [-(N-1), N-1]. Ordering of the NM-vector it describes is
/// fast-time-major: i = n + m*N.
struct TbtCovariance {
    FrameConfig frame;
    OscillatorModel osc;
    double tau = 0.0;
    std::vector<Eigen::VectorXd> block_generators;
    int n_dominant_blocks = 1;  // M0

    int block_size() const { return frame.n_subcarriers; }
    int n_blocks() const { return frame.n_symbols; }
    int size() const { return frame.grid_size(); }
    /// Diagonal value sigma_xi^2(tau) = g0[0].
    double diag_value() const { return block_generators[0][frame.n_subcarriers - 1]; }
    /// Generator entry of block m at lag k (k in [-(N-1), N-1]).
    double generator(int m, int k) const {
        return block_generators[m][k + frame.n_subcarriers - 1];
    }
};

TbtCovariance build_covariance(const OscillatorModel& osc, const FrameConfig& frame, double tau,
                               const BlockPolicy& policy = {});

inline constexpr int kDenseGuard = 8192;

/// Dense NM x NM materialization, entry (i1,i2) evaluated independently from
/// the flat-index lag of the frame layout. Test oracle for the generator
/// representation; throws TooLarge above kDenseGuard.
Eigen::MatrixXd materialize_dense(const TbtCovariance& cov);

/// Jitter ladder used before declaring a Cholesky factorization failed,
/// relative to g0[0].
inline constexpr double kJitterLadder[] = {0.0, 1e-12, 1e-10, 1e-8};

/// Samples xi ~ N(0, R(tau)) through a dense Cholesky factor of the
/// materialized covariance (factored once, reusable across draws).
/// A zero covariance (tau = 0) yields exact zero vectors.
class PnSampler {
public:
    explicit PnSampler(const TbtCovariance& cov);

    Eigen::VectorXd draw(Rng& rng) const;
    /// One draw per column; statistically identical to repeated draw() but
    /// evaluated as a single matrix product.
    Eigen::MatrixXd draw_many(Rng& rng, int count) const;

    double jitter() const { return jitter_; }
    int size() const { return static_cast<int>(factor_.rows()); }

private:
    Eigen::MatrixXd factor_;  // lower-triangular L
    double jitter_ = 0.0;
    bool zero_ = false;
};

/// One-shot convenience around PnSampler.
Eigen::VectorXd sample_pn(const TbtCovariance& cov, Rng& rng);

enum class MatvecMode {
    /// Size-2N circulant embedding of each Toeplitz block; exact.
    exact,
    /// The best (Frobenius-optimal) size-N circulant approximation per block.
    best_circulant,
};

/// Fast R(tau) matvec using only the M0 dominant blocks; each Toeplitz block
/// product runs in O(N log N) via FFT.
class TbtOperator {
public:
    TbtOperator(const TbtCovariance& cov, MatvecMode mode = MatvecMode::exact,
                int m0_override = 0, double jitter = 0.0);

    void apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& in) const;

    /// Block-circulant approximate inverse built from block 0; SPD, intended
    /// as a CG preconditioner.
    void precondition(const Eigen::VectorXd& in, Eigen::VectorXd& out) const;
    bool has_preconditioner() const { return precond_inv_.size() > 0; }

    int size() const { return n_ * m_; }
    int dominant_blocks() const { return m0_; }
    double jitter() const { return jitter_; }

private:
    int n_ = 0, m_ = 0, m0_ = 1, embed_ = 0;
    MatvecMode mode_;
    double jitter_ = 0.0;
    std::vector<Eigen::VectorXcd> spectra_;  // per dominant block
    Eigen::VectorXd precond_inv_;            // inverse circulant eigenvalues of block 0
};

/// Convenience wrapper: R(tau) * v.
Eigen::VectorXd tbt_matvec(const TbtCovariance& cov, const Eigen::VectorXd& v,
                           MatvecMode mode = MatvecMode::exact, int m0_override = 0);

using LinOp = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct CgOptions {
    double tol = 1e-8;  // relative residual
    int max_iter = 200;
    /// Return the iterate with the smallest residual (default) or the last
    /// one. On an SPD system the last iterate minimizes the quadratic over
    /// the Krylov space even when the residual tolerance was not met.
    bool track_best = true;
};

struct CgResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double residual = 0.0;  // final relative residual
    bool converged = false;
};

/// Preconditioned conjugate gradient on a symmetric positive definite
/// operator. Never throws on stagnation: the best iterate and its residual
/// are always returned, converged marks whether tol was met.
CgResult cg_solve(const LinOp& apply, const Eigen::VectorXd& b, const CgOptions& opts = {},
                  const LinOp& precondition = nullptr);

/// Cholesky factorization of the M0-truncated block-banded covariance.
/// Supplies log-det and direct solves for the MAP penalty terms. The FRO
/// block-diagonal case (M0 = 1) stores a single N x N factor.
class BlockBandedCholesky {
public:
    explicit BlockBandedCholesky(const TbtCovariance& cov);

    double log_det() const { return log_det_; }
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    double quadratic(const Eigen::VectorXd& v) const;  // v^T R^{-1} v
    Eigen::VectorXd multiply_l(const Eigen::VectorXd& v) const;        // L v
    Eigen::VectorXd multiply_lt(const Eigen::VectorXd& v) const;       // L^T v
    Eigen::VectorXd forward_solve(const Eigen::VectorXd& b) const;     // L^{-1} b
    double jitter() const { return jitter_; }

private:
    bool factor_once(const TbtCovariance& cov, double jitter);

    int n_ = 0, m_ = 0, band_ = 0;  // band_ = M0 - 1
    double log_det_ = 0.0;
    double jitter_ = 0.0;
    // blocks_[m][k] is the factor block L(m, m-k), k = 0 diagonal.
    std::vector<std::vector<Eigen::MatrixXd>> blocks_;
};

}  // namespace pnradar
