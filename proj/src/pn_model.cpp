#include "pnradar/pn_model.hpp"

#include <cmath>
#include <span>

#include "pnradar/errors.hpp"
#include "pnradar/fft.hpp"

namespace pnradar {

double dpn_variance(const OscillatorModel& osc, double tau) {
    const double a = std::abs(tau);
    if (osc.kind == OscillatorKind::fro) {
        return 4.0 * kPi * osc.f3db_hz * a;
    }
    // -expm1 keeps the floop -> 0 limit accurate.
    return -(2.0 * osc.f3db_hz / osc.floop_hz) * std::expm1(-2.0 * kPi * osc.floop_hz * a);
}

double dpn_correlation(const OscillatorModel& osc, double dt, double tau) {
    if (osc.kind == OscillatorKind::fro) {
        // Closed form of the general expression below; exact cancellation
        // beyond |dt| >= |tau| is load-bearing (block-diagonal covariance).
        return 4.0 * kPi * osc.f3db_hz * std::max(std::abs(tau) - std::abs(dt), 0.0);
    }
    return 0.5 * (dpn_variance(osc, tau + dt) + dpn_variance(osc, tau - dt)) -
           dpn_variance(osc, dt);
}

TbtCovariance build_covariance(const OscillatorModel& osc, const FrameConfig& frame, double tau,
                               const BlockPolicy& policy) {
    if (tau < 0) throw Error("build_covariance: tau must be >= 0");
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    TbtCovariance cov;
    cov.frame = frame;
    cov.osc = osc;
    cov.tau = tau;
    cov.block_generators.resize(m);
    for (int blk = 0; blk < m; ++blk) {
        Eigen::VectorXd g(2 * n - 1);
        for (int k = -(n - 1); k <= n - 1; ++k) {
            const double dt = k * frame.sample_interval - blk * frame.total_symbol_duration;
            g[k + n - 1] = dpn_correlation(osc, dt, tau);
        }
        cov.block_generators[blk] = std::move(g);
    }

    // M0: smallest m such that every block from m on falls below
    // eps_block * g0[0]; <= admits the all-zero tau = 0 case.
    const double threshold = policy.eps_block * cov.block_generators[0][n - 1];
    std::vector<double> maxabs(m);
    for (int blk = 0; blk < m; ++blk) {
        maxabs[blk] = cov.block_generators[blk].cwiseAbs().maxCoeff();
    }
    int m0 = m;
    double tail = 0.0;
    for (int blk = m - 1; blk >= 1; --blk) {
        tail = std::max(tail, maxabs[blk]);
        if (tail <= threshold) m0 = blk;
    }
    cov.n_dominant_blocks = std::max(1, std::min(m0, m));
    return cov;
}

Eigen::MatrixXd materialize_dense(const TbtCovariance& cov) {
    const int n = cov.block_size();
    const int m = cov.n_blocks();
    const int nm = n * m;
    if (nm > kDenseGuard) {
        throw TooLarge("materialize_dense: NM = " + std::to_string(nm) + " exceeds guard");
    }
    // Entry (i1, i2) from the flat-index lag (i1-i2)*Ts + (m1-m2)*Tcp, which
    // reduces to (n1-n2)*Ts + (m1-m2)*Tsym.
    Eigen::MatrixXd r(nm, nm);
#pragma omp parallel for schedule(static)
    for (int i2 = 0; i2 < nm; ++i2) {
        const int m2 = i2 / n;
        for (int i1 = 0; i1 < nm; ++i1) {
            const int m1 = i1 / n;
            const double dt =
                (i1 - i2) * cov.frame.sample_interval + (m1 - m2) * cov.frame.cp_duration;
            r(i1, i2) = dpn_correlation(cov.osc, dt, cov.tau);
        }
    }
    return r;
}

namespace {

/// Runs the jitter ladder over an attempt callback; returns the jitter that
/// succeeded or throws CholeskyFailure.
double run_jitter_ladder(double scale, const std::function<bool(double)>& attempt) {
    for (double rel : kJitterLadder) {
        const double jitter = rel * scale;
        if (attempt(jitter)) return jitter;
    }
    throw CholeskyFailure("covariance factorization failed after jitter ladder");
}

}  // namespace

PnSampler::PnSampler(const TbtCovariance& cov) {
    const int nm = cov.size();
    if (cov.diag_value() == 0.0) {
        zero_ = true;
        factor_ = Eigen::MatrixXd::Zero(nm, nm);
        return;
    }
    Eigen::MatrixXd dense = materialize_dense(cov);
    Eigen::LLT<Eigen::MatrixXd> llt;
    jitter_ = run_jitter_ladder(cov.diag_value(), [&](double jitter) {
        Eigen::MatrixXd shifted = dense;
        shifted.diagonal().array() += jitter;
        llt.compute(shifted);
        return llt.info() == Eigen::Success;
    });
    factor_ = llt.matrixL();
}

Eigen::VectorXd PnSampler::draw(Rng& rng) const {
    const int nm = size();
    if (zero_) return Eigen::VectorXd::Zero(nm);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(nm);
    for (int i = 0; i < nm; ++i) z[i] = normal(rng);
    return factor_.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd PnSampler::draw_many(Rng& rng, int count) const {
    const int nm = size();
    if (zero_) return Eigen::MatrixXd::Zero(nm, count);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(nm, count);
    for (int c = 0; c < count; ++c) {
        for (int i = 0; i < nm; ++i) z(i, c) = normal(rng);
    }
    return factor_.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd sample_pn(const TbtCovariance& cov, Rng& rng) {
    return PnSampler(cov).draw(rng);
}

TbtOperator::TbtOperator(const TbtCovariance& cov, MatvecMode mode, int m0_override,
                         double jitter)
    : n_(cov.block_size()),
      m_(cov.n_blocks()),
      m0_(m0_override > 0 ? std::min(m0_override, cov.n_blocks()) : cov.n_dominant_blocks),
      mode_(mode),
      jitter_(jitter) {
    using Cplx = std::complex<double>;
    const int n = n_;
    embed_ = (mode == MatvecMode::exact) ? 2 * n : n;
    spectra_.resize(m0_);
    std::vector<Cplx> col(embed_), spec(embed_);
    for (int blk = 0; blk < m0_; ++blk) {
        const Eigen::VectorXd& g = cov.block_generators[blk];
        auto gen = [&](int k) { return g[k + n - 1]; };
        if (mode == MatvecMode::exact) {
            // Circulant embedding of size 2N: exact Toeplitz product.
            for (int j = 0; j < n; ++j) col[j] = gen(j);
            col[n] = 0.0;
            for (int j = n + 1; j < 2 * n; ++j) col[j] = gen(j - 2 * n);
        } else {
            // Frobenius-optimal circulant approximation.
            col[0] = gen(0);
            for (int k = 1; k < n; ++k) {
                col[k] = ((n - k) * gen(k) + k * gen(k - n)) / static_cast<double>(n);
            }
        }
        fftutil::forward(col, spec);
        spectra_[blk] = Eigen::Map<Eigen::VectorXcd>(spec.data(), embed_);
    }

    // Block-0 best-circulant eigenvalues for preconditioning, clamped SPD.
    {
        const Eigen::VectorXd& g = cov.block_generators[0];
        auto gen = [&](int k) { return g[k + n - 1]; };
        std::vector<Cplx> c0(n), s0(n);
        c0[0] = gen(0) + jitter_;
        for (int k = 1; k < n; ++k) {
            c0[k] = ((n - k) * gen(k) + k * gen(k - n)) / static_cast<double>(n);
        }
        fftutil::forward(c0, s0);
        precond_inv_.resize(n);
        double lmax = 0.0;
        for (int k = 0; k < n; ++k) lmax = std::max(lmax, s0[k].real());
        if (lmax <= 0.0) {
            precond_inv_.setOnes();
        } else {
            for (int k = 0; k < n; ++k) {
                precond_inv_[k] = 1.0 / std::max(s0[k].real(), 1e-10 * lmax);
            }
        }
    }
}

void TbtOperator::apply(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    using Cplx = std::complex<double>;
    const int n = n_, m = m_, e = embed_;
    out.resize(n * m);

    // FFT of every padded input block once, then accumulate spectra per
    // output block and inverse-transform. Transposed blocks use the
    // conjugate spectrum (real generators).
    std::vector<Eigen::VectorXcd> in_hat(m);
#pragma omp parallel
    {
        std::vector<Cplx> buf(e), tmp(e);
#pragma omp for schedule(static)
        for (int blk = 0; blk < m; ++blk) {
            for (int j = 0; j < n; ++j) buf[j] = in[blk * n + j];
            for (int j = n; j < e; ++j) buf[j] = 0.0;
            Eigen::VectorXcd hat(e);
            fftutil::forward(buf, std::span<Cplx>(hat.data(), e));
            in_hat[blk] = std::move(hat);
        }

#pragma omp for schedule(static)
        for (int row = 0; row < m; ++row) {
            Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(e);
            for (int col = std::max(0, row - m0_ + 1); col <= std::min(m - 1, row + m0_ - 1);
                 ++col) {
                const int d = row - col;
                if (d >= 0) {
                    // Lower triangle: R_d^T, conjugate spectrum.
                    acc.array() += spectra_[d].conjugate().array() * in_hat[col].array();
                } else {
                    acc.array() += spectra_[-d].array() * in_hat[col].array();
                }
            }
            fftutil::backward(std::span<const Cplx>(acc.data(), e), tmp);
            const double scale = 1.0 / e;
            for (int j = 0; j < n; ++j) out[row * n + j] = tmp[j].real() * scale;
        }
    }
    if (jitter_ != 0.0) out += jitter_ * in;
}

Eigen::VectorXd TbtOperator::apply(const Eigen::VectorXd& in) const {
    Eigen::VectorXd out;
    apply(in, out);
    return out;
}

void TbtOperator::precondition(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    using Cplx = std::complex<double>;
    const int n = n_, m = m_;
    out.resize(n * m);
    std::vector<Cplx> buf(n), hat(n);
    for (int blk = 0; blk < m; ++blk) {
        for (int j = 0; j < n; ++j) buf[j] = in[blk * n + j];
        fftutil::forward(buf, hat);
        for (int j = 0; j < n; ++j) hat[j] *= precond_inv_[j];
        fftutil::backward(std::span<const Cplx>(hat.data(), n), buf);
        const double scale = 1.0 / n;
        for (int j = 0; j < n; ++j) out[blk * n + j] = buf[j].real() * scale;
    }
}

Eigen::VectorXd tbt_matvec(const TbtCovariance& cov, const Eigen::VectorXd& v, MatvecMode mode,
                           int m0_override) {
    if (v.size() != cov.size()) throw Error("tbt_matvec: size mismatch");
    return TbtOperator(cov, mode, m0_override).apply(v);
}

CgResult cg_solve(const LinOp& apply, const Eigen::VectorXd& b, const CgOptions& opts,
                  const LinOp& precondition) {
    CgResult result;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        result.x = Eigen::VectorXd::Zero(b.size());
        result.converged = true;
        return result;
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = b;
    Eigen::VectorXd z(b.size());
    if (precondition) {
        precondition(r, z);
    } else {
        z = r;
    }
    Eigen::VectorXd p = z;
    Eigen::VectorXd ap(b.size());
    double rz = r.dot(z);

    double best_res = r.norm() / bnorm;
    Eigen::VectorXd best_x = x;

    int it = 0;
    double res = best_res;
    for (; it < opts.max_iter; ++it) {
        apply(p, ap);
        const double pap = p.dot(ap);
        if (pap <= 0.0 || !std::isfinite(pap)) break;  // loss of positive definiteness
        const double alpha = rz / pap;
        x += alpha * p;
        r -= alpha * ap;
        res = r.norm() / bnorm;
        if (res < best_res) {
            best_res = res;
            best_x = x;
        }
        if (res <= opts.tol) {
            ++it;
            break;
        }
        if (precondition) {
            precondition(r, z);
        } else {
            z = r;
        }
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }

    if (opts.track_best) {
        result.x = std::move(best_x);
        result.residual = best_res;
    } else {
        result.x = std::move(x);
        result.residual = res;
    }
    result.iterations = it;
    result.converged = best_res <= opts.tol;
    return result;
}

bool BlockBandedCholesky::factor_once(const TbtCovariance& cov, double jitter) {
    const int n = n_;
    const int m = m_;
    const int p = band_;

    auto band_block = [&](int k) {
        // Block (m, m-k) of R for k in [0, p]: R_k^T with generator g_k.
        Eigen::MatrixXd b(n, n);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) b(r, c) = cov.generator(k, c - r);
        }
        if (k == 0) b.diagonal().array() += jitter;
        return b;
    };

    log_det_ = 0.0;
    if (p == 0) {
        // Block diagonal with identical blocks: factor R_0 once.
        Eigen::LLT<Eigen::MatrixXd> llt(band_block(0));
        if (llt.info() != Eigen::Success) return false;
        blocks_.assign(1, {Eigen::MatrixXd(llt.matrixL())});
        log_det_ = 2.0 * m * blocks_[0][0].diagonal().array().log().sum();
        return true;
    }

    std::vector<Eigen::MatrixXd> band(p + 1);
    for (int k = 0; k <= p; ++k) band[k] = band_block(k);

    blocks_.assign(m, std::vector<Eigen::MatrixXd>());
    for (int row = 0; row < m; ++row) blocks_[row].resize(std::min(row, p) + 1);

    for (int col = 0; col < m; ++col) {
        Eigen::MatrixXd s = band[0];
        for (int k = 1; k <= std::min(col, p); ++k) {
            s.noalias() -= blocks_[col][k] * blocks_[col][k].transpose();
        }
        Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success) return false;
        blocks_[col][0] = llt.matrixL();
        log_det_ += 2.0 * blocks_[col][0].diagonal().array().log().sum();

        for (int row = col + 1; row <= std::min(col + p, m - 1); ++row) {
            Eigen::MatrixXd t = band[row - col];
            for (int c = std::max(0, row - p); c < col; ++c) {
                t.noalias() -= blocks_[row][row - c] * blocks_[col][col - c].transpose();
            }
            // L(row, col) = t * L(col, col)^{-T}
            blocks_[col][0]
                .triangularView<Eigen::Lower>()
                .transpose()
                .solveInPlace<Eigen::OnTheRight>(t);
            blocks_[row][row - col] = std::move(t);
        }
    }
    return true;
}

BlockBandedCholesky::BlockBandedCholesky(const TbtCovariance& cov)
    : n_(cov.block_size()), m_(cov.n_blocks()), band_(cov.n_dominant_blocks - 1) {
    if (cov.diag_value() == 0.0) {
        throw CholeskyFailure("block-banded cholesky: zero covariance (tau = 0)");
    }
    jitter_ = run_jitter_ladder(cov.diag_value(), [&](double j) { return factor_once(cov, j); });
}

Eigen::VectorXd BlockBandedCholesky::solve(const Eigen::VectorXd& b) const {
    const int n = n_, m = m_, p = band_;
    if (b.size() != static_cast<Eigen::Index>(n) * m) {
        throw Error("block-banded solve: size mismatch");
    }
    Eigen::VectorXd y = b;
    auto seg = [&](Eigen::VectorXd& v, int blk) { return v.segment(blk * n, n); };
    auto diag = [&](int blk) -> const Eigen::MatrixXd& {
        return p == 0 ? blocks_[0][0] : blocks_[blk][0];
    };

    // Forward: L y = b.
    for (int row = 0; row < m; ++row) {
        if (p > 0) {
            for (int k = 1; k <= std::min(row, p); ++k) {
                seg(y, row).noalias() -= blocks_[row][k] * seg(y, row - k);
            }
        }
        diag(row).triangularView<Eigen::Lower>().solveInPlace(seg(y, row));
    }
    // Backward: L^T x = y.
    for (int row = m - 1; row >= 0; --row) {
        if (p > 0) {
            for (int k = 1; k <= std::min(m - 1 - row, p); ++k) {
                seg(y, row).noalias() -= blocks_[row + k][k].transpose() * seg(y, row + k);
            }
        }
        diag(row).triangularView<Eigen::Lower>().transpose().solveInPlace(seg(y, row));
    }
    return y;
}

double BlockBandedCholesky::quadratic(const Eigen::VectorXd& v) const {
    return v.dot(solve(v));
}

Eigen::VectorXd BlockBandedCholesky::multiply_l(const Eigen::VectorXd& v) const {
    const int n = n_, m = m_, p = band_;
    Eigen::VectorXd out(static_cast<Eigen::Index>(n) * m);
    for (int row = 0; row < m; ++row) {
        const Eigen::MatrixXd& diag = p == 0 ? blocks_[0][0] : blocks_[row][0];
        out.segment(row * n, n).noalias() =
            diag.triangularView<Eigen::Lower>() * v.segment(row * n, n);
        if (p > 0) {
            for (int k = 1; k <= std::min(row, p); ++k) {
                out.segment(row * n, n).noalias() +=
                    blocks_[row][k] * v.segment((row - k) * n, n);
            }
        }
    }
    return out;
}

Eigen::VectorXd BlockBandedCholesky::multiply_lt(const Eigen::VectorXd& v) const {
    const int n = n_, m = m_, p = band_;
    Eigen::VectorXd out(static_cast<Eigen::Index>(n) * m);
    for (int row = 0; row < m; ++row) {
        const Eigen::MatrixXd& diag = p == 0 ? blocks_[0][0] : blocks_[row][0];
        out.segment(row * n, n).noalias() =
            diag.transpose().triangularView<Eigen::Upper>() * v.segment(row * n, n);
        if (p > 0) {
            for (int k = 1; k <= std::min(m - 1 - row, p); ++k) {
                out.segment(row * n, n).noalias() +=
                    blocks_[row + k][k].transpose() * v.segment((row + k) * n, n);
            }
        }
    }
    return out;
}

Eigen::VectorXd BlockBandedCholesky::forward_solve(const Eigen::VectorXd& b) const {
    const int n = n_, m = m_, p = band_;
    Eigen::VectorXd y = b;
    for (int row = 0; row < m; ++row) {
        if (p > 0) {
            for (int k = 1; k <= std::min(row, p); ++k) {
                y.segment(row * n, n).noalias() -= blocks_[row][k] * y.segment((row - k) * n, n);
            }
        }
        const Eigen::MatrixXd& diag = p == 0 ? blocks_[0][0] : blocks_[row][0];
        diag.triangularView<Eigen::Lower>().solveInPlace(y.segment(row * n, n));
    }
    return y;
}

}  // namespace pnradar
