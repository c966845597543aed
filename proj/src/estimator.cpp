#include "pnradar/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "pnradar/errors.hpp"
#include "pnradar/fft.hpp"

namespace pnradar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Map<const CVec> as_vector(const CMat& m) {
    return Eigen::Map<const CVec>(m.data(), m.size());
}

double wrap_delay(double tau, double period) {
    double t = std::fmod(tau, period);
    if (t < 0) t += period;
    return t;
}

double wrap_doppler(double nu, double period) {
    double v = std::fmod(nu, period);
    if (v < 0) v += period;
    if (v >= period / 2) v -= period;
    return v;
}

/// Circular distance on the Doppler axis.
double doppler_distance(double a, double b, double period) {
    double d = std::fmod(std::abs(a - b), period);
    return std::min(d, period - d);
}

double parabolic_offset(double left, double mid, double right) {
    // Fit in the log domain when possible: much smaller bias on the
    // |Dirichlet|^2-shaped mainlobes this sees (0.004 vs 0.016 bins worst
    // case at 4x padding).
    if (left > 0.0 && mid > 0.0 && right > 0.0) {
        left = std::log(left);
        mid = std::log(mid);
        right = std::log(right);
    }
    const double denom = left - 2.0 * mid + right;
    if (!(denom < 0.0)) return 0.0;  // peak not locally concave
    double delta = 0.5 * (left - right) / denom;
    if (!(std::abs(delta) <= 0.6)) return 0.0;
    return delta;
}

/// MAP penalty xi^T R(tau)^{-1} xi + log det R(tau) at the M0 truncation,
/// with a small LRU cache of factorizations keyed by exact tau. The zero
/// covariance at tau = 0 gets the limiting convention: +inf for any nonzero
/// xi (prior forbids PN), -inf for xi = 0.
class PenaltyEvaluator {
public:
    PenaltyEvaluator(const OscillatorModel& osc, const FrameConfig& frame, size_t capacity = 12)
        : osc_(osc), frame_(frame), capacity_(capacity) {}

    double operator()(double tau, const Eigen::VectorXd& xi) {
        if (dpn_variance(osc_, tau) == 0.0) {
            return xi.isZero(0.0) ? -kInf : kInf;
        }
        const BlockBandedCholesky& factor = get(tau);
        return factor.quadratic(xi) + factor.log_det();
    }

private:
    const BlockBandedCholesky& get(double tau) {
        for (size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].first == tau) {
                if (i != 0) std::rotate(entries_.begin(), entries_.begin() + i,
                                        entries_.begin() + i + 1);
                return *entries_[0].second;
            }
        }
        auto factor = std::make_shared<BlockBandedCholesky>(build_covariance(osc_, frame_, tau));
        entries_.emplace(entries_.begin(), tau, std::move(factor));
        if (entries_.size() > capacity_) entries_.pop_back();
        return *entries_[0].second;
    }

    OscillatorModel osc_;
    FrameConfig frame_;
    size_t capacity_;
    std::vector<std::pair<double, std::shared_ptr<BlockBandedCholesky>>> entries_;
};

/// First objective term at a continuous (tau, nu):
///   (||u||^2 - |q^H u|^2 / ||X||_F^2) / sigma^2, u = e^{j xi} .* y.
double projector_term(const CVec& u, const CMat& X, const FrameConfig& frame, double sigma2,
                      double tau, double nu, double xnorm2) {
    const CVec q = q_vector(X, frame, tau, nu);
    const Cplx corr = q.dot(u);  // q^H u
    return (u.squaredNorm() - std::norm(corr) / xnorm2) / sigma2;
}

}  // namespace

GridSpec GridSpec::for_frame(const FrameConfig& frame, int delay_pad, int doppler_pad) {
    GridSpec g;
    g.delay_bins = std::max(frame.n_subcarriers * delay_pad, frame.n_subcarriers);
    g.doppler_bins = std::max(frame.n_symbols * doppler_pad, frame.n_symbols);
    return g;
}

double GridSpec::doppler_at(const FrameConfig& frame, double bin) const {
    const double period = frame.doppler_period();
    double nu = std::fmod(bin / doppler_bins, 1.0) * period;
    if (nu < 0) nu += period;
    if (nu >= period / 2) nu -= period;
    return nu;
}

bool GridSpec::delay_allowed(const FrameConfig& frame, int bin) const {
    if (delay_window_max <= delay_window_min) return true;
    const double tau = delay_at(frame, bin);
    return tau >= delay_window_min && tau < delay_window_max;
}

namespace {

/// A = X^* .* F_N (W_hat^* .* Y): the PN-compensated matched-filter matrix
/// whose two-sided steering products form the delay-Doppler statistic.
CMat matched_filter_matrix(const CMat& Y, const CMat& X, const FrameConfig& frame,
                           const CMat& W_hat) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    if (Y.rows() != n || Y.cols() != m || X.rows() != n || X.cols() != m ||
        W_hat.rows() != n || W_hat.cols() != m) {
        throw Error("fft_profile: shape mismatch");
    }
    CMat a(n, m);
    const double unit = 1.0 / std::sqrt(static_cast<double>(n));
#pragma omp parallel
    {
        std::vector<Cplx> buf(n), out(n);
#pragma omp for schedule(static)
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < n; ++i) buf[i] = std::conj(W_hat(i, j)) * Y(i, j);
            fftutil::forward(buf, out);
            for (int i = 0; i < n; ++i) a(i, j) = std::conj(X(i, j)) * out[i] * unit;
        }
    }
    return a;
}

Eigen::MatrixXd profile_from_matrix(const CMat& a, const FrameConfig& frame,
                                    const GridSpec& grid);

}  // namespace

Eigen::MatrixXd fft_profile(const CMat& Y, const CMat& X, const FrameConfig& frame,
                            const CMat& W_hat, const GridSpec& grid) {
    return profile_from_matrix(matched_filter_matrix(Y, X, frame, W_hat), frame, grid);
}

namespace {

Eigen::MatrixXd profile_from_matrix(const CMat& a, const FrameConfig& frame,
                                    const GridSpec& grid) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    const int nd = grid.delay_bins;
    const int mk = grid.doppler_bins;
    if (nd < n || mk < m) throw Error("fft_profile: grid smaller than frame");

    // Delay axis: zero-padded inverse transform (b^H has positive sign).
    CMat g(nd, m);
#pragma omp parallel
    {
        std::vector<Cplx> buf(nd), out(nd);
#pragma omp for schedule(static)
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < n; ++i) buf[i] = a(i, j);
            for (int i = n; i < nd; ++i) buf[i] = 0.0;
            fftutil::backward(buf, out);
            for (int i = 0; i < nd; ++i) g(i, j) = out[i];
        }
    }

    // Doppler axis: zero-padded forward transform of each delay row.
    Eigen::MatrixXd map(nd, mk);
#pragma omp parallel
    {
        std::vector<Cplx> buf(mk), out(mk);
#pragma omp for schedule(static)
        for (int d = 0; d < nd; ++d) {
            for (int j = 0; j < m; ++j) buf[j] = g(d, j);
            for (int j = m; j < mk; ++j) buf[j] = 0.0;
            fftutil::forward(buf, out);
            for (int k = 0; k < mk; ++k) map(d, k) = std::norm(out[k]);
        }
    }
    return map;
}

/// Golden-section maximization of a unimodal 1-D slice.
template <typename Fn>
double golden_max(const Fn& value, double lo, double hi, int iterations = 40) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = value(x1), f2 = value(x2);
    for (int i = 0; i < iterations; ++i) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = value(x1);
        }
    }
    return 0.5 * (a + b);
}

/// Continuous polish of a delay-Doppler peak on the exact steering-vector
/// statistic |b^H(tau) A c(nu)|^2, alternating the two axes within one grid
/// bin of the start point. O(N) per delay evaluation, O(M) per Doppler one.
void polish_peak(const CMat& a, const FrameConfig& frame, const GridSpec& grid, double& tau,
                 double& nu) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    const double tau_bin = frame.elementary_duration / grid.delay_bins;
    const double nu_bin = frame.doppler_period() / grid.doppler_bins;

    for (int round = 0; round < 2; ++round) {
        const CVec ac = a * doppler_steering(frame, nu);
        tau = golden_max(
            [&](double t) {
                Cplx acc(0.0, 0.0);
                for (int i = 0; i < n; ++i) {
                    acc += std::polar(1.0, 2.0 * kPi * i * frame.subcarrier_spacing * t) *
                           ac[i];
                }
                return std::norm(acc);
            },
            tau - tau_bin, tau + tau_bin);

        const CVec bha = a.adjoint() * delay_steering(frame, tau);  // (A^H b)
        nu = golden_max(
            [&](double v) {
                const double step = frame.carrier_frequency * frame.total_symbol_duration * v;
                Cplx acc(0.0, 0.0);
                for (int j = 0; j < m; ++j) {
                    acc += std::conj(bha[j]) * std::polar(1.0, -2.0 * kPi * j * step);
                }
                return std::norm(acc);
            },
            nu - nu_bin, nu + nu_bin);
    }
}

}  // namespace

PeakEstimate profile_peak(const Eigen::MatrixXd& map, const FrameConfig& frame,
                          const GridSpec& grid, bool interpolate) {
    const int nd = static_cast<int>(map.rows());
    const int mk = static_cast<int>(map.cols());
    PeakEstimate peak;
    peak.value = -1.0;
    for (int d = 0; d < nd; ++d) {
        if (!grid.delay_allowed(frame, d)) continue;
        for (int k = 0; k < mk; ++k) {
            if (map(d, k) > peak.value) {
                peak.value = map(d, k);
                peak.delay_bin = d;
                peak.doppler_bin = k;
            }
        }
    }
    if (peak.value < 0) throw Error("profile_peak: empty search window");

    double dbin = peak.delay_bin;
    double kbin = peak.doppler_bin;
    if (interpolate) {
        // Both axes are periodic DFT grids; wrap the neighbors.
        const int d = peak.delay_bin, k = peak.doppler_bin;
        dbin += parabolic_offset(map((d + nd - 1) % nd, k), map(d, k), map((d + 1) % nd, k));
        kbin += parabolic_offset(map(d, (k + mk - 1) % mk), map(d, k), map(d, (k + 1) % mk));
    }
    peak.tau = wrap_delay(grid.delay_at(frame, dbin), frame.elementary_duration);
    peak.nu = grid.doppler_at(frame, kbin);
    return peak;
}

PeakEstimate fft_estimate(const CMat& Y, const CMat& X, const FrameConfig& frame,
                          const GridSpec& grid, bool interpolate) {
    const CMat ones = CMat::Ones(Y.rows(), Y.cols());
    const Eigen::MatrixXd map = fft_profile(Y, X, frame, ones, grid);
    return profile_peak(map, frame, grid, interpolate);
}

Cplx alpha_hat(const CMat& Y, const CMat& X, const FrameConfig& frame, double tau, double nu,
               const Eigen::VectorXd& xi) {
    const CVec q = q_vector(X, frame, tau, nu);
    const auto y = as_vector(Y);
    Cplx acc(0.0, 0.0);
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        acc += std::conj(q[i]) * std::polar(1.0, xi.size() ? xi[i] : 0.0) * y[i];
    }
    return acc / X.squaredNorm();
}

double hybrid_objective(const CMat& Y, const CMat& X, const FrameConfig& frame,
                        const OscillatorModel& osc, double sigma2, double tau, double nu,
                        const Eigen::VectorXd& xi) {
    const auto y = as_vector(Y);
    CVec u(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) u[i] = std::polar(1.0, xi[i]) * y[i];
    const double term1 = projector_term(u, X, frame, sigma2, tau, nu, X.squaredNorm());

    const TbtCovariance cov = build_covariance(osc, frame, tau);
    Eigen::MatrixXd dense = materialize_dense(cov);
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool ok = false;
    for (double rel : kJitterLadder) {
        Eigen::MatrixXd shifted = dense;
        shifted.diagonal().array() += rel * cov.diag_value();
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok) throw CholeskyFailure("hybrid_objective: covariance not factorizable");
    const double quad = xi.dot(llt.solve(xi));
    const double logdet =
        2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return term1 + quad + logdet;
}

GammaOperator::GammaOperator(const CVec& y, const CVec& q, const Eigen::VectorXd& xi_hat,
                             double xnorm2)
    : xnorm2_(xnorm2) {
    const Eigen::Index nm = y.size();
    u_.resize(nm);
    y2_.resize(nm);
    for (Eigen::Index i = 0; i < nm; ++i) {
        const Cplx w = std::polar(1.0, -(xi_hat.size() ? xi_hat[i] : 0.0));
        u_[i] = std::conj(y[i]) * w * q[i];
        y2_[i] = std::norm(y[i]);
    }
}

void GammaOperator::apply_real(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    Cplx s(0.0, 0.0);
    for (Eigen::Index i = 0; i < u_.size(); ++i) s += std::conj(u_[i]) * in[i];
    s /= xnorm2_;
    out = y2_.cwiseProduct(in);
    for (Eigen::Index i = 0; i < u_.size(); ++i) out[i] -= (u_[i] * s).real();
}

void GammaOperator::apply_imag(const Eigen::VectorXd& in, Eigen::VectorXd& out) const {
    Cplx s(0.0, 0.0);
    for (Eigen::Index i = 0; i < u_.size(); ++i) s += std::conj(u_[i]) * in[i];
    s /= xnorm2_;
    out.resize(u_.size());
    for (Eigen::Index i = 0; i < u_.size(); ++i) out[i] = -(u_[i] * s).imag();
}

Eigen::VectorXd GammaOperator::imag_times_one() const {
    Eigen::VectorXd out;
    apply_imag(Eigen::VectorXd::Ones(u_.size()), out);
    return out;
}

Eigen::VectorXd gamma_apply(const CMat& Y, const CMat& X, const FrameConfig& frame,
                            const Eigen::VectorXd& xi_hat, double tau, double nu, GammaPart part,
                            const Eigen::VectorXd& v) {
    const CVec q = q_vector(X, frame, tau, nu);
    const GammaOperator gamma(as_vector(Y), q, xi_hat, X.squaredNorm());
    Eigen::VectorXd out;
    if (part == GammaPart::real) {
        gamma.apply_real(v, out);
    } else {
        gamma.apply_imag(v, out);
    }
    return out;
}

PnUpdateResult residual_pn_update(const CMat& Y, const CMat& X, const FrameConfig& frame,
                                  const OscillatorModel& osc, double sigma2, double tau,
                                  double nu, const Eigen::VectorXd& xi_hat,
                                  const PnUpdateOptions& opts) {
    const Eigen::Index nm = Y.size();
    PnUpdateResult result;

    const TbtCovariance cov = build_covariance(osc, frame, tau);
    if (cov.diag_value() == 0.0) {
        // Zero covariance: the leading R(tau) factor annihilates the update.
        result.xi_delta = Eigen::VectorXd::Zero(nm);
        return result;
    }

    const double jitter = opts.operator_jitter_rel * cov.diag_value();
    const TbtOperator rop(cov, opts.matvec_mode, 0, jitter);
    const LinOp apply_r = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
        rop.apply(in, out);
    };
    const LinOp precond = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
        rop.precondition(in, out);
    };

    // Stage 1: R^{-1} xi_hat by preconditioned CG.
    Eigen::VectorXd prior_solve = Eigen::VectorXd::Zero(nm);
    if (xi_hat.size() && !xi_hat.isZero(0.0)) {
        CgResult cg = cg_solve(apply_r, xi_hat, opts.cg, precond);
        result.cg_iterations_prior = cg.iterations;
        result.converged = cg.converged;
        prior_solve = std::move(cg.x);
    }

    // Stage 2: Im{Gamma} 1 through the diagonal-plus-rank-one form.
    const CVec q = q_vector(X, frame, tau, nu);
    const GammaOperator gamma(as_vector(Y), q, xi_hat, X.squaredNorm());
    const Eigen::VectorXd rhs = gamma.imag_times_one() + sigma2 * prior_solve;

    // Stage 3: (Re{Gamma} R + sigma^2 I)^{-1} rhs. The operator is
    // nonsymmetric (product of two symmetric factors); try plain CG first.
    Eigen::VectorXd tmp(nm);
    const LinOp inner = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
        rop.apply(in, tmp);
        gamma.apply_real(tmp, out);
        out += sigma2 * in;
    };
    CgResult inner_result = cg_solve(inner, rhs, opts.cg);
    result.cg_iterations_inner = inner_result.iterations;
    if (inner_result.converged) {
        // Stage 4: final structured matvec.
        result.xi_delta = -rop.apply(inner_result.x);
        result.converged = result.converged && inner_result.converged;
        return result;
    }

    // Symmetrized route through R = L L^T: CG on the SPD system
    // (L^T Re{Gamma} L + sigma^2 I) z = L^T rhs, xi_delta = -L z. Truncated
    // iterates still descend the update's quadratic, so a tight tolerance is
    // not load-bearing here.
    const BlockBandedCholesky factor(cov);
    const LinOp spd = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
        const Eigen::VectorXd lv = factor.multiply_l(in);
        gamma.apply_real(lv, tmp);
        out = factor.multiply_lt(tmp);
        out += sigma2 * in;
    };
    CgOptions spd_opts = opts.cg;
    spd_opts.max_iter = 2 * opts.cg.max_iter;
    spd_opts.track_best = false;  // last SPD-CG iterate minimizes the quadratic
    const CgResult zres = cg_solve(spd, factor.multiply_lt(rhs), spd_opts);
    result.used_symmetrized_fallback = true;
    result.cg_iterations_inner += zres.iterations;
    result.converged = result.converged && zres.converged;
    result.xi_delta = -factor.multiply_l(zres.x);
    return result;
}

IsaaResult map_isaa(const CMat& Y, const CMat& X, const FrameConfig& frame,
                    const OscillatorModel& osc, double sigma2, const IsaaOptions& opts) {
    const int nm = frame.grid_size();
    const double xnorm2 = X.squaredNorm();
    const double sigma2x = sigma2 * xnorm2;
    const double doppler_period = frame.doppler_period();
    const GridSpec grid = opts.grid ? *opts.grid : GridSpec::for_frame(frame);
    const double eps_tau = opts.eps_tau > 0 ? opts.eps_tau : frame.sample_interval / 100.0;
    const double eps_nu = opts.eps_nu > 0 ? opts.eps_nu : 2.0 * 0.01 / kSpeedOfLight;

    const auto y = as_vector(Y);
    PenaltyEvaluator penalty(osc, frame);

    IsaaResult out;
    EstimateTrace& trace = out.trace;

    Eigen::VectorXd xi = Eigen::VectorXd::Zero(nm);
    CVec u = y;  // e^{j xi} .* y, maintained alongside xi

    const PeakEstimate init = fft_estimate(Y, X, frame, grid, opts.interpolate);
    double tau = init.tau;
    double nu = init.nu;

    auto objective_at = [&](double t, double v) {
        return projector_term(u, X, frame, sigma2, t, v, xnorm2) + penalty(t, xi);
    };

    IterationRecord rec0;
    rec0.iteration = 0;
    rec0.tau = tau;
    rec0.nu = nu;
    rec0.xi = xi;
    rec0.objective = objective_at(tau, nu);
    trace.iterations.push_back(rec0);

    int best_index = 0;
    double best_objective = rec0.objective;

    for (int it = 1; it <= opts.max_iterations; ++it) {
        // PN refinement at the current delay-Doppler estimate.
        PnUpdateResult pn = residual_pn_update(Y, X, frame, osc, sigma2, tau, nu, xi, opts.pn);
        if (!pn.converged) {
            trace.annotations.push_back("iteration " + std::to_string(it) +
                                        ": cg not converged");
        }
        if (pn.used_symmetrized_fallback) {
            trace.annotations.push_back("iteration " + std::to_string(it) +
                                        ": inner cg used the symmetrized factor route");
        }

        // Accept the update only as far as the objective supports: the
        // closed form minimizes the small-angle surrogate, so a full step
        // can overshoot when the residual is still large. Halve until the
        // objective at the current (tau, nu) stops increasing.
        {
            const CVec q_here = q_vector(X, frame, tau, nu);
            const double prev = trace.iterations.back().objective;
            double best_step_objective = kInf;
            Eigen::VectorXd best_xi;
            double accepted_step = 0.0;
            double step = 1.0;
            for (int attempt = 0; attempt < 5; ++attempt, step *= 0.5) {
                Eigen::VectorXd xi_try = xi + step * pn.xi_delta;
                CVec u_try(nm);
                for (Eigen::Index i = 0; i < nm; ++i) {
                    u_try[i] = std::polar(1.0, xi_try[i]) * y[i];
                }
                const Cplx corr = q_here.dot(u_try);
                const double l_try =
                    (u_try.squaredNorm() - std::norm(corr) / xnorm2) / sigma2 +
                    penalty(tau, xi_try);
                if (l_try < best_step_objective) {
                    best_step_objective = l_try;
                    best_xi = std::move(xi_try);
                    accepted_step = step;
                }
                if (l_try <= prev + 1e-9 * std::abs(prev)) break;
            }
            if (best_step_objective > prev + 1e-9 * std::abs(prev)) {
                // No step length helps: keep the current estimate.
                trace.annotations.push_back("iteration " + std::to_string(it) +
                                            ": PN step rejected");
            } else {
                if (accepted_step < 1.0) {
                    trace.annotations.push_back("iteration " + std::to_string(it) +
                                                ": PN step damped to " +
                                                std::to_string(accepted_step));
                }
                xi = std::move(best_xi);
            }
        }
        for (Eigen::Index i = 0; i < nm; ++i) u[i] = std::polar(1.0, xi[i]) * y[i];

        // Delay-Doppler update: FFT statistic everywhere, MAP penalty only on
        // the strongest delay candidates.
        CMat w_hat(frame.n_subcarriers, frame.n_symbols);
        for (Eigen::Index i = 0; i < nm; ++i) {
            w_hat.data()[i] = std::polar(1.0, -xi[i]);
        }
        const CMat mf = matched_filter_matrix(Y, X, frame, w_hat);
        const Eigen::MatrixXd map = profile_from_matrix(mf, frame, grid);

        std::vector<std::pair<double, int>> row_peaks;  // (-max value, delay bin)
        row_peaks.reserve(map.rows());
        std::vector<int> best_k(map.rows(), 0);
        for (int d = 0; d < map.rows(); ++d) {
            if (!grid.delay_allowed(frame, d)) continue;
            int kk = 0;
            for (int k = 1; k < map.cols(); ++k) {
                if (map(d, k) > map(d, kk)) kk = k;
            }
            best_k[d] = kk;
            row_peaks.emplace_back(-map(d, kk), d);
        }
        const int n_cand = std::min<int>(opts.top_peaks, static_cast<int>(row_peaks.size()));
        std::partial_sort(row_peaks.begin(), row_peaks.begin() + n_cand, row_peaks.end());

        int chosen_d = -1;
        double chosen_score = -kInf;
        for (int c = 0; c < n_cand; ++c) {
            const int d = row_peaks[c].second;
            const double score =
                -row_peaks[c].first / sigma2x - penalty(grid.delay_at(frame, d), xi);
            if (score > chosen_score || (score == chosen_score && d < chosen_d)) {
                chosen_score = score;
                chosen_d = d;
            }
        }
        if (chosen_d < 0) throw Error("map_isaa: no delay candidate");
        const int chosen_k = best_k[chosen_d];

        double dbin = chosen_d;
        double kbin = chosen_k;
        if (opts.interpolate) {
            const int ndg = static_cast<int>(map.rows());
            const int mkg = static_cast<int>(map.cols());
            dbin += parabolic_offset(map((chosen_d + ndg - 1) % ndg, chosen_k),
                                     map(chosen_d, chosen_k),
                                     map((chosen_d + 1) % ndg, chosen_k));
            kbin += parabolic_offset(map(chosen_d, (chosen_k + mkg - 1) % mkg),
                                     map(chosen_d, chosen_k),
                                     map(chosen_d, (chosen_k + 1) % mkg));
        }
        double tau_next = grid.delay_at(frame, dbin);
        double nu_next = grid.doppler_at(frame, kbin);
        if (opts.polish) polish_peak(mf, frame, grid, tau_next, nu_next);
        tau_next = wrap_delay(tau_next, frame.elementary_duration);
        nu_next = wrap_doppler(nu_next, doppler_period);
        double objective_next = objective_at(tau_next, nu_next);

        // The grid argmax compensates only the discrete candidates; keep the
        // previous (tau, nu) when the interpolated move does not actually
        // lower the objective under the refreshed PN estimate.
        const double objective_stay = objective_at(tau, nu);
        if (objective_stay < objective_next) {
            tau_next = tau;
            nu_next = nu;
            objective_next = objective_stay;
        }

        IterationRecord rec;
        rec.iteration = it;
        rec.tau = tau_next;
        rec.nu = nu_next;
        rec.xi = xi;
        rec.objective = objective_next;
        rec.cg_iterations = pn.cg_iterations_prior + pn.cg_iterations_inner;
        rec.cg_converged = pn.converged;
        trace.iterations.push_back(rec);

        const double prev_objective = trace.iterations[trace.iterations.size() - 2].objective;
        if (rec.objective > prev_objective + 1e-9 * std::abs(prev_objective)) {
            ++trace.monotonicity_violations;
        }
        if (rec.objective < best_objective) {
            best_objective = rec.objective;
            best_index = static_cast<int>(trace.iterations.size()) - 1;
        }

        const bool tau_settled = std::abs(tau_next - tau) <= eps_tau;
        const bool nu_settled = doppler_distance(nu_next, nu, doppler_period) <= eps_nu;
        // Objective stagnation keeps PN-only refinement going while the
        // delay-Doppler pair is already pinned.
        const bool objective_settled =
            std::abs(prev_objective - rec.objective) <= 1e-6 * std::abs(prev_objective);
        tau = tau_next;
        nu = nu_next;
        if (tau_settled && nu_settled && objective_settled) {
            trace.converged = true;
            break;
        }
    }

    const IterationRecord& best = trace.iterations[best_index];
    out.tau = best.tau;
    out.nu = best.nu;
    out.xi = best.xi;
    out.alpha = alpha_hat(Y, X, frame, out.tau, out.nu, out.xi);
    return out;
}

EquivalenceReport appendix_equivalence_check(const CMat& Y, const CMat& X,
                                             const FrameConfig& frame,
                                             const OscillatorModel& osc, double sigma2,
                                             const Eigen::VectorXd& xi_hat,
                                             const GridSpec& grid) {
    if (frame.grid_size() > 512 || grid.delay_bins > 64 || grid.doppler_bins > 64) {
        throw TooLarge("appendix_equivalence_check: instance too large");
    }
    const double xnorm2 = X.squaredNorm();
    const auto y = as_vector(Y);
    CVec u(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) u[i] = std::polar(1.0, xi_hat[i]) * y[i];

    // Dense penalty shared by both routes (the identity under test is the
    // first-term factorization).
    auto dense_penalty = [&](double tau) {
        if (dpn_variance(osc, tau) == 0.0) return xi_hat.isZero(0.0) ? -kInf : kInf;
        const Eigen::MatrixXd dense = materialize_dense(build_covariance(osc, frame, tau));
        Eigen::LLT<Eigen::MatrixXd> llt;
        for (double rel : kJitterLadder) {
            Eigen::MatrixXd shifted = dense;
            shifted.diagonal().array() += rel * dense(0, 0);
            llt.compute(shifted);
            if (llt.info() == Eigen::Success) {
                const double quad = xi_hat.dot(llt.solve(xi_hat));
                const double logdet =
                    2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
                return quad + logdet;
            }
        }
        throw CholeskyFailure("appendix_equivalence_check: penalty factorization failed");
    };

    std::vector<double> penalties(grid.delay_bins);
    for (int d = 0; d < grid.delay_bins; ++d) penalties[d] = dense_penalty(grid.delay_at(frame, d));

    // Route 1: direct objective via steering vectors and the projector.
    EquivalenceReport report;
    double best_l = kInf;
    Eigen::MatrixXd l_values(grid.delay_bins, grid.doppler_bins);
    for (int d = 0; d < grid.delay_bins; ++d) {
        for (int k = 0; k < grid.doppler_bins; ++k) {
            const double l = projector_term(u, X, frame, sigma2, grid.delay_at(frame, d),
                                            grid.doppler_at(frame, k), xnorm2) +
                             penalties[d];
            l_values(d, k) = l;
            if (l < best_l) {
                best_l = l;
                report.argmin_delay = d;
                report.argmin_doppler = k;
            }
        }
    }

    // Route 2: FFT statistic minus penalty.
    CMat w_hat(frame.n_subcarriers, frame.n_symbols);
    for (Eigen::Index i = 0; i < w_hat.size(); ++i) {
        w_hat.data()[i] = std::polar(1.0, -xi_hat[i]);
    }
    const Eigen::MatrixXd map = fft_profile(Y, X, frame, w_hat, grid);
    double best_lt = -kInf;
    for (int d = 0; d < grid.delay_bins; ++d) {
        for (int k = 0; k < grid.doppler_bins; ++k) {
            const double lt = map(d, k) / (sigma2 * xnorm2) - penalties[d];
            if (lt > best_lt) {
                best_lt = lt;
                report.argmax_delay = d;
                report.argmax_doppler = k;
            }
        }
    }

    report.agree = report.argmin_delay == report.argmax_delay &&
                   report.argmin_doppler == report.argmax_doppler;
    if (!report.agree) {
        const double l_at_max = l_values(report.argmax_delay, report.argmax_doppler);
        report.objective_gap = std::abs(l_at_max - best_l);
        // Count numerically tied optima as agreement.
        report.agree = report.objective_gap <= 1e-9 * std::max(1.0, std::abs(best_l));
    }
    return report;
}

}  // namespace pnradar
