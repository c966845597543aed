#include "pnradar/reference.hpp"

#include <cmath>

namespace pnradar::reference {

CVec q_vector_naive(const CMat& symbols, const FrameConfig& frame, double tau, double nu) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    CVec q(static_cast<Eigen::Index>(n) * m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int j = 0; j < m; ++j) {
        const Cplx cj =
            std::polar(1.0, 2.0 * kPi * frame.carrier_frequency * j *
                                frame.total_symbol_duration * nu);  // conj(c[j])
        for (int l = 0; l < n; ++l) {
            Cplx acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) {
                const Cplx bk = std::polar(1.0, -2.0 * kPi * k * frame.subcarrier_spacing * tau);
                const Cplx idft = std::polar(1.0, 2.0 * kPi * k * l / static_cast<double>(n));
                acc += idft * symbols(k, j) * bk * cj;
            }
            q[j * n + l] = acc * scale;
        }
    }
    return q;
}

Eigen::MatrixXd profile_naive(const CMat& Y, const CMat& X, const FrameConfig& frame,
                              const CMat& W_hat, const GridSpec& grid) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    // A = X^* .* F_N (W_hat^* .* Y) by direct DFT sums.
    CMat a(n, m);
    const double unit = 1.0 / std::sqrt(static_cast<double>(n));
    for (int j = 0; j < m; ++j) {
        for (int l = 0; l < n; ++l) {
            Cplx acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) {
                acc += std::polar(1.0, -2.0 * kPi * k * l / static_cast<double>(n)) *
                       std::conj(W_hat(k, j)) * Y(k, j);
            }
            a(l, j) = std::conj(X(l, j)) * acc * unit;
        }
    }

    Eigen::MatrixXd map(grid.delay_bins, grid.doppler_bins);
    for (int d = 0; d < grid.delay_bins; ++d) {
        const double tau = grid.delay_at(frame, d);
        const CVec b = delay_steering(frame, tau);
        for (int k = 0; k < grid.doppler_bins; ++k) {
            const double nu = grid.doppler_at(frame, k);
            const CVec c = doppler_steering(frame, nu);
            Cplx acc(0.0, 0.0);
            for (int j = 0; j < m; ++j) {
                Cplx col(0.0, 0.0);
                for (int i = 0; i < n; ++i) col += std::conj(b[i]) * a(i, j);
                acc += col * c[j];
            }
            map(d, k) = std::norm(acc);
        }
    }
    return map;
}

Eigen::VectorXd lag_profile_naive(const Eigen::VectorXd& xi) {
    const int nm = static_cast<int>(xi.size());
    Eigen::VectorXd r(nm);
    for (int i = 0; i < nm; ++i) {
        double acc = 0.0;
        for (int k = 0; k + i < nm; ++k) acc += xi[k] * xi[k + i];
        r[i] = acc / (nm - i);
    }
    return r;
}

Eigen::MatrixXcd gamma_dense(const CMat& Y, const CMat& X, const FrameConfig& frame,
                             const Eigen::VectorXd& xi_hat, double tau, double nu) {
    const Eigen::Index nm = Y.size();
    const CVec q = q_vector(X, frame, tau, nu);
    const Eigen::Map<const CVec> y(Y.data(), nm);

    Eigen::MatrixXcd dy = y.asDiagonal();
    Eigen::MatrixXcd proj =
        Eigen::MatrixXcd::Identity(nm, nm) - (q * q.adjoint()) / q.squaredNorm();
    Eigen::MatrixXcd core = dy.adjoint() * proj * dy;

    // Hadamard factor e^{-j xi} (e^{j xi})^T = w w^H with w = e^{-j xi}.
    CVec w(nm);
    for (Eigen::Index i = 0; i < nm; ++i) w[i] = std::polar(1.0, -xi_hat[i]);
    return core.cwiseProduct((w * w.adjoint()).eval());
}

namespace {

Eigen::MatrixXd dense_covariance(const OscillatorModel& osc, const FrameConfig& frame,
                                 double tau) {
    return materialize_dense(build_covariance(osc, frame, tau));
}

}  // namespace

Eigen::VectorXd residual_pn_update_dense(const CMat& Y, const CMat& X, const FrameConfig& frame,
                                         const OscillatorModel& osc, double sigma2, double tau,
                                         double nu, const Eigen::VectorXd& xi_hat) {
    const Eigen::Index nm = Y.size();
    const Eigen::MatrixXcd gamma = gamma_dense(Y, X, frame, xi_hat, tau, nu);
    const Eigen::MatrixXd gamma_re = gamma.real();
    const Eigen::MatrixXd gamma_im = gamma.imag();
    const Eigen::MatrixXd r = dense_covariance(osc, frame, tau);

    const Eigen::VectorXd rhs =
        gamma_im * Eigen::VectorXd::Ones(nm) + sigma2 * r.ldlt().solve(xi_hat);
    const Eigen::MatrixXd inner = gamma_re * r + sigma2 * Eigen::MatrixXd::Identity(nm, nm);
    return -r * inner.partialPivLu().solve(rhs);
}

Eigen::VectorXd quadratic_minimizer_dense(const CMat& Y, const CMat& X, const FrameConfig& frame,
                                          const OscillatorModel& osc, double sigma2, double tau,
                                          double nu, const Eigen::VectorXd& xi_hat) {
    const Eigen::Index nm = Y.size();
    const Eigen::MatrixXcd gamma = gamma_dense(Y, X, frame, xi_hat, tau, nu);
    const Eigen::MatrixXd gamma_re = gamma.real();
    const Eigen::MatrixXd gamma_im = gamma.imag();
    const Eigen::MatrixXd r_inv = dense_covariance(osc, frame, tau).inverse();

    // Normal equations of the quadratic surrogate:
    //   (Re{Gamma}/sigma^2 + R^{-1}) xi_delta = -(Im{Gamma} 1 / sigma^2 + R^{-1} xi_hat)
    const Eigen::MatrixXd lhs = gamma_re / sigma2 + r_inv;
    const Eigen::VectorXd rhs =
        gamma_im * Eigen::VectorXd::Ones(nm) / sigma2 + r_inv * xi_hat;
    return -lhs.ldlt().solve(rhs);
}

WienerCorrelationEstimate wiener_dpn_correlation(double f3db_hz, double dt_step, int lag_steps,
                                                 int tau_steps, int n_paths, Rng& rng) {
    const int len = tau_steps + lag_steps;  // increments needed per path
    const double inc_sd = std::sqrt(4.0 * kPi * f3db_hz * dt_step);
    std::normal_distribution<double> normal(0.0, 1.0);

    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> phase(len + 1);
    for (int p = 0; p < n_paths; ++p) {
        phase[0] = 0.0;
        for (int k = 1; k <= len; ++k) phase[k] = phase[k - 1] + inc_sd * normal(rng);
        // xi(t, tau) = phi(t) - phi(t - tau) at t2 = tau_steps, t1 = t2 + lag.
        const double xi2 = phase[tau_steps] - phase[0];
        const double xi1 = phase[tau_steps + lag_steps] - phase[lag_steps];
        const double prod = xi1 * xi2;
        sum += prod;
        sum_sq += prod * prod;
    }
    WienerCorrelationEstimate est;
    est.mean = sum / n_paths;
    const double var = std::max(0.0, sum_sq / n_paths - est.mean * est.mean);
    est.std_error = std::sqrt(var / n_paths);
    return est;
}

}  // namespace pnradar::reference
