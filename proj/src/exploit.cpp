#include "pnradar/exploit.hpp"

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "pnradar/errors.hpp"
#include "pnradar/fft.hpp"
#include "pnradar/pn_model.hpp"

namespace pnradar {

LagProfile sample_cov_row(const Eigen::VectorXd& xi_hat) {
    const int nm = static_cast<int>(xi_hat.size());
    if (nm == 0) throw Error("sample_cov_row: empty vector");
    const int len = 2 * nm;  // zero padding removes circular wrap-around
    std::vector<std::complex<double>> buf(len, 0.0), hat(len);
    for (int i = 0; i < nm; ++i) buf[i] = xi_hat[i];
    fftutil::forward(buf, hat);
    for (int i = 0; i < len; ++i) hat[i] = std::norm(hat[i]);
    fftutil::backward(hat, buf);

    LagProfile profile;
    profile.r.resize(nm);
    for (int i = 0; i < nm; ++i) {
        profile.r[i] = buf[i].real() / len / (nm - i);
    }
    return profile;
}

std::vector<double> ambiguity_candidates(double tau_hat, const FrameConfig& frame,
                                         int max_index) {
    if (max_index < 0) throw Error("ambiguity_candidates: K must be >= 0");
    const double period = frame.elementary_duration;
    if (!(tau_hat >= 0.0) || tau_hat >= period) {
        throw PrincipalOutOfRange("principal delay " + std::to_string(tau_hat) +
                                  " outside [0, T)");
    }
    std::vector<double> set(max_index + 1);
    for (int k = 0; k <= max_index; ++k) set[k] = tau_hat + k * period;
    return set;
}

Eigen::VectorXd covariance_row0(const OscillatorModel& osc, const FrameConfig& frame,
                                double tau) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    Eigen::VectorXd row(static_cast<Eigen::Index>(n) * m);
    for (int i2 = 0; i2 < n * m; ++i2) {
        const int m2 = i2 / n;
        const double dt = -(i2 * frame.sample_interval + m2 * frame.cp_duration);
        row[i2] = dpn_correlation(osc, dt, tau);
    }
    return row;
}

ResolveResult resolve_ambiguity(const LagProfile& profile, const OscillatorModel& osc,
                                const FrameConfig& frame, const std::vector<double>& candidates,
                                bool variance_weighted) {
    if (candidates.empty()) throw Error("resolve_ambiguity: no candidates");
    const int nm = static_cast<int>(profile.r.size());
    if (nm != frame.grid_size()) throw Error("resolve_ambiguity: profile size mismatch");

    ResolveResult result;
    result.distances.resize(candidates.size());
    double best = 0.0;
    for (size_t c = 0; c < candidates.size(); ++c) {
        const Eigen::VectorXd row = covariance_row0(osc, frame, candidates[c]);
        double dist = 0.0;
        for (int i = 0; i < nm; ++i) {
            const double diff = row[i] - profile.r[i];
            const double w = variance_weighted ? static_cast<double>(nm - i) / nm : 1.0;
            dist += w * diff * diff;
        }
        result.distances[c] = dist;
        if (c == 0 || dist < best) {  // strict < keeps ties on the smaller delay
            best = dist;
            result.selected_index = static_cast<int>(c);
            result.tau = candidates[c];
        }
    }
    return result;
}

}  // namespace pnradar
