#include "pnradar/ofdm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <vector>

#include "pnradar/errors.hpp"
#include "pnradar/fft.hpp"

namespace pnradar {

CVec delay_steering(const FrameConfig& frame, double tau) {
    const int n = frame.n_subcarriers;
    CVec b(n);
    for (int i = 0; i < n; ++i) {
        b[i] = std::polar(1.0, -2.0 * kPi * i * frame.subcarrier_spacing * tau);
    }
    return b;
}

CVec doppler_steering(const FrameConfig& frame, double nu) {
    const int m = frame.n_symbols;
    const double step = frame.carrier_frequency * frame.total_symbol_duration * nu;
    CVec c(m);
    for (int i = 0; i < m; ++i) {
        c[i] = std::polar(1.0, -2.0 * kPi * i * step);
    }
    return c;
}

CVec q_vector(const CMat& symbols, const FrameConfig& frame, double tau, double nu) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    if (symbols.rows() != n || symbols.cols() != m) throw Error("q_vector: symbol shape");
    const CVec b = delay_steering(frame, tau);
    const CVec c = doppler_steering(frame, nu);
    CVec q(static_cast<Eigen::Index>(n) * m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<Cplx> col(n), out(n);
    for (int j = 0; j < m; ++j) {
        const Cplx cj = std::conj(c[j]);
        for (int i = 0; i < n; ++i) col[i] = symbols(i, j) * b[i] * cj;
        fftutil::backward(col, out);  // unitary IDFT up to 1/sqrt(N)
        for (int i = 0; i < n; ++i) q[j * n + i] = out[i] * scale;
    }
    return q;
}

CMat generate_symbols(const FrameConfig& frame, Rng& rng) {
    static const double s = 1.0 / std::sqrt(2.0);
    static const Cplx constellation[4] = {{s, s}, {s, -s}, {-s, s}, {-s, -s}};
    CMat x(frame.n_subcarriers, frame.n_symbols);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int j = 0; j < frame.n_symbols; ++j) {
        for (int i = 0; i < frame.n_subcarriers; ++i) x(i, j) = constellation[pick(rng)];
    }
    return x;
}

CMat apply_pn_and_noise(const CMat& clean, const Eigen::VectorXd& xi, double sigma2,
                        Rng& noise_rng) {
    const int n = static_cast<int>(clean.rows());
    const int m = static_cast<int>(clean.cols());
    CMat y(n, m);
    const double sd = std::sqrt(sigma2);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) {
            const double phase = xi.size() ? xi[j * n + i] : 0.0;
            const Cplx w = phase == 0.0 ? Cplx(1.0, 0.0) : std::polar(1.0, -phase);
            const double zr = sd * normal(noise_rng);
            const double zi = sd * normal(noise_rng);
            y(i, j) = w * clean(i, j) + Cplx(zr, zi);
        }
    }
    return y;
}

Observation synthesize(const CMat& symbols, const FrameConfig& frame, const Target& target,
                       const OscillatorModel& osc, const NoiseModel& noise, Rng& pn_rng,
                       Rng& noise_rng, const SynthesisOptions& opts) {
    const int n = frame.n_subcarriers;
    const int m = frame.n_symbols;
    const CVec q = q_vector(symbols, frame, target.delay_s, target.doppler_norm);
    CMat clean = target.gain * Eigen::Map<const CMat>(q.data(), n, m);

    Eigen::VectorXd xi;
    if (!opts.pn_free) {
        const TbtCovariance cov = build_covariance(osc, frame, target.delay_s);
        xi = sample_pn(cov, pn_rng);
    }

    Observation obs;
    obs.X = symbols;
    obs.sigma2 = noise.sigma2;
    obs.Y = apply_pn_and_noise(clean, xi, noise.sigma2, noise_rng);
    if (xi.size() == 0) xi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * m);
    obs.truth = Truth{target, std::move(xi)};
    return obs;
}

Observation synthesize(const FrameConfig& frame, const Target& target,
                       const OscillatorModel& osc, const NoiseModel& noise, Rng& rng,
                       const SynthesisOptions& opts) {
    const CMat symbols = generate_symbols(frame, rng);
    return synthesize(symbols, frame, target, osc, noise, rng, rng, opts);
}

namespace {

void write_matrix_row_major(std::ofstream& out, const CMat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double re = m(r, c).real();
            const double im = m(r, c).imag();
            out.write(reinterpret_cast<const char*>(&re), sizeof(re));
            out.write(reinterpret_cast<const char*>(&im), sizeof(im));
        }
    }
}

void read_matrix_row_major(std::ifstream& in, CMat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double re = 0, im = 0;
            in.read(reinterpret_cast<char*>(&re), sizeof(re));
            in.read(reinterpret_cast<char*>(&im), sizeof(im));
            m(r, c) = Cplx(re, im);
        }
    }
}

}  // namespace

void save_observation(const Observation& obs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::uint32_t n = static_cast<std::uint32_t>(obs.Y.rows());
    const std::uint32_t m = static_cast<std::uint32_t>(obs.Y.cols());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&m), sizeof(m));
    out.write(reinterpret_cast<const char*>(&obs.sigma2), sizeof(obs.sigma2));
    write_matrix_row_major(out, obs.Y);
    write_matrix_row_major(out, obs.X);
    if (!out) throw IoError("short write to " + path.string());
}

Observation load_observation(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::uint32_t n = 0, m = 0;
    Observation obs;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&m), sizeof(m));
    in.read(reinterpret_cast<char*>(&obs.sigma2), sizeof(obs.sigma2));
    if (!in || n == 0 || m == 0 || n > (1u << 20) || m > (1u << 20)) {
        throw IoError("bad observation header in " + path.string());
    }
    obs.Y.resize(n, m);
    obs.X.resize(n, m);
    read_matrix_row_major(in, obs.Y);
    read_matrix_row_major(in, obs.X);
    if (!in) throw IoError("truncated observation file " + path.string());
    return obs;
}

}  // namespace pnradar
