#include "pnradar/frame.hpp"

#include <cmath>
#include <string>

#include "pnradar/errors.hpp"

namespace pnradar {

namespace {

bool close_rel(double a, double b, double rtol) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= rtol * scale;
}

void check_redundant(const char* name, double supplied, double derived) {
    if (!close_rel(supplied, derived, 1e-9)) {
        throw InconsistentNumerology(std::string(name) + " = " + std::to_string(supplied) +
                                     " disagrees with derived value " + std::to_string(derived));
    }
}

}  // namespace

bool FrameConfig::consistent() const {
    if (n_subcarriers < 2 || n_symbols < 1) return false;
    if (subcarrier_spacing <= 0 || elementary_duration <= 0 || cp_duration <= 0 ||
        total_symbol_duration <= 0 || carrier_frequency <= 0 || sample_interval <= 0) {
        return false;
    }
    return close_rel(elementary_duration, 1.0 / subcarrier_spacing, 1e-12) &&
           close_rel(total_symbol_duration, elementary_duration + cp_duration, 1e-12) &&
           close_rel(sample_interval, elementary_duration / n_subcarriers, 1e-12);
}

FrameConfig make_frame(const FrameParams& params) {
    if (params.n_subcarriers < 2) throw Error("make_frame: n_subcarriers must be >= 2");
    if (params.n_symbols < 1) throw Error("make_frame: n_symbols must be >= 1");
    if (params.cp_duration <= 0) throw Error("make_frame: cp_duration must be > 0");
    if (params.carrier_frequency <= 0) throw Error("make_frame: carrier_frequency must be > 0");
    if (!params.subcarrier_spacing && !params.elementary_duration) {
        throw Error("make_frame: need subcarrier_spacing or elementary_duration");
    }

    FrameConfig f;
    f.n_subcarriers = params.n_subcarriers;
    f.n_symbols = params.n_symbols;
    f.cp_duration = params.cp_duration;
    f.carrier_frequency = params.carrier_frequency;

    if (params.subcarrier_spacing) {
        if (*params.subcarrier_spacing <= 0) throw Error("make_frame: subcarrier_spacing <= 0");
        f.subcarrier_spacing = *params.subcarrier_spacing;
        f.elementary_duration = 1.0 / f.subcarrier_spacing;
        if (params.elementary_duration) {
            check_redundant("elementary_duration", *params.elementary_duration,
                            f.elementary_duration);
        }
    } else {
        if (*params.elementary_duration <= 0) throw Error("make_frame: elementary_duration <= 0");
        f.elementary_duration = *params.elementary_duration;
        f.subcarrier_spacing = 1.0 / f.elementary_duration;
    }

    f.total_symbol_duration = f.elementary_duration + f.cp_duration;
    f.sample_interval = f.elementary_duration / f.n_subcarriers;

    if (params.total_symbol_duration) {
        check_redundant("total_symbol_duration", *params.total_symbol_duration,
                        f.total_symbol_duration);
    }
    if (params.sample_interval) {
        check_redundant("sample_interval", *params.sample_interval, f.sample_interval);
    }
    return f;
}

OscillatorModel OscillatorModel::free_running(double f3db_hz) {
    if (f3db_hz <= 0) throw Error("oscillator: f3dB must be > 0");
    return OscillatorModel{OscillatorKind::fro, f3db_hz, 0.0};
}

OscillatorModel OscillatorModel::pll(double f3db_hz, double floop_hz) {
    if (f3db_hz <= 0) throw Error("oscillator: f3dB must be > 0");
    if (floop_hz <= 0) throw Error("oscillator: floop must be > 0");
    return OscillatorModel{OscillatorKind::pll, f3db_hz, floop_hz};
}

Target target_params(double range_m, double radial_velocity_mps, std::complex<double> gain,
                     const FrameConfig& frame, double c) {
    if (range_m < 0) throw Error("target: range must be >= 0");
    Target t;
    t.range_m = range_m;
    t.radial_velocity_mps = radial_velocity_mps;
    t.gain = gain;
    t.delay_s = 2.0 * range_m / c;
    t.doppler_norm = 2.0 * radial_velocity_mps / c;
    t.cp_valid = t.delay_s <= frame.cp_duration;
    // |nu| << 1/N assumption of the narrowband model; warn at 1% of 1/N.
    t.doppler_narrowband = std::abs(t.doppler_norm) <= 0.01 / frame.n_subcarriers;
    return t;
}

NoiseModel noise_from_snr(double snr_db, std::complex<double> gain) {
    NoiseModel n;
    n.snr_db = snr_db;
    n.sigma2 = std::norm(gain) / (2.0 * std::pow(10.0, snr_db / 10.0));
    return n;
}

}  // namespace pnradar
