#pragma once

#include <complex>
#include <optional>

namespace pnradar {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// OFDM numerology. Immutable after construction through make_frame(), which
/// fills the derived fields and enforces consistency.
struct FrameConfig {
    int n_subcarriers = 0;              // N
    int n_symbols = 0;                  // M
    double subcarrier_spacing = 0.0;    // delta_f [Hz]
    double elementary_duration = 0.0;   // T = 1/delta_f [s]
    double cp_duration = 0.0;           // Tcp [s]
    double total_symbol_duration = 0.0; // Tsym = T + Tcp [s]
    double carrier_frequency = 0.0;     // fc [Hz]
    double sample_interval = 0.0;       // Ts = T/N [s]

    int grid_size() const { return n_subcarriers * n_symbols; }
    double bandwidth() const { return n_subcarriers * subcarrier_spacing; }
    double max_unambiguous_range(double c = kSpeedOfLight) const {
        return c * elementary_duration / 2.0;
    }
    /// One full period of the normalized-Doppler axis, 1/(fc*Tsym).
    double doppler_period() const { return 1.0 / (carrier_frequency * total_symbol_duration); }

    /// Checks the derived-field identities at 1e-12 relative tolerance.
    bool consistent() const;
};

/// Raw numerology for make_frame. delta_f or T must be given; redundant
/// derived fields are validated against the rest when supplied.
struct FrameParams {
    int n_subcarriers = 0;
    int n_symbols = 0;
    double cp_duration = 0.0;
    double carrier_frequency = 0.0;
    std::optional<double> subcarrier_spacing;
    std::optional<double> elementary_duration;
    std::optional<double> total_symbol_duration;
    std::optional<double> sample_interval;
};

/// Builds a FrameConfig, filling T, Tsym and Ts.
/// Throws InconsistentNumerology if redundant fields disagree beyond 1e-9
/// relative, and Error if required fields are missing or non-positive.
FrameConfig make_frame(const FrameParams& params);

enum class OscillatorKind { fro, pll };

struct OscillatorModel {
    OscillatorKind kind = OscillatorKind::fro;
    double f3db_hz = 0.0;   // 3 dB bandwidth of the Lorentzian oscillator spectrum
    double floop_hz = 0.0;  // PLL loop bandwidth (ignored for FRO)

    static OscillatorModel free_running(double f3db_hz);
    static OscillatorModel pll(double f3db_hz, double floop_hz);
};

/// Point target with derived delay/Doppler. Flags mark modelling-validity,
/// not errors: targets beyond the CP (tau > Tcp) are legal inputs for the
/// ambiguity experiments.
struct Target {
    double range_m = 0.0;
    double radial_velocity_mps = 0.0;
    std::complex<double> gain{1.0, 0.0};
    double delay_s = 0.0;     // tau = 2R/c
    double doppler_norm = 0.0;  // nu = 2v/c
    bool cp_valid = true;       // tau <= Tcp
    bool doppler_narrowband = true;  // |nu| << 1/N
};

Target target_params(double range_m, double radial_velocity_mps, std::complex<double> gain,
                     const FrameConfig& frame, double c = kSpeedOfLight);

/// AWGN level. SNR = |alpha|^2 / (2 sigma^2); sigma^2 is the per-component
/// (real or imaginary) noise variance.
struct NoiseModel {
    double snr_db = 0.0;
    double sigma2 = 0.0;
};

NoiseModel noise_from_snr(double snr_db, std::complex<double> gain);

}  // namespace pnradar
