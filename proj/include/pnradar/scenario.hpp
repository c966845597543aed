#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "pnradar/frame.hpp"

namespace pnradar {

struct TargetSpec {
    double range = 30.0;             // m
    double radial_velocity = 20.0;   // m/s
    std::complex<double> gain{1.0, 0.0};
};

struct RunConfig {
    std::uint64_t seed = 1;
    int pn_draws = 10;
    int noise_draws = 10;
    double c_override = 0.0;  // 0 uses the exact speed of light
    bool pn_free = false;
    bool exploit = false;
    int max_ambiguity = 1;  // K
    int delay_pad = 4;
    int doppler_pad = 4;
    bool interpolate = true;
};

/// Full simulation scenario: [frame], [oscillator], [target], [noise], [run]
/// sections of the TOML file, field names matching the domain types.
struct Scenario {
    FrameConfig frame;
    OscillatorModel oscillator = OscillatorModel::free_running(200e3);
    TargetSpec target;
    double snr_db = 20.0;
    std::optional<double> sigma2;  // consistency-checked against snr_db if set
    RunConfig run;

    double speed_of_light() const {
        return run.c_override > 0 ? run.c_override : kSpeedOfLight;
    }
    Target derived_target() const {
        return target_params(target.range, target.radial_velocity, target.gain, frame,
                             speed_of_light());
    }
    NoiseModel derived_noise() const;

    /// N = 64, M = 8 frame sized for quick desk runs.
    static Scenario desk_default();
    /// The mmWave numerology used throughout the experiments
    /// (28 GHz, 50 MHz, N = 256, M = 10).
    static Scenario paper_default();
};

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

/// Parses "200kHz", "1.28us", "28GHz", "5e6" into base SI units. Recognized
/// suffixes: Hz/kHz/MHz/GHz, s/ms/us/ns, m, mps, dB (unit ignored).
double parse_quantity(const std::string& text);

}  // namespace pnradar
