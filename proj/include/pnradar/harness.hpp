#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pnradar/scenario.hpp"

namespace pnradar {

enum class Method { fft, fft_pn_free, map_isaa };

std::string method_name(Method method);
std::optional<Method> method_from_name(const std::string& name);

struct TrialCounts {
    int pn_draws = 10;
    int noise_draws = 10;
    int total() const { return pn_draws * noise_draws; }
};

struct MetricsRecord {
    std::string axis_name = "point";
    double axis_value = 0.0;
    Method method = Method::fft;
    double range_rmse_m = 0.0;
    double velocity_rmse_mps = 0.0;
    double pn_rmse_rad = 0.0;
    std::optional<double> success_rate;  // exploitation runs only
    double mean_iterations = 0.0;
    int trials = 0;
    int failures = 0;
    double wall_seconds = 0.0;
};

/// Runs the full PN-draw x noise-draw cross product for one operating point,
/// scoring every requested method against the stored truth. Per-trial RNG
/// streams come from (seed, indices, tag) so the same PN realization meets
/// every noise realization. Trials run in parallel; aggregation is keyed by
/// trial index and independent of the schedule.
std::vector<MetricsRecord> run_point(const Scenario& scenario,
                                     const std::vector<Method>& methods,
                                     const TrialCounts& trials, std::uint64_t seed);

struct SweepPlan {
    Scenario base;
    std::string axis;  // snr_db | f3dB | floop | range_m
    std::vector<double> values;
    TrialCounts trials;
    std::uint64_t seed = 1;
    std::vector<Method> methods = {Method::fft, Method::fft_pn_free, Method::map_isaa};
};

/// Applies one swept axis value to a scenario copy.
Scenario apply_axis(const Scenario& base, const std::string& axis, double value);

extern const char* const kSweepCsvHeader;
std::string metrics_csv_row(const MetricsRecord& record);

/// Runs the sweep in ascending axis order, streaming one CSV row per
/// (value, method). Completed points are cached under cache_dir (or the
/// PNRADAR_CACHE_DIR environment variable) keyed by plan content, making
/// interrupted sweeps resumable with byte-identical output.
void run_sweep(const SweepPlan& plan, std::ostream& csv,
               std::optional<std::filesystem::path> cache_dir = std::nullopt);

struct SelftestSuite {
    std::string name;
    int passed = 0;
    int failed = 0;
};

struct SelftestReport {
    std::vector<SelftestSuite> suites;
    bool ok() const;
    int total_failed() const;
};

/// Dense-vs-fast equivalence suites, statistical identities and the
/// delay-Doppler-update equivalence checks, sized to run in seconds.
SelftestReport run_selftest(std::uint64_t seed = 20240901);

}  // namespace pnradar
