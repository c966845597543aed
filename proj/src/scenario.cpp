#include "pnradar/scenario.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>

#include "pnradar/errors.hpp"

namespace pnradar {

namespace {

// --- minimal TOML subset: [section], key = int | float | bool | "string" ---

using TomlValue = std::variant<std::int64_t, double, bool, std::string>;
using TomlSection = std::map<std::string, TomlValue>;
using TomlDoc = std::map<std::string, TomlSection>;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

TomlValue parse_value(const std::string& raw, const std::string& where) {
    if (raw.empty()) throw IoError("toml: empty value at " + where);
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') throw IoError("toml: bad string at " + where);
        return raw.substr(1, raw.size() - 2);
    }
    if (raw == "true") return true;
    if (raw == "false") return false;
    const bool looks_float = raw.find_first_of(".eE") != std::string::npos ||
                             raw == "inf" || raw == "-inf" || raw == "nan";
    errno = 0;
    char* end = nullptr;
    if (!looks_float) {
        const long long v = std::strtoll(raw.c_str(), &end, 10);
        if (end && *end == '\0' && errno == 0) return static_cast<std::int64_t>(v);
    }
    const double d = std::strtod(raw.c_str(), &end);
    if (!end || *end != '\0') throw IoError("toml: bad value '" + raw + "' at " + where);
    return d;
}

TomlDoc parse_toml(std::istream& in, const std::string& name) {
    TomlDoc doc;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string::npos) {
            // keep # inside quoted strings
            size_t quote_open = line.find('"');
            if (quote_open == std::string::npos || hash < quote_open) line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = name + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw IoError("toml: bad section at " + where);
            section = trim(line.substr(1, line.size() - 2));
            doc[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw IoError("toml: expected key = value at " + where);
        const std::string key = trim(line.substr(0, eq));
        doc[section][key] = parse_value(trim(line.substr(eq + 1)), where);
    }
    return doc;
}

class SectionReader {
public:
    SectionReader(const TomlDoc& doc, const std::string& name) : name_(name) {
        auto it = doc.find(name);
        section_ = it == doc.end() ? nullptr : &it->second;
    }

    bool present() const { return section_ != nullptr; }

    std::optional<double> number(const std::string& key) const {
        const TomlValue* v = find(key);
        if (!v) return std::nullopt;
        if (auto* d = std::get_if<double>(v)) return *d;
        if (auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
        throw IoError("scenario: [" + name_ + "] " + key + " must be a number");
    }
    std::optional<std::int64_t> integer(const std::string& key) const {
        const TomlValue* v = find(key);
        if (!v) return std::nullopt;
        if (auto* i = std::get_if<std::int64_t>(v)) return *i;
        throw IoError("scenario: [" + name_ + "] " + key + " must be an integer");
    }
    std::optional<bool> boolean(const std::string& key) const {
        const TomlValue* v = find(key);
        if (!v) return std::nullopt;
        if (auto* b = std::get_if<bool>(v)) return *b;
        throw IoError("scenario: [" + name_ + "] " + key + " must be a boolean");
    }
    std::optional<std::string> text(const std::string& key) const {
        const TomlValue* v = find(key);
        if (!v) return std::nullopt;
        if (auto* s = std::get_if<std::string>(v)) return *s;
        throw IoError("scenario: [" + name_ + "] " + key + " must be a string");
    }

private:
    const TomlValue* find(const std::string& key) const {
        if (!section_) return nullptr;
        auto it = section_->find(key);
        return it == section_->end() ? nullptr : &it->second;
    }

    std::string name_;
    const TomlSection* section_;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

NoiseModel Scenario::derived_noise() const {
    NoiseModel n = noise_from_snr(snr_db, target.gain);
    if (sigma2) {
        const double scale = std::max(std::abs(*sigma2), std::abs(n.sigma2));
        if (std::abs(*sigma2 - n.sigma2) > 1e-9 * scale) {
            throw InconsistentNumerology("noise: sigma2 disagrees with snr_db");
        }
    }
    return n;
}

Scenario Scenario::desk_default() {
    Scenario s;
    FrameParams p;
    p.n_subcarriers = 64;
    p.n_symbols = 8;
    p.subcarrier_spacing = 50e6 / 64;  // keep the 50 MHz bandwidth
    p.cp_duration = (64.0 / 50e6) / 4.0;
    p.carrier_frequency = 28e9;
    s.frame = make_frame(p);
    s.oscillator = OscillatorModel::free_running(200e3);
    s.target = TargetSpec{30.0, 20.0, {1.0, 0.0}};
    s.snr_db = 20.0;
    s.run.pn_draws = 10;
    s.run.noise_draws = 10;
    return s;
}

Scenario Scenario::paper_default() {
    Scenario s;
    FrameParams p;
    p.n_subcarriers = 256;
    p.n_symbols = 10;
    p.subcarrier_spacing = 195312.5;
    p.cp_duration = 1.28e-6;
    p.carrier_frequency = 28e9;
    s.frame = make_frame(p);
    s.oscillator = OscillatorModel::free_running(200e3);
    s.target = TargetSpec{30.0, 20.0, {1.0, 0.0}};
    s.snr_db = 20.0;
    s.run.pn_draws = 50;
    s.run.noise_draws = 50;
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario " + path.string());
    const TomlDoc doc = parse_toml(in, path.filename().string());

    Scenario s;

    SectionReader frame(doc, "frame");
    if (!frame.present()) throw IoError("scenario: missing [frame] section");
    FrameParams p;
    p.n_subcarriers = static_cast<int>(frame.integer("n_subcarriers").value_or(0));
    p.n_symbols = static_cast<int>(frame.integer("n_symbols").value_or(0));
    p.cp_duration = frame.number("cp_duration").value_or(0.0);
    p.carrier_frequency = frame.number("carrier_frequency").value_or(0.0);
    p.subcarrier_spacing = frame.number("subcarrier_spacing");
    p.elementary_duration = frame.number("elementary_duration");
    p.total_symbol_duration = frame.number("total_symbol_duration");
    p.sample_interval = frame.number("sample_interval");
    s.frame = make_frame(p);

    SectionReader osc(doc, "oscillator");
    if (osc.present()) {
        const std::string kind = osc.text("kind").value_or("FRO");
        const double f3db = osc.number("f3dB").value_or(200e3);
        if (kind == "FRO" || kind == "fro") {
            s.oscillator = OscillatorModel::free_running(f3db);
        } else if (kind == "PLL" || kind == "pll") {
            const auto floop = osc.number("floop");
            if (!floop) throw IoError("scenario: PLL oscillator needs floop");
            s.oscillator = OscillatorModel::pll(f3db, *floop);
        } else {
            throw IoError("scenario: unknown oscillator kind '" + kind + "'");
        }
    }

    SectionReader target(doc, "target");
    if (target.present()) {
        s.target.range = target.number("range").value_or(s.target.range);
        s.target.radial_velocity =
            target.number("radial_velocity").value_or(s.target.radial_velocity);
        s.target.gain = {target.number("gain_re").value_or(1.0),
                         target.number("gain_im").value_or(0.0)};
    }

    SectionReader noise(doc, "noise");
    if (noise.present()) {
        s.snr_db = noise.number("snr_db").value_or(s.snr_db);
        s.sigma2 = noise.number("sigma2");
    }

    SectionReader run(doc, "run");
    if (run.present()) {
        s.run.seed = static_cast<std::uint64_t>(run.integer("seed").value_or(1));
        s.run.pn_draws = static_cast<int>(run.integer("pn_draws").value_or(s.run.pn_draws));
        s.run.noise_draws =
            static_cast<int>(run.integer("noise_draws").value_or(s.run.noise_draws));
        s.run.c_override = run.number("c_override").value_or(0.0);
        s.run.pn_free = run.boolean("pn_free").value_or(false);
        s.run.exploit = run.boolean("exploit").value_or(false);
        s.run.max_ambiguity =
            static_cast<int>(run.integer("max_ambiguity").value_or(s.run.max_ambiguity));
        s.run.delay_pad = static_cast<int>(run.integer("delay_pad").value_or(s.run.delay_pad));
        s.run.doppler_pad =
            static_cast<int>(run.integer("doppler_pad").value_or(s.run.doppler_pad));
        s.run.interpolate = run.boolean("interpolate").value_or(true);
    }

    s.derived_noise();  // validate sigma2/snr consistency up front
    return s;
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "[frame]\n";
    out << "n_subcarriers = " << s.frame.n_subcarriers << "\n";
    out << "n_symbols = " << s.frame.n_symbols << "\n";
    out << "subcarrier_spacing = " << fmt_double(s.frame.subcarrier_spacing) << "\n";
    out << "elementary_duration = " << fmt_double(s.frame.elementary_duration) << "\n";
    out << "cp_duration = " << fmt_double(s.frame.cp_duration) << "\n";
    out << "total_symbol_duration = " << fmt_double(s.frame.total_symbol_duration) << "\n";
    out << "carrier_frequency = " << fmt_double(s.frame.carrier_frequency) << "\n";
    out << "sample_interval = " << fmt_double(s.frame.sample_interval) << "\n";
    out << "\n[oscillator]\n";
    out << "kind = \"" << (s.oscillator.kind == OscillatorKind::fro ? "FRO" : "PLL") << "\"\n";
    out << "f3dB = " << fmt_double(s.oscillator.f3db_hz) << "\n";
    if (s.oscillator.kind == OscillatorKind::pll) {
        out << "floop = " << fmt_double(s.oscillator.floop_hz) << "\n";
    }
    out << "\n[target]\n";
    out << "range = " << fmt_double(s.target.range) << "\n";
    out << "radial_velocity = " << fmt_double(s.target.radial_velocity) << "\n";
    out << "gain_re = " << fmt_double(s.target.gain.real()) << "\n";
    out << "gain_im = " << fmt_double(s.target.gain.imag()) << "\n";
    out << "\n[noise]\n";
    out << "snr_db = " << fmt_double(s.snr_db) << "\n";
    out << "\n[run]\n";
    out << "seed = " << s.run.seed << "\n";
    out << "pn_draws = " << s.run.pn_draws << "\n";
    out << "noise_draws = " << s.run.noise_draws << "\n";
    if (s.run.c_override > 0) out << "c_override = " << fmt_double(s.run.c_override) << "\n";
    out << "pn_free = " << (s.run.pn_free ? "true" : "false") << "\n";
    out << "exploit = " << (s.run.exploit ? "true" : "false") << "\n";
    out << "max_ambiguity = " << s.run.max_ambiguity << "\n";
    out << "delay_pad = " << s.run.delay_pad << "\n";
    out << "doppler_pad = " << s.run.doppler_pad << "\n";
    out << "interpolate = " << (s.run.interpolate ? "true" : "false") << "\n";
    if (!out) throw IoError("short write to " + path.string());
}

double parse_quantity(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) throw Error("empty quantity");
    char* end = nullptr;
    const double value = std::strtod(t.c_str(), &end);
    if (end == t.c_str()) throw Error("bad quantity '" + text + "'");
    std::string unit = trim(std::string(end));
    if (unit.empty()) return value;
    static const std::map<std::string, double> scales = {
        {"Hz", 1.0},   {"hz", 1.0},   {"kHz", 1e3},  {"khz", 1e3},  {"MHz", 1e6},
        {"mhz", 1e6},  {"GHz", 1e9},  {"ghz", 1e9},  {"s", 1.0},    {"ms", 1e-3},
        {"us", 1e-6},  {"ns", 1e-9},  {"m", 1.0},    {"km", 1e3},   {"mps", 1.0},
        {"dB", 1.0},   {"db", 1.0},
    };
    auto it = scales.find(unit);
    if (it == scales.end()) throw Error("unknown unit '" + unit + "' in '" + text + "'");
    return value * it->second;
}

}  // namespace pnradar
