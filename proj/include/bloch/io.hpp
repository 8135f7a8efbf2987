// io.hpp — output files. Every file is written to "<path>.tmp" and renamed
// into place, so a crash never leaves a partial file under the final name.
#pragma once

#include "bloch/config.hpp"
#include "bloch/continuum.hpp"
#include "bloch/core.hpp"
#include "bloch/stochastic.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace bloch {

namespace fs = std::filesystem;

// Fixed column order of the series format (format version 1).
inline constexpr const char* kSeriesColumns =
    "t,P,v_mean,v_mean_err,z_mean,z_mean_err,disp,disp_err,v2_mean,v2_mean_err,norm_mean";
inline constexpr int kSeriesFormatVersion = 1;

inline void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        body(os);
        os.flush();
        if (!os) {
            os.close();
            fs::remove(tmp);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

// "# key: value" lines shared by all tabular outputs.
inline void write_metadata(std::ostream& os, const ExperimentConfig& c, const std::string& kind) {
    os << "# " << version_string << "\n";
    os << "# format: " << kind << " v" << kSeriesFormatVersion << "\n";
    os << "# experiment: " << c.name << "\n";
    os << "# config_hash: " << hash_string(config_hash(c)) << "\n";
    os << "# seed: " << c.sde.seed << "\n";
    os << "# config: " << to_json(c).dump() << "\n";
}

inline void write_series_csv(std::ostream& os, const ObservableSeries& s, const ExperimentConfig& c) {
    write_metadata(os, c, "series");
    os << "# trajectories: " << s.trajectories << "\n";
    os << "# normalized_by_survival: " << (s.normalized ? "true" : "false") << "\n";
    os << kSeriesColumns << "\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        os << s.t[i] << ',' << s.survival[i] << ',' << s.velocity[i] << ',' << s.velocity_err[i] << ','
           << s.position[i] << ',' << s.position_err[i] << ',' << s.dispersion[i] << ',' << s.dispersion_err[i]
           << ',' << s.velocity_sq[i] << ',' << s.velocity_sq_err[i] << ',' << s.norm[i] << "\n";
    }
}

struct SeriesFile {
    ObservableSeries series;
    std::optional<ExperimentConfig> config;
    std::string config_hash;
};

inline SeriesFile read_series_csv(std::istream& is) {
    SeriesFile f;
    std::string line;
    bool header = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            const std::string key = line.substr(2, colon - 2);
            const std::string val = line.substr(std::min(line.size(), colon + 2));
            if (key == "config") f.config = parse_config(val);
            else if (key == "config_hash") f.config_hash = val;
            else if (key == "trajectories") f.series.trajectories = std::stoul(val);
            else if (key == "normalized_by_survival") f.series.normalized = (val == "true");
            continue;
        }
        if (!header) {
            if (line != kSeriesColumns) throw ConfigError("unexpected CSV columns: " + line);
            header = true;
            continue;
        }
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("non-numeric CSV cell on line " + std::to_string(lineno));
            }
        }
        if (v.size() != 11) throw ConfigError("expected 11 CSV columns on line " + std::to_string(lineno));
        auto& s = f.series;
        s.t.push_back(v[0]);
        s.survival.push_back(v[1]);
        s.velocity.push_back(v[2]);
        s.velocity_err.push_back(v[3]);
        s.position.push_back(v[4]);
        s.position_err.push_back(v[5]);
        s.dispersion.push_back(v[6]);
        s.dispersion_err.push_back(v[7]);
        s.velocity_sq.push_back(v[8]);
        s.velocity_sq_err.push_back(v[9]);
        s.norm.push_back(v[10]);
    }
    if (!header) throw ConfigError("CSV has no column header");
    // Survival errors are not part of the format; weighted fits fall back to unit weights.
    f.series.survival_err.assign(f.series.t.size(), 0.0);
    f.series.norm_err.assign(f.series.t.size(), 0.0);
    f.series.absorbed_low.assign(f.series.t.size(), 0.0);
    f.series.absorbed_high.assign(f.series.t.size(), 0.0);
    return f;
}

inline SeriesFile read_series_csv(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    return read_series_csv(is);
}

// Rows "t,z,density" for each snapshot, every `stride`-th grid point.
struct WaveSnapshot {
    double t;
    RVector density;
};

inline void write_wavefunction_table(std::ostream& os, const ContinuumGrid& g, const std::vector<WaveSnapshot>& snaps,
                                     std::size_t stride, const ExperimentConfig& c) {
    write_metadata(os, c, "wavefunction");
    os << "t,z,density\n" << std::setprecision(10);
    for (const auto& s : snaps)
        for (Eigen::Index i = 0; i < g.size(); i += static_cast<Eigen::Index>(stride))
            os << s.t << ',' << g.z[i] << ',' << s.density[i] << "\n";
}

inline void write_band_table(std::ostream& os, const BandSpectrum& b, const ExperimentConfig& c) {
    write_metadata(os, c, "bands");
    os << "kappa";
    for (Eigen::Index n = 0; n < b.energy.rows(); ++n) os << ",e" << n;
    os << "\n" << std::setprecision(17);
    for (Eigen::Index k = 0; k < b.kappa.size(); ++k) {
        os << b.kappa[k];
        for (Eigen::Index n = 0; n < b.energy.rows(); ++n) os << ',' << b.energy(n, k);
        os << "\n";
    }
}

inline json fit_to_json(const FitResult& f) {
    return {{"estimate", f.estimate},       {"standard_error", f.standard_error}, {"window", {f.t_begin, f.t_end}},
            {"residual_norm", f.residual_norm}, {"points", f.points}};
}

inline void write_json_file(const fs::path& path, const json& j) {
    atomic_write(path, [&](std::ostream& os) { os << j.dump(2) << "\n"; });
}

}  // namespace bloch
