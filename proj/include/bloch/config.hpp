// config.hpp — experiment description, its JSON form and the config hash.
//
// Precedence when a run is assembled: built-in defaults < preset or config
// file < command-line overrides. Thread count is not part of the config
// (results do not depend on it); it comes from --threads or BLOCH_THREADS.
#pragma once

#include "bloch/analysis.hpp"
#include "bloch/continuum.hpp"
#include "bloch/core.hpp"
#include "bloch/stochastic.hpp"
#include "bloch/tight_binding.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bloch {

using json = nlohmann::json;

enum class ModelKind { TightBinding, Lindblad, Continuum, Classical, Bands };

inline const char* to_string(ModelKind m) {
    switch (m) {
        case ModelKind::TightBinding: return "tight-binding";
        case ModelKind::Lindblad: return "lindblad";
        case ModelKind::Continuum: return "continuum";
        case ModelKind::Classical: return "classical";
        case ModelKind::Bands: return "bands";
    }
    return "?";
}

inline ModelKind model_from_string(const std::string& s) {
    for (auto m : {ModelKind::TightBinding, ModelKind::Lindblad, ModelKind::Continuum, ModelKind::Classical,
                   ModelKind::Bands})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown model '" + s + "'");
}

struct ExperimentConfig {
    std::string name = "experiment";
    ModelKind model = ModelKind::TightBinding;
    TBParams tight_binding;
    int edge_margin = 10;  // lattice sites watched for edge contact; 0 disables
    ContinuumParams continuum;
    SdeConfig sde;  // also drives the Lindblad and classical integrators; trajectories = particles for the latter

    // Initial packet: exp(-l^2/w^2) on the lattice, exp(-z^2/(4 sigma^2)) in the continuum.
    double packet_width = 10.0;
    double packet_center = 0.0;

    // Band solver (model "bands").
    int bands = 3;
    int kappa_points = 101;
    int planewaves = 21;

    // Which fits to run: "velocity" (oscillation decay), "dispersion"
    // (diffusion), "survival" (depletion).
    std::vector<std::string> observables{"velocity", "dispersion"};
    std::optional<FitWindow> decay_window, diffusion_window, depletion_window;

    // Times at which density matrices / wave functions are dumped.
    std::vector<double> snapshot_times;
    std::size_t snapshot_stride = 1;  // grid-point stride of wave-function tables

    std::string output_dir = "out";
};

namespace detail {

// Rejects keys not in `allowed` so typos surface as configuration errors.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline json window_json(const std::optional<FitWindow>& w) {
    if (!w) return nullptr;
    return json::array({w->begin, w->end});
}

inline std::optional<FitWindow> read_window(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
        throw ConfigError(std::string("'") + key + "' must be [begin, end] or null");
    FitWindow w{a[0].get<double>(), a[1].get<double>()};
    if (!(w.end > w.begin)) throw ConfigError(std::string("'") + key + "' must have end > begin");
    return w;
}

}  // namespace detail

inline json to_json(const TBParams& p) {
    return {{"hopping", p.hopping}, {"period", p.period},   {"hbar", p.hbar},
            {"force", p.force},     {"gamma", p.gamma},     {"sites", p.sites},
            {"longer_hoppings", p.longer_hoppings}};
}

inline json to_json(const ContinuumParams& c) {
    return {{"depth", c.depth}, {"force", c.force},           {"gamma", c.gamma},  {"z_min", c.z_min},
            {"z_max", c.z_max}, {"points", c.points},         {"mask_width", c.mask_width},
            {"window", c.window}};
}

inline json to_json(const SdeConfig& s) {
    return {{"dt", s.dt},
            {"duration", s.duration},
            {"trajectories", s.trajectories},
            {"seed", s.seed},
            {"scheme", to_string(s.scheme)},
            {"record_every", s.record_every},
            {"normalize_by_survival", s.normalize_by_survival}};
}

inline json to_json(const ExperimentConfig& c) {
    return {{"name", c.name},
            {"model", to_string(c.model)},
            {"tight_binding", [&] {
                 json t = to_json(c.tight_binding);
                 t["edge_margin"] = c.edge_margin;
                 return t;
             }()},
            {"continuum", to_json(c.continuum)},
            {"sde", to_json(c.sde)},
            {"packet", {{"width", c.packet_width}, {"center", c.packet_center}}},
            {"bands", {{"count", c.bands}, {"kappa_points", c.kappa_points}, {"planewaves", c.planewaves}}},
            {"analysis",
             {{"observables", c.observables},
              {"decay_window", detail::window_json(c.decay_window)},
              {"diffusion_window", detail::window_json(c.diffusion_window)},
              {"depletion_window", detail::window_json(c.depletion_window)}}},
            {"output",
             {{"directory", c.output_dir},
              {"snapshot_times", c.snapshot_times},
              {"snapshot_stride", c.snapshot_stride}}}};
}

// Missing keys keep their defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const json& j) {
    using detail::read;
    detail::check_keys(j, {"name", "model", "tight_binding", "continuum", "sde", "packet", "bands", "analysis", "output"},
                       "config");
    ExperimentConfig c;
    read(j, "name", c.name);
    if (j.contains("model")) c.model = model_from_string(j.at("model").get<std::string>());
    if (j.contains("tight_binding")) {
        const auto& t = j.at("tight_binding");
        detail::check_keys(t, {"hopping", "period", "hbar", "force", "gamma", "sites", "longer_hoppings", "edge_margin"},
                           "tight_binding");
        read(t, "edge_margin", c.edge_margin);
        auto& p = c.tight_binding;
        read(t, "hopping", p.hopping);
        read(t, "period", p.period);
        read(t, "hbar", p.hbar);
        read(t, "force", p.force);
        read(t, "gamma", p.gamma);
        read(t, "sites", p.sites);
        read(t, "longer_hoppings", p.longer_hoppings);
    }
    if (j.contains("continuum")) {
        const auto& t = j.at("continuum");
        detail::check_keys(t, {"depth", "force", "gamma", "z_min", "z_max", "points", "mask_width", "window"},
                           "continuum");
        auto& p = c.continuum;
        read(t, "depth", p.depth);
        read(t, "force", p.force);
        read(t, "gamma", p.gamma);
        read(t, "z_min", p.z_min);
        read(t, "z_max", p.z_max);
        read(t, "points", p.points);
        read(t, "mask_width", p.mask_width);
        read(t, "window", p.window);
    }
    if (j.contains("sde")) {
        const auto& t = j.at("sde");
        detail::check_keys(t, {"dt", "duration", "trajectories", "seed", "scheme", "record_every",
                               "normalize_by_survival"},
                           "sde");
        auto& s = c.sde;
        read(t, "dt", s.dt);
        read(t, "duration", s.duration);
        read(t, "trajectories", s.trajectories);
        read(t, "seed", s.seed);
        if (t.contains("scheme")) s.scheme = scheme_from_string(t.at("scheme").get<std::string>());
        read(t, "record_every", s.record_every);
        read(t, "normalize_by_survival", s.normalize_by_survival);
    }
    if (j.contains("packet")) {
        const auto& t = j.at("packet");
        detail::check_keys(t, {"width", "center"}, "packet");
        read(t, "width", c.packet_width);
        read(t, "center", c.packet_center);
    }
    if (j.contains("bands")) {
        const auto& t = j.at("bands");
        detail::check_keys(t, {"count", "kappa_points", "planewaves"}, "bands");
        read(t, "count", c.bands);
        read(t, "kappa_points", c.kappa_points);
        read(t, "planewaves", c.planewaves);
    }
    if (j.contains("analysis")) {
        const auto& t = j.at("analysis");
        detail::check_keys(t, {"observables", "decay_window", "diffusion_window", "depletion_window"}, "analysis");
        read(t, "observables", c.observables);
        c.decay_window = detail::read_window(t, "decay_window");
        c.diffusion_window = detail::read_window(t, "diffusion_window");
        c.depletion_window = detail::read_window(t, "depletion_window");
        for (const auto& o : c.observables)
            if (o != "velocity" && o != "dispersion" && o != "survival")
                throw ConfigError("unknown observable '" + o + "' (expected velocity, dispersion or survival)");
    }
    if (j.contains("output")) {
        const auto& t = j.at("output");
        detail::check_keys(t, {"directory", "snapshot_times", "snapshot_stride"}, "output");
        read(t, "directory", c.output_dir);
        read(t, "snapshot_times", c.snapshot_times);
        read(t, "snapshot_stride", c.snapshot_stride);
        if (c.snapshot_stride == 0) throw ConfigError("snapshot_stride must be positive");
    }
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

// Applies "a.b.c=value"; value is parsed as JSON, falling back to a string.
inline void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("empty key in override '" + path + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

// FNV-1a over the canonical (sorted-key) JSON text.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_string(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace bloch
