// bloch — run experiments and presets, refit stored series, check acceptance thresholds.
//
// Exit codes: 0 ok, 1 I/O or internal error, 2 configuration error,
// 3 numerical abort, 4 acceptance threshold failed (check).

#include "bloch/criteria.hpp"
#include "bloch/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace bloch;

namespace {

struct Overrides {
    std::vector<std::string> set;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trajectories;
    std::optional<double> dt;
};

ExperimentConfig apply(const ExperimentConfig& base, const Overrides& o) {
    json j = to_json(base);
    for (const auto& a : o.set) apply_override(j, a);
    if (o.seed) j["sde"]["seed"] = *o.seed;
    if (o.trajectories) j["sde"]["trajectories"] = *o.trajectories;
    if (o.dt) j["sde"]["dt"] = *o.dt;
    return config_from_json(j);
}

void print_fits(const ExperimentResult& r) {
    std::cout << r.config.name;
    if (r.summary.contains("fits"))
        for (auto it = r.summary["fits"].begin(); it != r.summary["fits"].end(); ++it) {
            const auto& f = it.value();
            if (f.contains("error")) std::cout << "  " << it.key() << ": " << f["error"].get<std::string>();
            else
                std::cout << "  " << it.key() << "=" << f["estimate"].get<double>() << " +- "
                          << f["standard_error"].get<double>();
        }
    if (r.summary.contains("bands"))
        std::cout << "  cosine-fit residual=" << r.summary["bands"]["cosine_fit"]["relative_residual"].get<double>();
    std::cout << "\n";
}

std::vector<ExperimentResult> run_all(const std::vector<ExperimentConfig>& configs, const fs::path& out, bool verbose) {
    for (const auto& c : configs) validate_experiment(c);  // all preconditions before any compute
    std::vector<ExperimentResult> results;
    for (const auto& c : configs) {
        if (verbose) std::cerr << "running " << c.name << " (" << to_string(c.model) << ")\n";
        results.push_back(execute_experiment(c));
        for (const auto& f : write_artifacts(results.back(), out))
            if (verbose) std::cerr << "  wrote " << f.string() << "\n";
        print_fits(results.back());
    }
    return results;
}

std::vector<CheckLine> evaluate(const std::string& preset, const std::vector<ExperimentResult>& r, bool quick,
                                const std::vector<ExperimentResult>& extra) {
    if (preset == "fig1") return {check_decay_law(r[0])};
    if (preset == "fig2") return {check_diffusion(r)};
    if (preset == "fig3") return {check_band_structure(*r[0].bands, *r[1].bands)};
    if (preset == "fig4" || preset == "fig5") return {check_coherent_continuum(r[0])};
    if (preset == "fig6") return {check_slowdown(r[0], r[1])};
    if (preset == "fig7") return {check_slowdown(extra[0], extra[1], &r[0], &r[1])};
    if (preset == "fig8") return {check_decoherence_map(r[0])};
    if (preset == "table1") return {check_table1(r, quick)};
    if (preset == "oracle") return {check_oracle(r[0], r[1])};
    throw ConfigError("no acceptance check for preset '" + preset + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bloch oscillations with spontaneous emission: lattice, master-equation and continuum simulations"};
    app.set_version_flag("--version", std::string(version_string));
    app.require_subcommand(1);

    Overrides ov;
    std::string out_dir;
    bool quick = false, verbose = false;
    unsigned threads = 0;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--set", ov.set, "Override a config field, e.g. --set sde.trajectories=500 (repeatable)");
        cmd->add_option("--seed", ov.seed, "Master seed");
        cmd->add_option("--trajectories", ov.trajectories, "Ensemble size");
        cmd->add_option("--dt", ov.dt, "Time step");
        cmd->add_option("--out", out_dir, "Output directory (default: config output.directory)");
        cmd->add_option("--threads", threads, "Worker threads (default: BLOCH_THREADS or all cores)");
        cmd->add_flag("-v,--verbose", verbose, "Progress on stderr");
    };

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run one experiment described by a JSON config");
    run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    add_common(run);

    std::string preset_name;
    auto* preset = app.add_subcommand("preset", "Run a named preset (" + [] {
        std::string s;
        for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }() + ")");
    preset->add_option("name", preset_name, "Preset name")->required();
    preset->add_flag("--quick", quick, "Reduced ensemble sizes");
    add_common(preset);

    std::string csv_path, kind;
    std::vector<double> window;
    auto* fit = app.add_subcommand("fit", "Refit a stored series");
    fit->add_option("csv", csv_path, "Series CSV written by run/preset")->required()->check(CLI::ExistingFile);
    fit->add_option("--kind", kind, "Fit kind")->required()->check(CLI::IsMember({"decay", "diffusion", "depletion"}));
    fit->add_option("--window", window, "Fit window: begin end")->expected(2);

    auto* show = app.add_subcommand("config", "Print a preset's configs as JSON, one file each with --out");
    show->add_option("name", preset_name, "Preset name")->required();
    show->add_flag("--quick", quick, "Reduced ensemble sizes");
    show->add_option("--out", out_dir, "Write <config name>.json files here instead of printing");

    std::string from_dir;
    auto* check = app.add_subcommand("check", "Run a preset and assert its acceptance thresholds");
    check->add_option("name", preset_name, "Preset name")->required();
    check->add_option("--from", from_dir, "Re-evaluate series stored by an earlier run instead of recomputing")
        ->check(CLI::ExistingDirectory);
    check->add_flag("--quick", quick, "Reduced ensemble sizes (ordering checks only where applicable)");
    add_common(check);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (threads > 0) setenv("BLOCH_THREADS", std::to_string(threads).c_str(), 1);

    try {
        if (*run) {
            std::ifstream is(config_path);
            std::stringstream ss;
            ss << is.rdbuf();
            const ExperimentConfig c = apply(parse_config(ss.str()), ov);
            run_all({c}, out_dir.empty() ? fs::path(c.output_dir) : fs::path(out_dir), verbose);
            return 0;
        }
        if (*show) {
            for (const auto& c : preset_configs(preset_name, quick)) {
                const std::string text = to_json(c).dump(2) + "\n";
                if (out_dir.empty()) {
                    std::cout << text;
                    continue;
                }
                fs::create_directories(out_dir);
                std::ofstream os(fs::path(out_dir) / (c.name + ".json"));
                if (!(os << text)) throw std::runtime_error("cannot write config to " + out_dir);
            }
            return 0;
        }
        if (*preset || *check) {
            std::vector<ExperimentConfig> configs;
            for (const auto& c : preset_configs(preset_name, quick)) configs.push_back(apply(c, ov));
            const fs::path out = out_dir.empty() ? fs::path("out") / preset_name : fs::path(out_dir);
            std::vector<ExperimentConfig> extra_configs;
            if (*check && preset_name == "fig7")
                for (const auto& c : preset_configs("fig6", quick)) extra_configs.push_back(apply(c, ov));
            for (const auto& c : extra_configs) validate_experiment(c);
            std::vector<ExperimentResult> results, extra;
            if (!from_dir.empty()) {
                if (preset_name == "fig3" || preset_name == "fig4" || preset_name == "fig5" || preset_name == "fig8")
                    throw ConfigError("check " + preset_name + " needs dumps that are not stored; run it without --from");
                for (const auto& c : configs) results.push_back(load_result(c, from_dir));
                for (const auto& c : extra_configs) extra.push_back(load_result(c, from_dir));
            } else {
                results = run_all(configs, out, verbose);
                extra = run_all(extra_configs, out, verbose);
            }
            if (!*check) return 0;
            bool ok = true;
            for (const auto& line : evaluate(preset_name, results, quick, extra)) {
                std::cout << (line.pass ? "PASS " : "FAIL ") << line.id << ": " << line.detail << "\n";
                ok = ok && line.pass;
            }
            return ok ? 0 : 4;
        }
        if (*fit) {
            const SeriesFile f = read_series_csv(csv_path);
            if (!f.config) throw ConfigError("CSV header carries no config; cannot infer fit parameters");
            ExperimentConfig c = *f.config;
            std::optional<FitWindow> w;
            if (window.size() == 2) w = FitWindow{window[0], window[1]};
            FitResult r;
            if (kind == "decay") {
                if (w) c.decay_window = w;
                r = decay_fit(c, f.series);
            } else if (kind == "diffusion") {
                if (w) c.diffusion_window = w;
                r = diffusion_fit(c, f.series);
            } else {
                if (w) c.depletion_window = w;
                r = depletion_fit(c, f.series);
            }
            json j = fit_to_json(r);
            j["kind"] = kind;
            j["source_config_hash"] = f.config_hash;
            std::cout << j.dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
