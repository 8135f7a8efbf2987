// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
//
//   bloch_acceptance [--quick] [--out DIR] [--only 1,2,...]
//
// --quick uses the reduced preset ensembles (the depletion table then checks
// ordering only). Criterion 9 reruns every preset with at most four
// trajectories and a shortened horizon under 1 and 3 worker threads and
// compares the written files byte for byte, then repeats each criterion's
// statistic at half the time step.

#include "bloch/criteria.hpp"
#include "bloch/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace bloch;

namespace {

using Clock = std::chrono::steady_clock;

struct Harness {
    fs::path out;
    bool quick = false;
    std::map<std::string, ExperimentResult> cache;

    const ExperimentResult& run(const ExperimentConfig& c, const std::string& group) {
        if (auto it = cache.find(c.name); it != cache.end()) return it->second;
        const auto start = Clock::now();
        std::cerr << "  running " << c.name << " (" << to_string(c.model) << ", M=" << c.sde.trajectories
                  << ", dt=" << c.sde.dt << ") ... " << std::flush;
        ExperimentResult r = execute_experiment(c);
        fs::create_directories(out / group);
        write_artifacts(r, out / group);
        std::cerr << std::chrono::duration<double>(Clock::now() - start).count() << " s\n";
        return cache.emplace(c.name, std::move(r)).first->second;
    }

    std::vector<ExperimentConfig> preset(const std::string& name) const { return preset_configs(name, quick); }
};

ExperimentConfig half_step(ExperimentConfig c) {
    c.name += "_halfdt";
    c.sde.dt *= 0.5;
    if (c.sde.record_every > 0) c.sde.record_every *= 2;
    return c;
}

ExperimentConfig with_trajectories(ExperimentConfig c, std::size_t m, const std::string& suffix) {
    c.name += suffix;
    c.sde.trajectories = c.sde.trajectories > 1 ? m : 1;
    return c;
}

const ExperimentResult& find_cell(Harness& h, const std::vector<ExperimentConfig>& table, double depth, double gamma) {
    for (const auto& c : table)
        if (c.continuum.depth == depth && c.continuum.gamma == gamma) return h.run(c, "table1");
    throw ConfigError("table cell missing");
}

struct Line {
    int id;
    CheckLine check;
};

// ---------------------------------------------------------------- 9a. bit identity

// Capped copy of a preset config for the rerun comparison.
ExperimentConfig capped(ExperimentConfig c) {
    c.sde.trajectories = std::min<std::size_t>(c.sde.trajectories, 4);
    if (c.model == ModelKind::Continuum) c.sde.duration = std::min(c.sde.duration, 160.0);
    if (c.model == ModelKind::Lindblad) c.sde.duration = std::min(c.sde.duration, 40.0);
    std::erase_if(c.snapshot_times, [&](double t) { return t > c.sde.duration; });
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

CheckLine bit_identity(const fs::path& root, bool quick) {
    std::size_t files = 0, mismatched = 0, configs = 0;
    std::string bad;
    for (const auto& name : preset_names()) {
        for (const auto& c0 : preset_configs(name, quick)) {
            const ExperimentConfig c = capped(c0);
            ++configs;
            std::vector<fs::path> written[2];
            for (int k = 0; k < 2; ++k) {
                setenv("BLOCH_THREADS", k == 0 ? "1" : "3", 1);
                const fs::path dir = root / (k == 0 ? "threads1" : "threads3") / name;
                fs::create_directories(dir);
                written[k] = write_artifacts(execute_experiment(c), dir);
            }
            for (std::size_t i = 0; i < written[0].size(); ++i) {
                ++files;
                if (i >= written[1].size() || slurp(written[0][i]) != slurp(written[1][i])) {
                    ++mismatched;
                    bad += " " + written[0][i].filename().string();
                }
            }
        }
        std::cerr << "  rerun " << name << " done\n";
    }
    unsetenv("BLOCH_THREADS");
    return {"rerun", mismatched == 0,
            std::to_string(files) + " files from " + std::to_string(configs) +
                " capped preset configs compared across 1 and 3 threads, " + std::to_string(mismatched) +
                " differ" + bad};
}

// ---------------------------------------------------------------- 9b. half step

struct Shift {
    std::string what;
    double shift, tolerance;
    bool ok() const { return std::abs(shift) < tolerance; }
};

std::string describe(const std::vector<Shift>& shifts, bool& ok) {
    std::string s;
    for (const auto& x : shifts) {
        ok = ok && x.ok();
        s += x.what + " " + fmt(x.shift, 3) + " (tol " + fmt(x.tolerance, 3) + (x.ok() ? ")" : ", EXCEEDED)") + "; ";
    }
    return s;
}

double peak_spacing(const ExperimentResult& r) {
    const auto f = oscillation_features(r);
    require(f.peak_times.size() >= 2, "too few velocity peaks");
    return (f.peak_times.back() - f.peak_times.front()) / static_cast<double>(f.peak_times.size() - 1);
}

double mean_envelope_error(const EnvelopeComparison& e) {
    double s = 0.0;
    for (double x : e.continuum_err) s += x;
    return e.continuum_err.empty() ? 0.0 : s / static_cast<double>(e.continuum_err.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria for the Bloch-oscillation simulations"};
    Harness h;
    std::string out = "acceptance_out";
    std::string only_text;
    app.add_flag("--quick", h.quick, "Reduced ensembles");
    app.add_option("--out", out, "Directory for the series written along the way");
    app.add_option("--only", only_text, "Comma-separated criterion numbers (default: all)");
    CLI11_PARSE(app, argc, argv);
    h.out = out;
    fs::create_directories(h.out);

    std::set<int> only;
    {
        std::stringstream ss(only_text);
        for (std::string item; std::getline(ss, item, ',');)
            if (!item.empty()) only.insert(std::stoi(item));
    }
    auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };

    std::vector<Line> lines;
    auto record = [&](int id, const std::function<CheckLine()>& f) {
        if (!wanted(id)) return;
        std::cerr << "criterion " << id << "\n";
        const auto start = Clock::now();
        CheckLine c;
        try {
            c = f();
        } catch (const std::exception& e) {
            c = {"criterion-" + std::to_string(id), false, std::string("aborted: ") + e.what()};
        }
        c.detail += " [" + fmt(std::chrono::duration<double>(Clock::now() - start).count(), 3) + " s]";
        std::cout << (c.pass ? "PASS " : "FAIL ") << id << " " << c.id << ": " << c.detail << std::endl;
        lines.push_back({id, c});
    };

    const auto fig1 = h.preset("fig1");
    const auto fig2 = h.preset("fig2");
    const auto oracle = h.preset("oracle");
    const auto fig8 = h.preset("fig8");
    const auto fig3 = h.preset("fig3");
    const auto fig5 = h.preset("fig5");
    const auto table = h.preset("table1");

    record(1, [&] { return check_decay_law(h.run(fig1[0], "fig1")); });

    record(2, [&] {
        std::vector<ExperimentResult> runs;
        for (const auto& c : fig2) runs.push_back(h.run(c, "fig2"));
        return check_diffusion(runs);
    });

    record(3, [&] { return check_oracle(h.run(oracle[0], "oracle"), h.run(oracle[1], "oracle")); });

    record(4, [&] { return check_decoherence_map(h.run(fig8[0], "fig8")); });

    record(5, [&] { return check_band_structure(*h.run(fig3[0], "fig3").bands, *h.run(fig3[1], "fig3").bands); });

    record(6, [&] { return check_coherent_continuum(h.run(fig5[0], "fig5")); });

    record(7, [&] {
        std::vector<ExperimentResult> runs;
        for (const auto& c : table) runs.push_back(h.run(c, "table1"));
        return check_table1(runs, h.quick);
    });

    // The gamma = 0.01 table cells are the Fig. 6 / Fig. 7 ensembles (same seeds).
    record(8, [&] {
        const auto& c1 = find_cell(h, table, 1.0, 0.01);
        const auto& c4 = find_cell(h, table, 4.0, 0.01);
        const auto& t1 = h.run(detail::tb_companion(c1.config, "fig6_tb"), "fig6");
        const auto& t4 = h.run(detail::tb_companion(c4.config, "fig7_tb"), "fig7");
        return check_slowdown(c1, t1, &c4, &t4);
    });

    record(9, [&] {
        const CheckLine rerun = bit_identity(h.out / "rerun", h.quick);
        std::cout << "  9a " << rerun.detail << std::endl;
        bool ok = rerun.pass;
        std::string detail = rerun.pass ? "reruns bit-identical; " : "RERUN MISMATCH; ";

        auto section = [&](const std::string& label, const std::function<std::vector<Shift>()>& f) {
            std::string s;
            bool section_ok = true;
            try {
                s = describe(f(), section_ok);
            } catch (const std::exception& e) {
                section_ok = false;
                s = std::string("aborted: ") + e.what();
            }
            ok = ok && section_ok;
            std::cout << "  9b " << label << ": " << s << std::endl;
            detail += label + (section_ok ? " ok; " : " FAILED; ");
        };

        section("C1", [&] {
            const auto a = decay_law_stats(h.run(fig1[0], "fig1"));
            const auto b = decay_law_stats(h.run(half_step(fig1[0]), "dt"));
            const TBParams& p = fig1[0].tight_binding;
            return std::vector<Shift>{
                {"envelope rate", b.envelope.estimate - a.envelope.estimate, 0.2 * p.gamma},
                {"late <v^2>", b.late_velocity_sq - a.late_velocity_sq, 0.05 * stationary_velocity_sq(p)}};
        });
        section("C2", [&] {
            std::vector<Shift> s;
            for (const auto& c : fig2) {
                if (c.model != ModelKind::Lindblad) continue;
                const double a = diffusion_fit(c, h.run(c, "fig2").series).estimate;
                const auto hc = half_step(c);
                const double b = diffusion_fit(hc, h.run(hc, "dt").series).estimate;
                s.push_back({"D(F=" + fmt(c.tight_binding.force) + ")", b - a, 0.15 * diffusion_coefficient(c.tight_binding)});
            }
            return s;
        });
        section("C3", [&] {
            // Time-step bias of the exact reference in units of the ensemble's
            // standard errors, plus the half-step ensemble's own pull.
            const auto& tb = h.run(oracle[0], "oracle").series;
            const auto& a = h.run(oracle[1], "oracle").series;
            const auto& b = h.run(half_step(oracle[1]), "dt").series;
            double worst = 0.0;
            for (std::size_t i = 1; i < tb.t.size(); ++i) {
                const std::size_t j = index_near(a.t, tb.t[i]), k = index_near(b.t, tb.t[i]);
                worst = std::max({worst, std::abs(a.velocity[j] - b.velocity[k]) / tb.velocity_err[i],
                                  std::abs(a.position[j] - b.position[k]) / tb.position_err[i],
                                  std::abs(a.velocity_sq[j] - b.velocity_sq[k]) / tb.velocity_sq_err[i]});
            }
            const auto& tbh = h.run(half_step(oracle[0]), "dt");
            const CheckLine again = check_oracle(tbh, h.run(half_step(oracle[1]), "dt"));
            std::vector<Shift> s{{"reference bias [se]", worst, 3.0}};
            s.push_back({"half-step ensemble passes (0 = yes)", again.pass ? 0.0 : 1.0, 0.5});
            return s;
        });
        section("C4", [&] {
            const auto a = decoherence_stats(h.run(fig8[0], "fig8"));
            const auto b = decoherence_stats(h.run(half_step(fig8[0]), "dt"));
            return std::vector<Shift>{{"far profile / profile(0)", b.far_max / b.diagonal - a.far_max / a.diagonal, 0.05},
                                      {"estimate rel. error", b.estimate_error - a.estimate_error, 0.15}};
        });
        section("C5", [&] {
            // Band structure has no time step; recomputing must reproduce it exactly.
            const auto a = execute_experiment(fig3[0]);
            const auto& b = h.run(fig3[0], "fig3");
            return std::vector<Shift>{
                {"recomputed U=1 band max diff", (a.bands->energy - b.bands->energy).cwiseAbs().maxCoeff(), 1e-12}};
        });
        section("C6", [&] {
            const auto& a = h.run(fig5[0], "fig5");
            const auto& b = h.run(half_step(fig5[0]), "dt");
            const double T = fig5[0].continuum.bloch_period();
            const auto fa = oscillation_features(a), fb = oscillation_features(b);
            return std::vector<Shift>{{"mean peak spacing / T_B", (peak_spacing(b) - peak_spacing(a)) / T, 0.02},
                                      {"z_min emission share", fb.low_fraction - fa.low_fraction, 0.05},
                                      {"harmonic asymmetry", fb.asymmetry - fa.asymmetry, 0.5 * fa.asymmetry}};
        });

        // Continuum cells at M = 50 with the table seeds, at dt and dt/2.
        auto cell50 = [&](double depth, double gamma, bool half) -> const ExperimentResult& {
            for (const auto& c : table)
                if (c.continuum.depth == depth && c.continuum.gamma == gamma) {
                    ExperimentConfig m = c.sde.trajectories > 1 && c.sde.trajectories != 50
                                             ? with_trajectories(c, 50, "_M50")
                                             : c;
                    return half ? h.run(half_step(m), "dt") : h.run(m, m.name == c.name ? "table1" : "dt");
                }
            throw ConfigError("table cell missing");
        };
        section("C7", [&] {
            std::vector<Shift> s;
            for (double u : {1.0, 4.0})
                for (double g : {0.0, 0.01}) {
                    const auto& a = cell50(u, g, false);
                    const auto& b = cell50(u, g, true);
                    const double na = depletion_fit(a.config, a.series).estimate;
                    const double nb = depletion_fit(b.config, b.series).estimate;
                    const std::string label = "nu(U=" + fmt(u) + ",g=" + fmt(g) + ")";
                    if (u == 4.0 && g == 0.0) s.push_back({label + " abs", nb - na, 1e-5});
                    else s.push_back({label + " log-ratio", std::log(nb / na), std::log(2.0)});
                }
            return s;
        });
        section("C8", [&] {
            std::vector<Shift> s;
            for (double u : {1.0, 4.0}) {
                const auto& a = cell50(u, 0.01, false);
                const auto& b = cell50(u, 0.01, true);
                const auto& ta = h.run(detail::tb_companion(a.config, a.config.name + "_tb"), "dt");
                const auto& tb = h.run(detail::tb_companion(b.config, b.config.name + "_tb"), "dt");
                const auto ea = compare_envelopes(a, ta), eb = compare_envelopes(b, tb);
                s.push_back({"rms deviation U=" + fmt(u), eb.deviation - ea.deviation,
                             2.0 * std::max(mean_envelope_error(ea), mean_envelope_error(eb))});
            }
            return s;
        });
        return CheckLine{"determinism", ok, detail};
    });

    bool all = true;
    std::ofstream report(h.out / "acceptance_report.txt");
    for (const auto& l : lines) {
        all = all && l.check.pass;
        report << (l.check.pass ? "PASS " : "FAIL ") << l.id << " " << l.check.id << ": " << l.check.detail << "\n";
    }
    std::cout << (all ? "ALL PASS" : "SOME CRITERIA FAILED") << " (" << lines.size() << " checked"
              << (h.quick ? ", quick" : "") << ")" << std::endl;
    return all ? 0 : 1;
}
