// Config parsing, overrides and hashing, series CSV round trips, presets and
// the command-line tool's exit codes and reproducibility.

#include "bloch/experiment.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

using namespace bloch;

namespace {

fs::path scratch_dir(const std::string& tag) {
    const fs::path d = fs::temp_directory_path() / ("bloch_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(BLOCH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

ExperimentConfig tiny_lattice_run() {
    ExperimentConfig c;
    c.name = "tiny";
    c.model = ModelKind::TightBinding;
    c.tight_binding.sites = 61;
    c.tight_binding.force = -0.1;
    c.tight_binding.gamma = 0.05;
    c.packet_width = 4.0;
    c.sde.duration = 10.0;
    c.sde.trajectories = 8;
    c.sde.seed = 5;
    c.observables = {"velocity"};
    return c;
}

}  // namespace

TEST(ConfigJson, RandomizedRoundTrip) {
    std::mt19937_64 gen(1234);
    std::uniform_real_distribution<double> x(-3.0, 3.0);
    std::uniform_int_distribution<int> n(3, 500);
    for (int k = 0; k < 200; ++k) {
        ExperimentConfig c;
        c.name = "cfg" + std::to_string(k);
        c.model = static_cast<ModelKind>(k % 5);
        c.tight_binding.hopping = x(gen);
        c.tight_binding.force = x(gen);
        c.tight_binding.gamma = std::abs(x(gen));
        c.tight_binding.sites = n(gen);
        if (k % 3 == 0) c.tight_binding.longer_hoppings = {x(gen), x(gen)};
        c.edge_margin = k % 11;
        c.continuum.depth = x(gen);
        c.continuum.force = x(gen) * 0.01;
        c.sde.dt = 0.001 * (1 + k % 7) / 3.0;
        c.sde.duration = 100.0 * std::abs(x(gen));
        c.sde.trajectories = static_cast<std::size_t>(n(gen));
        c.sde.seed = gen();
        c.sde.scheme = k % 2 ? Scheme::Heun : Scheme::EulerMaruyama;
        c.sde.normalize_by_survival = k % 4 == 1;
        c.packet_width = 1.0 + std::abs(x(gen));
        c.packet_center = x(gen);
        c.decay_window = FitWindow{1.0, 2.0 + std::abs(x(gen))};
        if (k % 2) c.depletion_window = FitWindow{x(gen), 10.0};
        c.snapshot_times = {0.0, std::abs(x(gen))};
        c.observables = {"velocity", "survival"};
        const ExperimentConfig back = parse_config(to_json(c).dump());
        EXPECT_EQ(to_json(back), to_json(c));
        EXPECT_EQ(config_hash(back), config_hash(c));
    }
}

TEST(ConfigJson, MissingKeysKeepDefaults) {
    const ExperimentConfig c = parse_config(R"({"name": "x", "sde": {"trajectories": 12}})");
    EXPECT_EQ(c.sde.trajectories, 12u);
    EXPECT_EQ(c.sde.dt, SdeConfig{}.dt);
    EXPECT_EQ(c.tight_binding.sites, TBParams{}.sites);
}

TEST(ConfigJson, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_config(R"({"nmae": "x"})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"sde": {"dtt": 0.1}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"sde": {"dt": "fast"}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"model": "qcd"})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"sde": {"scheme": "rk45"}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"analysis": {"observables": ["energy"]}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"analysis": {"decay_window": [5, 1]}})"), ConfigError);
    EXPECT_THROW(parse_config("{not json"), ConfigError);
}

TEST(ConfigJson, OverridesApplyDottedPaths) {
    json j = to_json(ExperimentConfig{});
    apply_override(j, "sde.trajectories=500");
    apply_override(j, "tight_binding.longer_hoppings=[0.1,0.02]");
    apply_override(j, "name=renamed");
    apply_override(j, "sde.scheme=heun");
    const ExperimentConfig c = config_from_json(j);
    EXPECT_EQ(c.sde.trajectories, 500u);
    EXPECT_EQ(c.tight_binding.longer_hoppings, (std::vector<double>{0.1, 0.02}));
    EXPECT_EQ(c.name, "renamed");
    EXPECT_EQ(c.sde.scheme, Scheme::Heun);
    EXPECT_THROW(apply_override(j, "no-equals-sign"), ConfigError);
    EXPECT_THROW(apply_override(j, "sde..dt=1"), ConfigError);
    apply_override(j, "sde.bogus=1");
    EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(ConfigJson, HashTracksEveryField) {
    ExperimentConfig a, b;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.sde.seed = 2;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(hash_string(0x1234).size(), 16u);
}

TEST(SeriesCsv, RoundTripIsExact) {
    ObservableSeries s;
    s.resize(5);
    std::mt19937_64 gen(6);
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < 5; ++i) {
        s.t[i] = 0.1 * i;
        for (auto* v : {&s.survival, &s.velocity, &s.velocity_err, &s.position, &s.position_err, &s.dispersion,
                        &s.dispersion_err, &s.velocity_sq, &s.velocity_sq_err, &s.norm})
            (*v)[i] = nd(gen);
    }
    s.trajectories = 17;
    s.normalized = true;
    const ExperimentConfig c = tiny_lattice_run();
    std::stringstream ss;
    write_series_csv(ss, s, c);
    const SeriesFile f = read_series_csv(ss);
    ASSERT_TRUE(f.config.has_value());
    EXPECT_EQ(to_json(*f.config), to_json(c));
    EXPECT_EQ(f.config_hash, hash_string(config_hash(c)));
    EXPECT_EQ(f.series.t, s.t);
    EXPECT_EQ(f.series.velocity, s.velocity);
    EXPECT_EQ(f.series.velocity_err, s.velocity_err);
    EXPECT_EQ(f.series.dispersion, s.dispersion);
    EXPECT_EQ(f.series.norm, s.norm);
    EXPECT_EQ(f.series.survival, s.survival);
    EXPECT_EQ(f.series.trajectories, 17u);
    EXPECT_TRUE(f.series.normalized);
}

TEST(SeriesCsv, RejectsMalformedInput) {
    std::stringstream bad("t,velocity\n1,2\n");
    EXPECT_THROW(read_series_csv(bad), ConfigError);
}

TEST(Presets, AllValidateAndRoundTrip) {
    for (const auto& name : preset_names())
        for (bool quick : {false, true})
            for (const auto& c : preset_configs(name, quick)) {
                EXPECT_NO_THROW(validate_experiment(c)) << name << "/" << c.name;
                EXPECT_EQ(config_hash(config_from_json(to_json(c))), config_hash(c)) << c.name;
            }
    EXPECT_THROW(preset_configs("fig99"), ConfigError);
}

TEST(StoredResults, ReloadRequiresMatchingConfig) {
    const fs::path dir = scratch_dir("reload");
    const ExperimentConfig c = tiny_lattice_run();
    const ExperimentResult r = execute_experiment(c);
    write_artifacts(r, dir);
    const ExperimentResult back = load_result(c, dir);
    EXPECT_EQ(back.series.velocity, r.series.velocity);
    ExperimentConfig other = c;
    other.sde.seed = 6;
    EXPECT_THROW(load_result(other, dir), ConfigError);
    other = c;
    other.name = "absent";
    EXPECT_THROW(load_result(other, dir), ConfigError);
    fs::remove_all(dir);
}

TEST(CommandLine, ExitCodes) {
    const fs::path dir = scratch_dir("cli");
    EXPECT_EQ(cli("--version"), 0);
    EXPECT_EQ(cli(""), 2);
    EXPECT_EQ(cli("preset no_such_preset --out " + dir.string()), 2);
    EXPECT_EQ(cli("config no_such_preset"), 2);

    write_text(dir / "bad.json", R"({"sde": {"dtt": 0.1}})");
    EXPECT_EQ(cli("run " + (dir / "bad.json").string() + " --out " + dir.string()), 2);

    ExperimentConfig edge = tiny_lattice_run();
    edge.name = "edge";
    edge.tight_binding.sites = 31;
    edge.tight_binding.force = 0.0;
    edge.tight_binding.gamma = 0.0;
    edge.sde.duration = 40.0;
    edge.packet_width = 3.0;
    write_text(dir / "edge.json", to_json(edge).dump());
    EXPECT_EQ(cli("run " + (dir / "edge.json").string() + " --out " + dir.string()), 3);

    // Both band structures at U = 4: the shallow-lattice comparison must fail.
    EXPECT_EQ(cli("check fig3 --set continuum.depth=4 --out " + dir.string()), 4);
    EXPECT_EQ(cli("check fig3 --out " + dir.string()), 0);
    fs::remove_all(dir);
}

TEST(CommandLine, PrintedPresetConfigsRunUnchanged) {
    const fs::path dir = scratch_dir("config");
    ASSERT_EQ(cli("config oracle --quick --out " + dir.string()), 0);
    const auto want = preset_configs("oracle", true);
    for (const auto& c : want) {
        const ExperimentConfig back = parse_config(slurp(dir / (c.name + ".json")));
        EXPECT_EQ(config_hash(back), config_hash(c)) << c.name;
    }
    fs::remove_all(dir);
}

TEST(CommandLine, RerunsAreByteIdenticalForAnyThreadCount) {
    const fs::path dir = scratch_dir("rerun");
    write_text(dir / "tiny.json", to_json(tiny_lattice_run()).dump());
    const std::string cfg = (dir / "tiny.json").string();
    ASSERT_EQ(cli("run " + cfg + " --threads 1 --out " + (dir / "a").string()), 0);
    ASSERT_EQ(cli("run " + cfg + " --threads 3 --out " + (dir / "b").string()), 0);
    const std::string a = slurp(dir / "a" / "tiny.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "b" / "tiny.csv"));
    ASSERT_EQ(cli("run " + cfg + " --seed 99 --out " + (dir / "c").string()), 0);
    EXPECT_NE(a, slurp(dir / "c" / "tiny.csv"));
    fs::remove_all(dir);
}
