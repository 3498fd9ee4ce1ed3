#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "evspd/experiment.hpp"

#include "helpers.hpp"

using namespace evspd;

namespace {

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.seed = 21;
    cfg.noise_sigma = 0.05;
    cfg.duration_s = 2;
    cfg.channels = 4;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("pipeline produces reports and a sane accuracy") {
    testutil::TempDir dir("exp");
    auto result = run_experiment(small_config(), dir.path);
    REQUIRE(result.channels == 4);
    REQUIRE(result.event_count > 0);
    REQUIRE(result.mean_accuracy.has_value());
    REQUIRE(*result.mean_accuracy > 0.5);
    for (const char* name : {"thresholds.csv", "spikes.csv", "metrics.csv", "summary.json",
                             "recording.truth.csv"})
        REQUIRE(std::filesystem::exists(dir.path / name));

    auto summary = nlohmann::json::parse(slurp(dir.path / "summary.json"));
    REQUIRE(summary["channels"] == 4);
    REQUIRE(summary["mean_accuracy"].get<double>() == Catch::Approx(*result.mean_accuracy));
}

TEST_CASE("identical seeds give byte-identical reports; threads do not matter") {
    testutil::TempDir a("exp_a"), b("exp_b"), c("exp_c");
    run_experiment(small_config(), a.path, 1);
    run_experiment(small_config(), b.path, 1);
    run_experiment(small_config(), c.path, 3);
    for (const char* name : {"thresholds.csv", "spikes.csv", "metrics.csv", "summary.json"}) {
        REQUIRE(slurp(a.path / name) == slurp(b.path / name));
        REQUIRE(slurp(a.path / name) == slurp(c.path / name));
    }
}

TEST_CASE("ideal hram pipeline reproduces the reference detector output") {
    testutil::TempDir a("exp_ev"), b("exp_hw");
    auto cfg = small_config();
    run_experiment(cfg, a.path);
    cfg.detector = "hram"; // mismatch defaults to none, dropped_fraction 0
    run_experiment(cfg, b.path);
    REQUIRE(slurp(a.path / "spikes.csv") == slurp(b.path / "spikes.csv"));
}

TEST_CASE("single-cell sweep agrees with the main run") {
    testutil::TempDir dir("exp_sweep");
    auto cfg = small_config();
    cfg.sweep_enabled = true;
    cfg.sweep_thr1 = {cfg.params.thr1};
    cfg.sweep_thr2 = {cfg.params.thr2};
    auto result = run_experiment(cfg, dir.path);
    REQUIRE(std::filesystem::exists(dir.path / "sweep.csv"));
    auto summary = nlohmann::json::parse(slurp(dir.path / "summary.json"));
    REQUIRE(summary["sweep_best"]["mean_accuracy"].get<double>() ==
            Catch::Approx(*result.mean_accuracy).margin(1e-9));
}

TEST_CASE("config json round trips and rejects unknown keys") {
    auto cfg = small_config();
    cfg.detector = "neo";
    cfg.sweep_enabled = true;
    auto j = pipeline_config_to_json(cfg);
    auto back = pipeline_config_from_json(j);
    REQUIRE(pipeline_config_to_json(back) == j);

    auto bad = j;
    bad["bogus_key"] = 1;
    REQUIRE_THROWS_AS(pipeline_config_from_json(bad), std::invalid_argument);

    auto bad_nested = j;
    bad_nested["dataset"]["gamma"] = 2;
    REQUIRE_THROWS_AS(pipeline_config_from_json(bad_nested), std::invalid_argument);
}

TEST_CASE("invalid configs are rejected") {
    testutil::TempDir dir("exp_bad");
    auto cfg = small_config();
    cfg.channels = 0;
    REQUIRE_THROWS_AS(run_experiment(cfg, dir.path), std::invalid_argument);

    cfg = small_config();
    cfg.detector = "wavelet";
    REQUIRE_THROWS_AS(run_experiment(cfg, dir.path), std::invalid_argument);

    cfg = small_config();
    cfg.dataset_source = "load"; // no base path
    REQUIRE_THROWS_AS(run_experiment(cfg, dir.path), std::invalid_argument);
}

TEST_CASE("pipeline can load a recording from disk") {
    testutil::TempDir dir("exp_load");
    auto cfg = small_config();
    cfg.write_raw = true;
    run_experiment(cfg, dir.path / "gen");

    PipelineConfig load_cfg;
    load_cfg.dataset_source = "load";
    load_cfg.dataset_base = (dir.path / "gen" / "recording").string();
    load_cfg.channels = 4;
    auto result = run_experiment(load_cfg, dir.path / "run");
    REQUIRE(result.channels == 4);
    REQUIRE(result.mean_accuracy.has_value()); // truth csv travels with the raw file
}
