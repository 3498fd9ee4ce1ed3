#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evspd/baselines.hpp"
#include "evspd/calibration.hpp"
#include "evspd/detector.hpp"
#include "evspd/encoder.hpp"
#include "evspd/filters.hpp"
#include "evspd/hram.hpp"
#include "evspd/metrics.hpp"
#include "evspd/synth.hpp"

namespace evspd {

// Full pipeline description: dataset -> band-pass -> encoder -> detector
// -> evaluation. Every field has a default; unknown JSON keys are
// rejected.
struct PipelineConfig {
    std::uint64_t seed = 1;

    // dataset: "synthesize" generates data, "load" reads <base>.raw/.json
    std::string dataset_source = "synthesize";
    std::string dataset_base;
    double noise_sigma = 0.1;
    double duration_s = 60.0;
    double sample_rate_hz = 24000.0;
    double firing_rate_hz = 20.0;
    std::size_t channels = 64;
    double min_separation_s = 0.002;

    bool bandpass_enabled = true;
    double band_low_hz = 300.0;
    double band_high_hz = 3000.0;

    std::string encoder_mode = "frac-peak:0.1";
    double fallback_threshold = 0.1;

    // detector: evspd | hram | neo | abs
    std::string detector = "evspd";
    EvSpdParams params;
    BaselineParams baseline;
    MismatchSpec mismatch = MismatchSpec::none();
    double dropped_fraction = 0.0;
    double leak_tau_s = 0.0;
    std::string vbp = "nominal"; // nominal | auto (calibrate first)

    std::uint32_t tolerance_us = 1000;

    bool sweep_enabled = false;
    std::vector<double> sweep_thr1 = {1, 2, 3, 4, 5, 6};
    std::vector<int> sweep_thr2 = {1, 2, 3, 4, 5, 6, 7};

    bool write_raw = false;
    bool write_events = false;

    void validate() const {
        if (dataset_source != "synthesize" && dataset_source != "load")
            throw std::invalid_argument("config: dataset.source must be synthesize or load");
        if (dataset_source == "load" && dataset_base.empty())
            throw std::invalid_argument("config: dataset.base required when loading");
        if (channels == 0) throw std::invalid_argument("config: empty channel set");
        if (detector != "evspd" && detector != "hram" && detector != "neo" && detector != "abs")
            throw std::invalid_argument("config: unknown detector " + detector);
        if (vbp != "nominal" && vbp != "auto")
            throw std::invalid_argument("config: vbp must be nominal or auto");
        params.validate();
        baseline.validate();
        mismatch.validate();
        ThresholdSpec::parse(encoder_mode);
    }
};

inline nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& c) {
    nlohmann::ordered_json p;
    to_json(p, c.params);
    nlohmann::ordered_json m;
    to_json(m, c.mismatch);
    return {
        {"seed", c.seed},
        {"dataset",
         {{"source", c.dataset_source},
          {"base", c.dataset_base},
          {"noise_sigma", c.noise_sigma},
          {"duration_s", c.duration_s},
          {"sample_rate_hz", c.sample_rate_hz},
          {"firing_rate_hz", c.firing_rate_hz},
          {"channels", c.channels},
          {"min_separation_s", c.min_separation_s}}},
        {"bandpass", {{"enabled", c.bandpass_enabled}, {"low_hz", c.band_low_hz}, {"high_hz", c.band_high_hz}}},
        {"encoder", {{"mode", c.encoder_mode}, {"fallback_threshold", c.fallback_threshold}}},
        {"detector",
         {{"kind", c.detector},
          {"params", p},
          {"baseline",
           {{"neo_window", c.baseline.neo_window},
            {"neo_thresh_mult", c.baseline.neo_thresh_mult},
            {"abs_mult", c.baseline.abs_mult},
            {"refractory_us", c.baseline.refractory_us}}},
          {"mismatch", m},
          {"dropped_fraction", c.dropped_fraction},
          {"leak_tau_s", c.leak_tau_s},
          {"vbp", c.vbp}}},
        {"evaluate", {{"tolerance_us", c.tolerance_us}}},
        {"sweep", {{"enabled", c.sweep_enabled}, {"thr1", c.sweep_thr1}, {"thr2", c.sweep_thr2}}},
        {"outputs", {{"write_raw", c.write_raw}, {"write_events", c.write_events}}},
    };
}

namespace detail {

[[noreturn]] inline void unknown_key(const std::string& section, const std::string& key) {
    throw std::invalid_argument("config: unknown key " + section + "." + key);
}

} // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "dataset") {
            for (const auto& [k, v] : value.items()) {
                if (k == "source") c.dataset_source = v.get<std::string>();
                else if (k == "base") c.dataset_base = v.get<std::string>();
                else if (k == "noise_sigma") c.noise_sigma = v.get<double>();
                else if (k == "duration_s") c.duration_s = v.get<double>();
                else if (k == "sample_rate_hz") c.sample_rate_hz = v.get<double>();
                else if (k == "firing_rate_hz") c.firing_rate_hz = v.get<double>();
                else if (k == "channels") c.channels = v.get<std::size_t>();
                else if (k == "min_separation_s") c.min_separation_s = v.get<double>();
                else detail::unknown_key("dataset", k);
            }
        } else if (key == "bandpass") {
            for (const auto& [k, v] : value.items()) {
                if (k == "enabled") c.bandpass_enabled = v.get<bool>();
                else if (k == "low_hz") c.band_low_hz = v.get<double>();
                else if (k == "high_hz") c.band_high_hz = v.get<double>();
                else detail::unknown_key("bandpass", k);
            }
        } else if (key == "encoder") {
            for (const auto& [k, v] : value.items()) {
                if (k == "mode") c.encoder_mode = v.get<std::string>();
                else if (k == "fallback_threshold") c.fallback_threshold = v.get<double>();
                else detail::unknown_key("encoder", k);
            }
        } else if (key == "detector") {
            for (const auto& [k, v] : value.items()) {
                if (k == "kind") c.detector = v.get<std::string>();
                else if (k == "params") c.params = evspd_params_from_json(v);
                else if (k == "baseline") {
                    for (const auto& [bk, bv] : v.items()) {
                        if (bk == "neo_window") c.baseline.neo_window = bv.get<std::size_t>();
                        else if (bk == "neo_thresh_mult") c.baseline.neo_thresh_mult = bv.get<double>();
                        else if (bk == "abs_mult") c.baseline.abs_mult = bv.get<double>();
                        else if (bk == "refractory_us") c.baseline.refractory_us = bv.get<std::uint32_t>();
                        else detail::unknown_key("detector.baseline", bk);
                    }
                } else if (k == "mismatch") c.mismatch = mismatch_from_json(v);
                else if (k == "dropped_fraction") c.dropped_fraction = v.get<double>();
                else if (k == "leak_tau_s") c.leak_tau_s = v.get<double>();
                else if (k == "vbp") c.vbp = v.get<std::string>();
                else detail::unknown_key("detector", k);
            }
        } else if (key == "evaluate") {
            for (const auto& [k, v] : value.items()) {
                if (k == "tolerance_us") c.tolerance_us = v.get<std::uint32_t>();
                else detail::unknown_key("evaluate", k);
            }
        } else if (key == "sweep") {
            for (const auto& [k, v] : value.items()) {
                if (k == "enabled") c.sweep_enabled = v.get<bool>();
                else if (k == "thr1") c.sweep_thr1 = v.get<std::vector<double>>();
                else if (k == "thr2") c.sweep_thr2 = v.get<std::vector<int>>();
                else detail::unknown_key("sweep", k);
            }
        } else if (key == "outputs") {
            for (const auto& [k, v] : value.items()) {
                if (k == "write_raw") c.write_raw = v.get<bool>();
                else if (k == "write_events") c.write_events = v.get<bool>();
                else detail::unknown_key("outputs", k);
            }
        } else {
            detail::unknown_key("", key);
        }
    }
    c.validate();
    return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    return pipeline_config_from_json(nlohmann::json::parse(in));
}

// CSV writers shared by the CLI and the experiment runner. Undefined
// metrics are written as empty fields.
inline void write_spikes_csv(const std::filesystem::path& path,
                             const std::vector<std::vector<std::uint32_t>>& detections) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "channel,t_us\n";
    for (std::size_t c = 0; c < detections.size(); ++c)
        for (std::uint32_t t : detections[c]) out << c << ',' << t << '\n';
}

inline std::vector<std::vector<std::uint32_t>> read_spikes_csv(const std::filesystem::path& path,
                                                               std::size_t n_channels) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<std::uint32_t>> detections(n_channels);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("malformed spikes row: " + line);
        const std::size_t ch = std::stoul(line.substr(0, comma));
        if (ch >= n_channels) throw std::runtime_error("spikes channel out of range: " + line);
        detections[ch].push_back(static_cast<std::uint32_t>(std::stoul(line.substr(comma + 1))));
    }
    return detections;
}

inline std::string format_metric(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<MatchResult>& matches) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "channel,tp,fp,fn,sensitivity,fdr,accuracy\n";
    for (std::size_t c = 0; c < matches.size(); ++c) {
        const auto m = metrics(matches[c]);
        out << c << ',' << matches[c].tp << ',' << matches[c].fp << ',' << matches[c].fn << ','
            << format_metric(m.sensitivity) << ',' << format_metric(m.fdr) << ','
            << format_metric(m.accuracy) << '\n';
    }
}

inline void write_sweep_csv(const std::filesystem::path& path, const SweepGrid& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "thr1,thr2,mean_accuracy\n";
    char buf[64];
    for (std::size_t i = 0; i < grid.thr1_values.size(); ++i)
        for (std::size_t j = 0; j < grid.thr2_values.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%g,%d,%.6f\n", grid.thr1_values[i], grid.thr2_values[j],
                          grid.mean_accuracy[i][j]);
            out << buf;
        }
}

inline void write_thresholds_csv(const std::filesystem::path& path, const PickedThresholds& picked) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "channel,threshold,fell_back\n";
    char buf[64];
    for (std::size_t c = 0; c < picked.per_channel.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%d\n", c, picked.per_channel[c],
                      int(picked.fell_back[c]));
        out << buf;
    }
}

inline std::vector<std::vector<std::uint32_t>> truth_to_us(
    const std::vector<std::vector<double>>& truth_s) {
    std::vector<std::vector<std::uint32_t>> out(truth_s.size());
    for (std::size_t c = 0; c < truth_s.size(); ++c) {
        out[c].reserve(truth_s[c].size());
        for (double t : truth_s[c])
            out[c].push_back(static_cast<std::uint32_t>(std::llround(t * 1e6)));
    }
    return out;
}

// Aggregate of one pipeline execution.
struct ExperimentResult {
    std::size_t channels = 0;
    std::uint64_t duration_us = 0;
    std::size_t event_count = 0;
    std::vector<std::vector<std::uint32_t>> detections;
    std::vector<MatchResult> matches; // empty when no ground truth
    std::optional<double> mean_accuracy;
    std::optional<double> mean_sensitivity;
    std::optional<double> mean_fdr;
};

// Mean over channels with a defined value.
inline std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& v : values)
        if (v) {
            sum += *v;
            ++n;
        }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

// Execute the configured pipeline, writing reports under out_dir. File
// contents depend only on the config (byte-identical reruns; thread count
// does not affect results).
inline ExperimentResult run_experiment(const PipelineConfig& cfg,
                                       const std::filesystem::path& out_dir, unsigned n_threads = 1) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    Recording rec;
    if (cfg.dataset_source == "synthesize") {
        SynthesisSpec spec;
        spec.templates = builtin_templates(cfg.sample_rate_hz);
        spec.firing_rate_hz = cfg.firing_rate_hz;
        spec.noise_sigma = cfg.noise_sigma;
        spec.duration_s = cfg.duration_s;
        spec.sample_rate_hz = cfg.sample_rate_hz;
        spec.rng_seed = cfg.seed;
        spec.min_separation_s = cfg.min_separation_s;
        spec.channels = cfg.channels;
        rec = synthesize(spec);
    } else {
        // channel count and rate come from the sidecar, not the config
        rec = load_recording(cfg.dataset_base);
    }
    if (rec.channels() == 0) throw std::invalid_argument("run_experiment: empty channel set");

    if (cfg.write_raw) save_recording(rec, out_dir / "recording");
    if (rec.has_ground_truth() && !cfg.write_raw)
        write_ground_truth_csv(out_dir / "recording.truth.csv", rec.ground_truth);

    if (cfg.bandpass_enabled) rec = bandpass(rec, cfg.band_low_hz, cfg.band_high_hz);

    const auto picked = pick_threshold(rec, ThresholdSpec::parse(cfg.encoder_mode), cfg.fallback_threshold);
    write_thresholds_csv(out_dir / "thresholds.csv", picked);
    const auto events = encode_recording(rec, picked.per_channel, n_threads);
    if (cfg.write_events) write_aer(out_dir / "events.aer", events);

    ExperimentResult result;
    result.channels = rec.channels();
    result.duration_us = static_cast<std::uint64_t>(std::llround(rec.duration_s() * 1e6));
    result.event_count = events.size();

    if (cfg.detector == "evspd") {
        result.detections = detect_all(events, rec.channels(), cfg.params, result.duration_us, n_threads);
    } else if (cfg.detector == "hram") {
        HramConfig hcfg;
        hcfg.params = cfg.params;
        hcfg.mismatch = cfg.mismatch;
        hcfg.dropped_fraction = cfg.dropped_fraction;
        hcfg.leak_tau_s = cfg.leak_tau_s;
        std::vector<std::uint8_t> codes;
        if (cfg.vbp == "auto") {
            double mean_thr = 0;
            for (double t : picked.per_channel) mean_thr += t;
            mean_thr /= static_cast<double>(picked.per_channel.size());
            const auto stimuli = default_calibration_stimuli(rec, mean_thr);
            const auto cal = calibrate(rec.channels(), hcfg, stimuli, 100, n_threads);
            codes.reserve(cal.size());
            for (const auto& c : cal) codes.push_back(c.code);
        }
        result.detections =
            run_macro(events, rec.channels(), hcfg, codes, result.duration_us, n_threads).detections;
    } else if (cfg.detector == "neo") {
        result.detections.assign(rec.channels(), {});
        parallel_for(rec.channels(), n_threads, [&](std::size_t c) {
            result.detections[c] = neo_detect(rec.samples[c], rec.sample_rate_hz, cfg.baseline);
        });
    } else { // abs
        result.detections.assign(rec.channels(), {});
        parallel_for(rec.channels(), n_threads, [&](std::size_t c) {
            result.detections[c] = abs_threshold_detect(rec.samples[c], rec.sample_rate_hz,
                                                        cfg.baseline.abs_mult, cfg.baseline.refractory_us);
        });
    }
    write_spikes_csv(out_dir / "spikes.csv", result.detections);

    nlohmann::ordered_json summary;
    summary["config"] = pipeline_config_to_json(cfg);
    summary["channels"] = result.channels;
    summary["event_count"] = result.event_count;
    summary["event_rate_per_channel_hz"] =
        result.duration_us > 0
            ? static_cast<double>(result.event_count) / (static_cast<double>(result.duration_us) * 1e-6) /
                  static_cast<double>(result.channels)
            : 0.0;

    if (rec.has_ground_truth()) {
        const auto truth_us = truth_to_us(rec.ground_truth);
        result.matches.resize(rec.channels());
        std::vector<std::optional<double>> acc(rec.channels()), sens(rec.channels()), fdr(rec.channels());
        for (std::size_t c = 0; c < rec.channels(); ++c) {
            result.matches[c] = match_spikes(truth_us[c], result.detections[c], cfg.tolerance_us);
            const auto m = metrics(result.matches[c]);
            acc[c] = m.accuracy;
            sens[c] = m.sensitivity;
            fdr[c] = m.fdr;
        }
        write_metrics_csv(out_dir / "metrics.csv", result.matches);
        result.mean_accuracy = mean_defined(acc);
        result.mean_sensitivity = mean_defined(sens);
        result.mean_fdr = mean_defined(fdr);
        summary["mean_accuracy"] =
            result.mean_accuracy ? nlohmann::ordered_json(*result.mean_accuracy) : nullptr;
        summary["mean_sensitivity"] =
            result.mean_sensitivity ? nlohmann::ordered_json(*result.mean_sensitivity) : nullptr;
        summary["mean_fdr"] = result.mean_fdr ? nlohmann::ordered_json(*result.mean_fdr) : nullptr;

        if (cfg.sweep_enabled) {
            auto per_channel_events = demux_events(events, rec.channels());
            const auto grid = sweep_thresholds(per_channel_events, truth_us, cfg.sweep_thr1,
                                               cfg.sweep_thr2, cfg.params, cfg.tolerance_us,
                                               result.duration_us, n_threads);
            write_sweep_csv(out_dir / "sweep.csv", grid);
            summary["sweep_best"] = {{"thr1", grid.best_thr1},
                                     {"thr2", grid.best_thr2},
                                     {"mean_accuracy", grid.best_accuracy}};
        }
    }

    std::ofstream out(out_dir / "summary.json");
    out << summary.dump(2) << '\n';
    return result;
}

} // namespace evspd
