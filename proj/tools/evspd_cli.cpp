// Command-line frontend for the event-based spike detection pipeline:
// dataset generation, delta-modulation encoding, reference and
// hardware-model detection, calibration, baselines, evaluation and the
// full reproduction suite. Logs go to stderr; data goes to files.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evspd/acceptance.hpp"
#include "evspd/baselines.hpp"
#include "evspd/calibration.hpp"
#include "evspd/detector.hpp"
#include "evspd/encoder.hpp"
#include "evspd/experiment.hpp"
#include "evspd/filters.hpp"
#include "evspd/hram.hpp"
#include "evspd/metrics.hpp"
#include "evspd/synth.hpp"

namespace fs = std::filesystem;
using namespace evspd;

namespace {

std::pair<std::string, std::string> split_pair(const std::string& text, const char* what) {
    const auto comma = text.find(',');
    if (comma == std::string::npos)
        throw std::invalid_argument(std::string(what) + ": expected two comma-separated paths");
    return {text.substr(0, comma), text.substr(comma + 1)};
}

std::size_t channels_for_events(const std::vector<AerEvent>& events, std::size_t flag_value) {
    if (flag_value > 0) return flag_value;
    std::size_t n = 0;
    for (const auto& e : events) n = std::max<std::size_t>(n, e.address + 1);
    return n == 0 ? 1 : n;
}

void write_counters_csv(const fs::path& path, const MacroResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "channel,bin,counter\n";
    for (std::size_t c = 0; c < result.counter_traces.size(); ++c)
        for (std::size_t i = 0; i < result.counter_traces[c].size(); ++i)
            out << c << ',' << i << ',' << int(result.counter_traces[c][i]) << '\n';
}

std::vector<TimedPulse> pulses_from_aer(const fs::path& path) {
    std::vector<TimedPulse> out;
    for (const auto& e : read_aer(path)) out.push_back({e.t_us, e.polarity});
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"event-based neural spike detection benchmark"};
    app.require_subcommand(1);

    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware)")
        ->envname("EVSPD_THREADS");

    // generate ----------------------------------------------------------
    auto* generate = app.add_subcommand("generate", "synthesize recordings with ground truth");
    std::vector<double> gen_noise = {0.05, 0.10, 0.15, 0.20};
    std::vector<double> gen_snr;
    double gen_duration = 60.0, gen_rate = 24000.0, gen_firing = 20.0;
    std::size_t gen_channels = 64;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    generate->add_option("--noise", gen_noise, "noise sigma tiers")->delimiter(',');
    generate->add_option("--snr", gen_snr, "target SNR tiers in dB (overrides --noise)")->delimiter(',');
    generate->add_option("--duration", gen_duration, "seconds per recording");
    generate->add_option("--sample-rate", gen_rate, "sample rate, Hz");
    generate->add_option("--firing", gen_firing, "firing rate, Hz");
    generate->add_option("--channels", gen_channels, "channels per recording");
    generate->add_option("--seed", gen_seed, "root seed")->envname("EVSPD_SEED");
    generate->add_option("--out", gen_out, "output directory")->required()->envname("EVSPD_OUT");

    // encode ------------------------------------------------------------
    auto* encode = app.add_subcommand("encode", "delta-modulate a recording into an AER stream");
    std::string enc_mode = "frac-peak:0.1", enc_in, enc_out, enc_csv, enc_thresholds_out;
    double enc_low = 300, enc_high = 3000;
    bool enc_no_bandpass = false;
    encode->add_option("--mode", enc_mode, "frac-peak:F | frac-p2p:F | fixed:V");
    encode->add_option("--in", enc_in, "recording base path (<base>.raw/.json)")->required();
    encode->add_option("--out", enc_out, "output .aer file")->required()->envname("EVSPD_OUT");
    encode->add_option("--csv", enc_csv, "also write a CSV mirror");
    encode->add_option("--thresholds-out", enc_thresholds_out, "write picked thresholds CSV");
    encode->add_option("--band-low", enc_low, "band-pass low edge, Hz");
    encode->add_option("--band-high", enc_high, "band-pass high edge, Hz");
    encode->add_flag("--no-bandpass", enc_no_bandpass, "skip band-pass filtering");

    // detect ------------------------------------------------------------
    auto* detect_cmd = app.add_subcommand("detect", "reference Ev-SPD detection on an AER stream");
    std::string det_params, det_events, det_out;
    std::size_t det_channels = 0;
    std::uint64_t det_duration_us = 0;
    detect_cmd->add_option("--params", det_params, "EvSpdParams JSON file")->envname("EVSPD_CONFIG");
    detect_cmd->add_option("--events", det_events, "input .aer file")->required();
    detect_cmd->add_option("--out", det_out, "output spikes.csv")->required()->envname("EVSPD_OUT");
    detect_cmd->add_option("--channels", det_channels, "channel count (default: max address + 1)");
    detect_cmd->add_option("--duration-us", det_duration_us, "stream duration override");

    // macro-run ---------------------------------------------------------
    auto* macro = app.add_subcommand("macro-run", "behavioral HRAM macro detection");
    std::string mac_events, mac_mismatch, mac_params, mac_vbp = "nominal", mac_out, mac_stimuli;
    std::size_t mac_channels = 0;
    std::uint64_t mac_duration_us = 0;
    double mac_dropped = 0.0064, mac_leak = 0.0;
    macro->add_option("--events", mac_events, "input .aer file")->required();
    macro->add_option("--mismatch", mac_mismatch, "MismatchSpec JSON file");
    macro->add_option("--params", mac_params, "EvSpdParams JSON file");
    macro->add_option("--vbp", mac_vbp, "nominal | auto | fixed code 0-3");
    macro->add_option("--stimuli", mac_stimuli, "spike.aer,noise.aer (required for --vbp auto)");
    macro->add_option("--out", mac_out, "counters.csv,spikes.csv")->required()->envname("EVSPD_OUT");
    macro->add_option("--channels", mac_channels, "channel count (default: max address + 1)");
    macro->add_option("--duration-us", mac_duration_us, "stream duration override");
    macro->add_option("--dropped-fraction", mac_dropped, "non-accumulation share of each period");
    macro->add_option("--leak-tau-s", mac_leak, "eDRAM leak time constant (0 = off)");

    // calibrate ---------------------------------------------------------
    auto* cal_cmd = app.add_subcommand("calibrate", "select per-channel V_BP codes from stimuli");
    std::string cal_stimuli, cal_mismatch, cal_params, cal_out;
    std::size_t cal_channels = 1024;
    int cal_presentations = 100;
    cal_cmd->add_option("--stimuli", cal_stimuli, "spike.aer,noise.aer")->required();
    cal_cmd->add_option("--mismatch", cal_mismatch, "MismatchSpec JSON file");
    cal_cmd->add_option("--params", cal_params, "EvSpdParams JSON file");
    cal_cmd->add_option("--channels", cal_channels, "number of channels to calibrate");
    cal_cmd->add_option("--presentations", cal_presentations, "presentations per stimulus");
    cal_cmd->add_option("--out", cal_out, "output vbp.csv")->required()->envname("EVSPD_OUT");

    // baseline ----------------------------------------------------------
    auto* baseline_cmd = app.add_subcommand("baseline", "sample-domain reference detectors");
    std::string base_method = "neo", base_in, base_out;
    double base_low = 300, base_high = 3000;
    bool base_no_bandpass = false;
    BaselineParams base_params;
    baseline_cmd->add_option("--method", base_method, "neo | edlpf | abs")->required();
    baseline_cmd->add_option("--in", base_in, "recording base path")->required();
    baseline_cmd->add_option("--out", base_out, "output spikes.csv")->required()->envname("EVSPD_OUT");
    baseline_cmd->add_option("--band-low", base_low, "band-pass low edge, Hz");
    baseline_cmd->add_option("--band-high", base_high, "band-pass high edge, Hz");
    baseline_cmd->add_flag("--no-bandpass", base_no_bandpass, "skip band-pass filtering");
    baseline_cmd->add_option("--neo-window", base_params.neo_window, "smoothing window, samples");
    baseline_cmd->add_option("--neo-mult", base_params.neo_thresh_mult, "NEO threshold multiplier");
    baseline_cmd->add_option("--abs-mult", base_params.abs_mult, "absolute threshold multiplier");
    baseline_cmd->add_option("--refractory-us", base_params.refractory_us, "refractory period");

    // evaluate ----------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("evaluate", "match detections against ground truth");
    std::string eval_truth, eval_detected, eval_out;
    std::size_t eval_channels = 0;
    std::uint32_t eval_tolerance = 1000;
    eval_cmd->add_option("--truth", eval_truth, "ground truth CSV (channel,time_s)")->required();
    eval_cmd->add_option("--detected", eval_detected, "spikes.csv (channel,t_us)")->required();
    eval_cmd->add_option("--channels", eval_channels, "channel count")->required();
    eval_cmd->add_option("--tolerance", eval_tolerance, "matching tolerance, us");
    eval_cmd->add_option("--out", eval_out, "output metrics.csv")->required()->envname("EVSPD_OUT");

    // sweep ---------------------------------------------------------------
    auto* sweep_cmd = app.add_subcommand("sweep", "accuracy grid over (thr1, thr2)");
    std::string swp_events, swp_truth, swp_params, swp_out;
    std::size_t swp_channels = 0;
    std::vector<double> swp_thr1 = {1, 2, 3, 4, 5, 6};
    std::vector<int> swp_thr2 = {1, 2, 3, 4, 5, 6, 7};
    std::uint32_t swp_tolerance = 1000;
    sweep_cmd->add_option("--events", swp_events, "input .aer file")->required();
    sweep_cmd->add_option("--truth", swp_truth, "ground truth CSV (channel,time_s)")->required();
    sweep_cmd->add_option("--channels", swp_channels, "channel count")->required();
    sweep_cmd->add_option("--params", swp_params, "EvSpdParams JSON file");
    sweep_cmd->add_option("--thr1", swp_thr1, "thr1 values")->delimiter(',');
    sweep_cmd->add_option("--thr2", swp_thr2, "thr2 values")->delimiter(',');
    sweep_cmd->add_option("--tolerance", swp_tolerance, "matching tolerance, us");
    sweep_cmd->add_option("--out", swp_out, "output sweep.csv")->required()->envname("EVSPD_OUT");

    // reproduce -----------------------------------------------------------
    auto* repro = app.add_subcommand("reproduce", "run the full acceptance suite");
    acceptance::Options ropts;
    std::string repro_out = "reproduce-out";
    bool skip_determinism = false;
    repro->add_option("--seed", ropts.seed, "root seed")->envname("EVSPD_SEED");
    repro->add_option("--out", repro_out, "output directory")->envname("EVSPD_OUT");
    repro->add_option("--duration", ropts.duration_s, "seconds per tier");
    repro->add_option("--channels", ropts.channels, "channels per tier");
    repro->add_flag("--skip-determinism", skip_determinism,
                    "skip the nested determinism criterion (used by nested runs)");
    repro->add_flag("--write-raw", ropts.write_raw, "write tier recordings (.raw/.json/.truth.csv)");
    repro->add_flag("--write-events", ropts.write_events, "write tier event streams (.aer)");

    // usage errors exit 2; --help exits 0
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*generate) {
        fs::create_directories(gen_out);
        struct TierSpec {
            std::string name;
            double sigma;
        };
        std::vector<TierSpec> tiers;
        if (!gen_snr.empty()) {
            for (double snr : gen_snr) {
                char name[32];
                std::snprintf(name, sizeof name, "snr%02d", static_cast<int>(std::lround(snr)));
                tiers.push_back({name, sigma_for_snr_db(snr)});
            }
        } else {
            for (double sigma : gen_noise) {
                char name[32];
                std::snprintf(name, sizeof name, "noise%03d", static_cast<int>(std::lround(sigma * 100)));
                tiers.push_back({name, sigma});
            }
        }
        for (std::size_t k = 0; k < tiers.size(); ++k) {
            SynthesisSpec spec;
            spec.templates = builtin_templates(gen_rate);
            spec.noise_sigma = tiers[k].sigma;
            spec.duration_s = gen_duration;
            spec.sample_rate_hz = gen_rate;
            spec.firing_rate_hz = gen_firing;
            spec.channels = gen_channels;
            spec.rng_seed = derive_seed(gen_seed, k);
            const Recording rec = synthesize(spec);
            save_recording(rec, fs::path(gen_out) / tiers[k].name);
            std::cerr << "wrote " << (fs::path(gen_out) / tiers[k].name).string() << ".{raw,json,truth.csv}"
                      << " sigma=" << tiers[k].sigma << " snr=" << snr_of(rec) << " dB" << std::endl;
        }
        return 0;
    }

    if (*encode) {
        Recording rec = load_recording(enc_in);
        if (!enc_no_bandpass) rec = bandpass(rec, enc_low, enc_high);
        const auto picked = pick_threshold(rec, ThresholdSpec::parse(enc_mode));
        const auto events = encode_recording(rec, picked.per_channel, threads);
        write_aer(enc_out, events);
        if (!enc_csv.empty()) write_aer_csv(enc_csv, events);
        if (!enc_thresholds_out.empty()) write_thresholds_csv(enc_thresholds_out, picked);
        std::size_t fallbacks = 0;
        for (auto f : picked.fell_back) fallbacks += f;
        std::cerr << "encoded " << events.size() << " events from " << rec.channels() << " channels ("
                  << fallbacks << " fallback thresholds)" << std::endl;
        return 0;
    }

    if (*detect_cmd) {
        const auto events = read_aer(det_events);
        const auto params = det_params.empty() ? EvSpdParams{} : load_evspd_params(det_params);
        const std::size_t n_ch = channels_for_events(events, det_channels);
        const auto detections = detect_all(events, n_ch, params, det_duration_us, threads);
        write_spikes_csv(det_out, detections);
        std::size_t total = 0;
        for (const auto& d : detections) total += d.size();
        std::cerr << "detected " << total << " spikes on " << n_ch << " channels" << std::endl;
        return 0;
    }

    if (*macro) {
        const auto events = read_aer(mac_events);
        HramConfig cfg;
        cfg.params = mac_params.empty() ? EvSpdParams{} : load_evspd_params(mac_params);
        cfg.mismatch = mac_mismatch.empty() ? MismatchSpec::none() : load_mismatch(mac_mismatch);
        cfg.dropped_fraction = mac_dropped;
        cfg.leak_tau_s = mac_leak;
        const std::size_t n_ch = channels_for_events(events, mac_channels);

        std::vector<std::uint8_t> codes;
        if (mac_vbp == "auto") {
            if (mac_stimuli.empty())
                throw std::invalid_argument("macro-run: --vbp auto requires --stimuli");
            const auto [spike_path, noise_path] = split_pair(mac_stimuli, "--stimuli");
            Stimuli stimuli;
            stimuli.spike = pulses_from_aer(spike_path);
            stimuli.noise = pulses_from_aer(noise_path);
            const auto cal = calibrate(n_ch, cfg, stimuli, 100, threads);
            for (const auto& c : cal) codes.push_back(c.code);
        } else if (mac_vbp != "nominal") {
            const int code = std::stoi(mac_vbp);
            if (code < 0 || code > 3) throw std::invalid_argument("macro-run: V_BP code must be 0-3");
            codes.assign(n_ch, static_cast<std::uint8_t>(code));
        }

        const auto [counters_path, spikes_path] = split_pair(mac_out, "--out");
        const auto result = run_macro(events, n_ch, cfg, codes, mac_duration_us, threads, true);
        write_counters_csv(counters_path, result);
        write_spikes_csv(spikes_path, result.detections);
        std::size_t total = 0;
        for (const auto& d : result.detections) total += d.size();
        std::cerr << "macro detected " << total << " spikes on " << n_ch << " channels" << std::endl;
        return 0;
    }

    if (*cal_cmd) {
        const auto [spike_path, noise_path] = split_pair(cal_stimuli, "--stimuli");
        Stimuli stimuli;
        stimuli.spike = pulses_from_aer(spike_path);
        stimuli.noise = pulses_from_aer(noise_path);
        HramConfig cfg;
        cfg.params = cal_params.empty() ? EvSpdParams{} : load_evspd_params(cal_params);
        cfg.mismatch = cal_mismatch.empty() ? MismatchSpec{} : load_mismatch(cal_mismatch);
        const auto cal = calibrate(cal_channels, cfg, stimuli, cal_presentations, threads);
        std::ofstream out(cal_out);
        if (!out) throw std::runtime_error("cannot open " + cal_out);
        out << "channel,code,fn,fp\n";
        for (std::size_t c = 0; c < cal.size(); ++c)
            out << c << ',' << int(cal[c].code) << ',' << cal[c].fn[cal[c].code] << ','
                << cal[c].fp[cal[c].code] << '\n';
        std::cerr << "calibrated " << cal.size() << " channels" << std::endl;
        return 0;
    }

    if (*baseline_cmd) {
        Recording rec = load_recording(base_in);
        if (!base_no_bandpass) rec = bandpass(rec, base_low, base_high);
        std::vector<std::vector<std::uint32_t>> detections(rec.channels());
        parallel_for(rec.channels(), threads, [&](std::size_t c) {
            if (base_method == "neo")
                detections[c] = neo_detect(rec.samples[c], rec.sample_rate_hz, base_params);
            else if (base_method == "edlpf")
                detections[c] = ed_lpf_detect(rec.samples[c], rec.sample_rate_hz, base_params);
            else if (base_method == "abs")
                detections[c] = abs_threshold_detect(rec.samples[c], rec.sample_rate_hz,
                                                     base_params.abs_mult, base_params.refractory_us);
            else
                throw std::invalid_argument("baseline: unknown method " + base_method);
        });
        write_spikes_csv(base_out, detections);
        std::size_t total = 0;
        for (const auto& d : detections) total += d.size();
        std::cerr << base_method << " detected " << total << " spikes" << std::endl;
        return 0;
    }

    if (*eval_cmd) {
        const auto truth_s = read_ground_truth_csv(eval_truth, eval_channels);
        const auto truth_us = truth_to_us(truth_s);
        const auto detections = read_spikes_csv(eval_detected, eval_channels);
        std::vector<MatchResult> matches(eval_channels);
        std::vector<std::optional<double>> acc(eval_channels);
        for (std::size_t c = 0; c < eval_channels; ++c) {
            matches[c] = match_spikes(truth_us[c], detections[c], eval_tolerance);
            acc[c] = metrics(matches[c]).accuracy;
        }
        write_metrics_csv(eval_out, matches);
        const auto mean = mean_defined(acc);
        nlohmann::ordered_json j;
        j["mean_accuracy"] = mean ? nlohmann::ordered_json(*mean) : nullptr;
        std::cout << j.dump() << std::endl;
        return 0;
    }

    if (*sweep_cmd) {
        const auto events = read_aer(swp_events);
        const auto truth_us = truth_to_us(read_ground_truth_csv(swp_truth, swp_channels));
        const auto params = swp_params.empty() ? EvSpdParams{} : load_evspd_params(swp_params);
        const auto per_channel = demux_events(events, swp_channels);
        const auto grid = sweep_thresholds(per_channel, truth_us, swp_thr1, swp_thr2, params,
                                           swp_tolerance, 0, threads);
        write_sweep_csv(swp_out, grid);
        std::cerr << "best mean accuracy " << grid.best_accuracy << " at thr1=" << grid.best_thr1
                  << " thr2=" << grid.best_thr2 << std::endl;
        return 0;
    }

    if (*repro) {
        ropts.out_dir = repro_out;
        ropts.threads = threads;
        ropts.include_determinism = !skip_determinism;
        ropts.cli_path = argv[0];
        const auto results = acceptance::run_all(ropts);
        bool all = true;
        for (const auto& r : results) all = all && r.pass;
        std::cerr << (all ? "all criteria passed" : "some criteria FAILED") << std::endl;
        return all ? 0 : 1;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
