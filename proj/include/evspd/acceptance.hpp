#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "evspd/baselines.hpp"
#include "evspd/calibration.hpp"
#include "evspd/detector.hpp"
#include "evspd/encoder.hpp"
#include "evspd/experiment.hpp"
#include "evspd/filters.hpp"
#include "evspd/hram.hpp"
#include "evspd/metrics.hpp"
#include "evspd/synth.hpp"

namespace evspd::acceptance {

// Pinned bounds for every criterion.
inline constexpr double kParityTol = 0.05;        // |acc(EvSPD) - acc(NEO)| per tier
inline constexpr double kLowNoiseAccuracy = 0.90; // EvSPD mean accuracy, two low-noise tiers
inline constexpr double kPlateauBand = 0.03;      // cells within 3% of grid max
inline constexpr double kPlateauFraction = 0.30;  // fraction of grid cells on the plateau
inline constexpr double kTspkTol = 0.01;          // mean accuracy change, t_s +-20%
inline constexpr double kModulationTol = 0.01;    // mean accuracy change, threshold +-20%
inline constexpr double kFlipTol = 0.01;          // accuracy drop with MC-informed flips
inline constexpr int kFlipSeeds = 10;
inline constexpr double kSimilarityMin = 0.85;    // EvSPD vs ABS mean similarity
inline constexpr double kMaeMax = 0.1;            // firing-pattern MAE, 4 ms bins
inline constexpr double kThrAbsTol = 0.05;        // Thr_abs Gaussian check
inline constexpr std::size_t kResidualSignals = 100000;
inline constexpr std::size_t kMovingSumSequences = 10000;
inline constexpr std::size_t kGaussianSamples = 1000000;

struct Options {
    std::uint64_t seed = 7;
    std::filesystem::path out_dir = "reproduce-out";
    unsigned threads = 0; // 0 = hardware concurrency
    double duration_s = 60.0;
    std::size_t channels = 64;
    bool include_determinism = true; // criterion 10 re-runs the CLI; off in nested runs
    std::string cli_path;            // binary spawned by criterion 10
    bool write_raw = false;
    bool write_events = false;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    double value = 0;
    double bound = 0;
    std::string op; // "<=", ">=", "=="
    bool pass = false;
    std::string detail;
};

// ----------------------------------------------------------------------
// Regenerated synthetic suite: four noise tiers, shared by most criteria.

struct Tier {
    double sigma = 0;
    std::vector<AerEvent> events;
    std::vector<std::vector<std::uint32_t>> truth_us;
    std::vector<double> thresholds;
    std::uint64_t duration_us = 0;
};

struct Suite {
    std::vector<Tier> tiers; // sigma in {0.05, 0.10, 0.15, 0.20}
    EvSpdParams params;
    BaselineParams baseline;
    double band_low_hz = 300, band_high_hz = 3000;
    ThresholdSpec mode{ThresholdMode::FractionOfPeak, 0.1};
    std::uint32_t tolerance_us = 1000;
};

inline const std::vector<double>& tier_sigmas() {
    static const std::vector<double> s = {0.05, 0.10, 0.15, 0.20};
    return s;
}

inline SynthesisSpec tier_spec(const Options& opts, std::size_t tier_index) {
    SynthesisSpec spec;
    spec.templates = builtin_templates(24000);
    spec.firing_rate_hz = 20;
    spec.noise_sigma = tier_sigmas()[tier_index];
    spec.duration_s = opts.duration_s;
    spec.sample_rate_hz = 24000;
    spec.rng_seed = derive_seed(opts.seed, 100 + tier_index);
    spec.channels = opts.channels;
    return spec;
}

// Synthesize + band-pass one tier (samples are regenerated on demand by
// criteria that need them; everything is deterministic in the seed).
inline Recording tier_recording(const Options& opts, const Suite& suite, std::size_t tier_index) {
    Recording rec = synthesize(tier_spec(opts, tier_index));
    return bandpass(rec, suite.band_low_hz, suite.band_high_hz);
}

inline Suite build_suite(const Options& opts, unsigned threads) {
    Suite suite;
    for (std::size_t k = 0; k < tier_sigmas().size(); ++k) {
        Tier tier;
        tier.sigma = tier_sigmas()[k];
        Recording rec = tier_recording(opts, suite, k);
        const auto picked = pick_threshold(rec, suite.mode);
        tier.thresholds = picked.per_channel;
        tier.events = encode_recording(rec, tier.thresholds, threads);
        tier.truth_us = truth_to_us(rec.ground_truth);
        tier.duration_us = static_cast<std::uint64_t>(std::llround(rec.duration_s() * 1e6));
        suite.tiers.push_back(std::move(tier));
    }
    return suite;
}

inline double mean_accuracy(const std::vector<std::vector<std::uint32_t>>& detections,
                            const std::vector<std::vector<std::uint32_t>>& truth_us,
                            std::uint32_t tolerance_us) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < detections.size(); ++c) {
        const auto m = metrics(match_spikes(truth_us[c], detections[c], tolerance_us));
        if (m.accuracy) {
            sum += *m.accuracy;
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

inline std::vector<double> per_channel_accuracy(const std::vector<std::vector<std::uint32_t>>& detections,
                                                const std::vector<std::vector<std::uint32_t>>& truth_us,
                                                std::uint32_t tolerance_us) {
    std::vector<double> acc(detections.size(), 0.0);
    for (std::size_t c = 0; c < detections.size(); ++c) {
        const auto m = metrics(match_spikes(truth_us[c], detections[c], tolerance_us));
        acc[c] = m.accuracy.value_or(0.0);
    }
    return acc;
}

inline double suite_mean_accuracy(const Suite& suite, const EvSpdParams& params, unsigned threads) {
    double sum = 0;
    for (const auto& tier : suite.tiers) {
        const auto det = detect_all(tier.events, tier.truth_us.size(), params, tier.duration_us, threads);
        sum += mean_accuracy(det, tier.truth_us, suite.tolerance_us);
    }
    return sum / static_cast<double>(suite.tiers.size());
}

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Maximum bipartite matching (Kuhn's augmenting paths) between truth and
// detections with |t - d| <= tol: independent oracle for the greedy
// matcher.
inline std::size_t optimal_match_count(const std::vector<std::uint32_t>& truth,
                                       const std::vector<std::uint32_t>& detected,
                                       std::uint32_t tol) {
    const std::size_t n = truth.size(), m = detected.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (std::llabs(static_cast<long long>(truth[i]) - static_cast<long long>(detected[j])) <=
                static_cast<long long>(tol))
                adj[i].push_back(j);
    std::vector<long long> match_of(m, -1);
    std::vector<char> used(m, 0);
    std::function<bool(std::size_t)> try_assign = [&](std::size_t i) -> bool {
        for (std::size_t j : adj[i]) {
            if (used[j]) continue;
            used[j] = 1;
            if (match_of[j] < 0 || try_assign(static_cast<std::size_t>(match_of[j]))) {
                match_of[j] = static_cast<long long>(i);
                return true;
            }
        }
        return false;
    };
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(used.begin(), used.end(), 0);
        if (try_assign(i)) ++count;
    }
    return count;
}

inline std::vector<std::filesystem::path> tree_files(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> files;
    if (!std::filesystem::exists(root)) return files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
        if (entry.is_regular_file()) files.push_back(std::filesystem::relative(entry.path(), root));
    std::sort(files.begin(), files.end());
    return files;
}

inline bool same_file_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return ba == bb;
}

// Number of files that differ (or exist on only one side).
inline std::size_t tree_diff_count(const std::filesystem::path& a, const std::filesystem::path& b) {
    const auto fa = tree_files(a), fb = tree_files(b);
    std::size_t diffs = 0;
    std::size_t i = 0, j = 0;
    while (i < fa.size() || j < fb.size()) {
        if (i < fa.size() && j < fb.size() && fa[i] == fb[j]) {
            if (!same_file_bytes(a / fa[i], b / fb[j])) ++diffs;
            ++i;
            ++j;
        } else if (j >= fb.size() || (i < fa.size() && fa[i] < fb[j])) {
            ++diffs;
            ++i;
        } else {
            ++diffs;
            ++j;
        }
    }
    return diffs;
}

} // namespace detail

// ----------------------------------------------------------------------
// Criterion 1: with all non-idealities disabled the macro model is
// bit-identical to the reference detector, on the full suite and on
// randomized short streams.
inline CriterionResult criterion_oracle_equivalence(const Options& opts, const Suite& suite,
                                                    unsigned threads) {
    std::size_t mismatched_channels = 0;
    std::size_t checked_channels = 0;
    const HramConfig ideal = HramConfig::ideal(suite.params);
    for (const auto& tier : suite.tiers) {
        const std::size_t n_ch = tier.truth_us.size();
        const auto ref = detect_all(tier.events, n_ch, suite.params, tier.duration_us, threads);
        const auto hw = run_macro(tier.events, n_ch, ideal, {}, tier.duration_us, threads).detections;
        for (std::size_t c = 0; c < n_ch; ++c) {
            ++checked_channels;
            if (ref[c] != hw[c]) ++mismatched_channels;
        }
    }

    auto rng = make_rng(opts.seed, 500);
    std::uniform_int_distribution<int> n_ch_dist(1, 4);
    std::uniform_int_distribution<int> n_ev_dist(0, 400);
    std::uniform_int_distribution<std::uint32_t> t_dist(0, 50000);
    std::uniform_int_distribution<int> pol(0, 1);
    std::uniform_real_distribution<double> thr1_dist(0.5, 4.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n_ch = static_cast<std::size_t>(n_ch_dist(rng));
        std::vector<AerEvent> events;
        const int n_ev = n_ev_dist(rng);
        for (int e = 0; e < n_ev; ++e)
            events.push_back({t_dist(rng), static_cast<std::uint16_t>(t_dist(rng) % n_ch),
                              static_cast<std::int8_t>(pol(rng) ? 1 : -1), 0});
        std::sort(events.begin(), events.end(), [](const AerEvent& a, const AerEvent& b) {
            return a.t_us != b.t_us ? a.t_us < b.t_us : a.address < b.address;
        });
        EvSpdParams p;
        p.t_s_us = 100 + 25 * (trial % 3);
        p.thr1 = thr1_dist(rng);
        p.thr2 = 1 + trial % 7;
        p.refractory_us = (trial % 4) * 500;
        const auto ref = detect_all(events, n_ch, p, 0, 1);
        const auto hw = run_macro(events, n_ch, HramConfig::ideal(p), {}, 0, 1).detections;
        ++checked_channels;
        if (ref != hw) ++mismatched_channels;
    }

    CriterionResult r;
    r.id = 1;
    r.name = "oracle-equivalence";
    r.value = static_cast<double>(mismatched_channels);
    r.bound = 0;
    r.op = "==";
    r.pass = mismatched_channels == 0;
    r.detail = std::to_string(checked_channels) + " channel comparisons";
    return r;
}

// Criterion 2: EvSPD and NEO accuracies agree within 0.05 per tier and
// EvSPD reaches 0.90 on the two low-noise tiers.
inline CriterionResult criterion_parity(const Options& opts, const Suite& suite, unsigned threads) {
    double max_diff = 0;
    double min_low_noise = 1.0;
    std::string detail;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::ofstream csv(opts.out_dir / "parity.csv");
    csv << "sigma,accuracy_evspd,accuracy_neo\n";
    for (std::size_t k = 0; k < suite.tiers.size(); ++k) {
        const auto& tier = suite.tiers[k];
        const std::size_t n_ch = tier.truth_us.size();
        const auto ev_det = detect_all(tier.events, n_ch, suite.params, tier.duration_us, threads);
        const double acc_ev = mean_accuracy(ev_det, tier.truth_us, suite.tolerance_us);

        std::vector<MatchResult> matches(n_ch);
        for (std::size_t c = 0; c < n_ch; ++c)
            matches[c] = match_spikes(tier.truth_us[c], ev_det[c], suite.tolerance_us);
        write_spikes_csv(opts.out_dir / ("tier" + std::to_string(k) + "_spikes_evspd.csv"), ev_det);
        write_metrics_csv(opts.out_dir / ("tier" + std::to_string(k) + "_metrics_evspd.csv"), matches);

        Recording rec = tier_recording(opts, suite, k);
        std::vector<std::vector<std::uint32_t>> neo_det(n_ch);
        parallel_for(n_ch, threads, [&](std::size_t c) {
            neo_det[c] = neo_detect(rec.samples[c], rec.sample_rate_hz, suite.baseline);
        });
        const double acc_neo = mean_accuracy(neo_det, tier.truth_us, suite.tolerance_us);

        max_diff = std::max(max_diff, std::abs(acc_ev - acc_neo));
        if (k < 2) min_low_noise = std::min(min_low_noise, acc_ev);
        csv << tier.sigma << ',' << detail::fmt(acc_ev) << ',' << detail::fmt(acc_neo) << '\n';
        detail += "s" + detail::fmt(tier.sigma) + ":ev=" + detail::fmt(acc_ev) +
                  ",neo=" + detail::fmt(acc_neo) + " ";
    }

    CriterionResult r;
    r.id = 2;
    r.name = "evspd-neo-parity";
    r.value = max_diff;
    r.bound = kParityTol;
    r.op = "<=";
    r.pass = max_diff <= kParityTol && min_low_noise >= kLowNoiseAccuracy;
    r.detail = detail + "low-noise-min=" + detail::fmt(min_low_noise);
    return r;
}

// Criterion 3: at least 30% of the (thr1, thr2) grid lies within 3%
// absolute of the maximum accuracy on the low-noise tier.
inline CriterionResult criterion_plateau(const Options& opts, const Suite& suite, unsigned threads) {
    const auto& tier = suite.tiers[0];
    const auto per_channel = demux_events(tier.events, tier.truth_us.size());
    const std::vector<double> thr1_range = {1, 2, 3, 4, 5, 6};
    const std::vector<int> thr2_range = {1, 2, 3, 4, 5, 6, 7};
    const auto grid = sweep_thresholds(per_channel, tier.truth_us, thr1_range, thr2_range,
                                       suite.params, suite.tolerance_us, tier.duration_us, threads);
    write_sweep_csv(opts.out_dir / "sweep.csv", grid);

    std::size_t on_plateau = 0, cells = 0;
    for (const auto& row : grid.mean_accuracy)
        for (double v : row) {
            ++cells;
            if (v >= grid.best_accuracy - kPlateauBand) ++on_plateau;
        }
    const double fraction = static_cast<double>(on_plateau) / static_cast<double>(cells);

    CriterionResult r;
    r.id = 3;
    r.name = "threshold-plateau";
    r.value = fraction;
    r.bound = kPlateauFraction;
    r.op = ">=";
    r.pass = fraction >= kPlateauFraction;
    r.detail = "best=" + detail::fmt(grid.best_accuracy) + " at thr1=" + detail::fmt(grid.best_thr1) +
               ",thr2=" + std::to_string(grid.best_thr2);
    return r;
}

// Criterion 4: +-20% bin duration changes suite mean accuracy by <= 1%.
inline CriterionResult criterion_tspk_sensitivity(const Options& opts, const Suite& suite,
                                                  unsigned threads) {
    const double base = suite_mean_accuracy(suite, suite.params, threads);
    double max_dev = 0;
    std::string detail = "base=" + detail::fmt(base);
    std::ofstream csv(opts.out_dir / "tspk_sensitivity.csv");
    csv << "t_s_us,suite_mean_accuracy\n";
    csv << suite.params.t_s_us << ',' << detail::fmt(base) << '\n';
    for (double scale : {0.8, 1.2}) {
        EvSpdParams p = suite.params;
        p.t_s_us = static_cast<std::uint32_t>(std::llround(suite.params.t_s_us * scale));
        const double acc = suite_mean_accuracy(suite, p, threads);
        max_dev = std::max(max_dev, std::abs(acc - base));
        csv << p.t_s_us << ',' << detail::fmt(acc) << '\n';
        detail += " t_s=" + std::to_string(p.t_s_us) + ":" + detail::fmt(acc);
    }

    CriterionResult r;
    r.id = 4;
    r.name = "tspk-sensitivity";
    r.value = max_dev;
    r.bound = kTspkTol;
    r.op = "<=";
    r.pass = max_dev <= kTspkTol;
    r.detail = detail;
    return r;
}

// Criterion 5: +-20% delta-modulation threshold changes suite mean
// accuracy by <= 1%.
inline CriterionResult criterion_modulation_sensitivity(const Options& opts, const Suite& suite,
                                                        unsigned threads) {
    double base_sum = 0;
    std::vector<double> scaled_acc(2, 0.0);
    const std::vector<double> scales = {0.8, 1.2};
    for (std::size_t k = 0; k < suite.tiers.size(); ++k) {
        const auto& tier = suite.tiers[k];
        const std::size_t n_ch = tier.truth_us.size();
        const auto det = detect_all(tier.events, n_ch, suite.params, tier.duration_us, threads);
        base_sum += mean_accuracy(det, tier.truth_us, suite.tolerance_us);

        Recording rec = tier_recording(opts, suite, k);
        for (std::size_t s = 0; s < scales.size(); ++s) {
            std::vector<double> thr = tier.thresholds;
            for (double& t : thr) t *= scales[s];
            const auto events = encode_recording(rec, thr, threads);
            const auto d = detect_all(events, n_ch, suite.params, tier.duration_us, threads);
            scaled_acc[s] += mean_accuracy(d, tier.truth_us, suite.tolerance_us);
        }
    }
    const double n_tiers = static_cast<double>(suite.tiers.size());
    const double base = base_sum / n_tiers;
    double max_dev = 0;
    std::string detail = "base=" + detail::fmt(base);
    std::ofstream csv(opts.out_dir / "modulation_sensitivity.csv");
    csv << "threshold_scale,suite_mean_accuracy\n";
    csv << "1.0," << detail::fmt(base) << '\n';
    for (std::size_t s = 0; s < scales.size(); ++s) {
        const double acc = scaled_acc[s] / n_tiers;
        max_dev = std::max(max_dev, std::abs(acc - base));
        csv << scales[s] << ',' << detail::fmt(acc) << '\n';
        detail += " x" + detail::fmt(scales[s]) + ":" + detail::fmt(acc);
    }

    CriterionResult r;
    r.id = 5;
    r.name = "modulation-sensitivity";
    r.value = max_dev;
    r.bound = kModulationTol;
    r.op = "<=";
    r.pass = max_dev <= kModulationTol;
    r.detail = detail;
    return r;
}

// Criterion 6: MC-informed latch flips degrade mean accuracy by <= 1% on
// the two high-noise tiers, averaged over 10 seeds.
inline CriterionResult criterion_flip_degradation(const Options& opts, const Suite& suite,
                                                  unsigned threads) {
    double max_drop = 0;
    std::string detail;
    std::ofstream csv(opts.out_dir / "flip_degradation.csv");
    csv << "sigma,accuracy_ideal,accuracy_flips_mean\n";
    for (std::size_t k = 2; k < suite.tiers.size(); ++k) {
        const auto& tier = suite.tiers[k];
        const std::size_t n_ch = tier.truth_us.size();
        const auto ideal_det = detect_all(tier.events, n_ch, suite.params, tier.duration_us, threads);
        const double acc_ideal = mean_accuracy(ideal_det, tier.truth_us, suite.tolerance_us);

        double acc_sum = 0;
        for (int s = 0; s < kFlipSeeds; ++s) {
            HramConfig cfg = HramConfig::ideal(suite.params);
            cfg.mismatch.flip_prob_pos = 0.017;
            cfg.mismatch.flip_prob_neg = 0.03;
            cfg.mismatch.rng_seed = derive_seed(opts.seed, 300 + static_cast<std::uint64_t>(s), k);
            const auto det = run_macro(tier.events, n_ch, cfg, {}, tier.duration_us, threads).detections;
            acc_sum += mean_accuracy(det, tier.truth_us, suite.tolerance_us);
        }
        const double acc_flips = acc_sum / kFlipSeeds;
        max_drop = std::max(max_drop, acc_ideal - acc_flips);
        csv << tier.sigma << ',' << detail::fmt(acc_ideal) << ',' << detail::fmt(acc_flips) << '\n';
        detail += "s" + detail::fmt(tier.sigma) + ":ideal=" + detail::fmt(acc_ideal) +
                  ",flips=" + detail::fmt(acc_flips) + " ";
    }

    CriterionResult r;
    r.id = 6;
    r.name = "flip-degradation";
    r.value = max_drop;
    r.bound = kFlipTol;
    r.op = "<=";
    r.pass = max_drop <= kFlipTol;
    r.detail = detail;
    return r;
}

// Criterion 7: V_BP calibration strictly shrinks the fraction of
// low-accuracy channels under jump mismatch on the hardest tier, and
// never worsens the per-channel stimulus cost.
inline CriterionResult criterion_calibration(const Options& opts, const Suite& suite,
                                             unsigned threads) {
    const auto& source = suite.tiers.back(); // hardest tier
    const std::size_t src_ch = source.truth_us.size();
    const std::size_t reps = std::max<std::size_t>(1, (256 + src_ch - 1) / src_ch);
    const std::size_t n_ch = reps * src_ch;

    std::vector<AerEvent> tiled;
    tiled.reserve(source.events.size() * reps);
    for (const auto& e : source.events)
        for (std::size_t rep = 0; rep < reps; ++rep)
            tiled.push_back({e.t_us, static_cast<std::uint16_t>(e.address + rep * src_ch), e.polarity, 0});
    std::sort(tiled.begin(), tiled.end(), [](const AerEvent& a, const AerEvent& b) {
        return a.t_us != b.t_us ? a.t_us < b.t_us : a.address < b.address;
    });
    std::vector<std::vector<std::uint32_t>> truth(n_ch);
    for (std::size_t c = 0; c < n_ch; ++c) truth[c] = source.truth_us[c % src_ch];

    HramConfig cfg = HramConfig::ideal(suite.params);
    cfg.mismatch.jump_cv = 0.1;
    cfg.mismatch.trip_cv = 0.05;
    cfg.mismatch.flip_prob_pos = 0.017;
    cfg.mismatch.flip_prob_neg = 0.03;
    cfg.mismatch.rng_seed = derive_seed(opts.seed, 400);

    const auto pre = run_macro(tiled, n_ch, cfg, {}, source.duration_us, threads).detections;
    const auto acc_pre = per_channel_accuracy(pre, truth, suite.tolerance_us);

    double mean_thr = 0;
    for (double t : source.thresholds) mean_thr += t;
    mean_thr /= static_cast<double>(source.thresholds.size());
    Recording rec = tier_recording(opts, suite, suite.tiers.size() - 1);
    const auto stimuli = default_calibration_stimuli(rec, mean_thr);
    const auto cal = calibrate(n_ch, cfg, stimuli, 100, threads);

    std::vector<std::uint8_t> codes(n_ch);
    bool cost_ok = true;
    for (std::size_t c = 0; c < n_ch; ++c) {
        codes[c] = cal[c].code;
        if (cal[c].fn[cal[c].code] + cal[c].fp[cal[c].code] >
            cal[c].fn[kNominalVbpCode] + cal[c].fp[kNominalVbpCode])
            cost_ok = false;
    }
    const auto post = run_macro(tiled, n_ch, cfg, codes, source.duration_us, threads).detections;
    const auto acc_post = per_channel_accuracy(post, truth, suite.tolerance_us);

    std::size_t low_pre = 0, low_post = 0;
    for (std::size_t c = 0; c < n_ch; ++c) {
        if (acc_pre[c] < 0.8) ++low_pre;
        if (acc_post[c] < 0.8) ++low_post;
    }
    const double frac_pre = static_cast<double>(low_pre) / static_cast<double>(n_ch);
    const double frac_post = static_cast<double>(low_post) / static_cast<double>(n_ch);

    std::ofstream csv(opts.out_dir / "calibration.csv");
    csv << "channel,code,fn,fp,accuracy_pre,accuracy_post\n";
    for (std::size_t c = 0; c < n_ch; ++c)
        csv << c << ',' << int(cal[c].code) << ',' << cal[c].fn[cal[c].code] << ','
            << cal[c].fp[cal[c].code] << ',' << detail::fmt(acc_pre[c]) << ','
            << detail::fmt(acc_post[c]) << '\n';

    CriterionResult r;
    r.id = 7;
    r.name = "calibration-efficacy";
    r.value = frac_post - frac_pre;
    r.bound = 0;
    r.op = "<";
    r.pass = frac_post < frac_pre && cost_ok;
    r.detail = "low-acc channels " + detail::fmt(frac_pre) + " -> " + detail::fmt(frac_post) + " over " +
               std::to_string(n_ch) + " channels; argmin cost ok=" + (cost_ok ? "yes" : "no");
    return r;
}

// Criterion 8: EvSPD agrees with absolute thresholding on a mixed
// 64-channel recording: similarity >= 0.85, firing-pattern MAE <= 0.1.
inline CriterionResult criterion_agreement(const Options& opts, const Suite& suite, unsigned threads) {
    // one quarter of the channels per noise tier
    Recording mixed;
    mixed.sample_rate_hz = 24000;
    const std::size_t per_part = std::max<std::size_t>(1, opts.channels / 4);
    for (std::size_t part = 0; part < 4; ++part) {
        SynthesisSpec spec = tier_spec(opts, part);
        spec.channels = per_part;
        spec.rng_seed = derive_seed(opts.seed, 200 + part);
        Recording rec = synthesize(spec);
        for (auto& ch : rec.samples) mixed.samples.push_back(std::move(ch));
        for (auto& t : rec.ground_truth) mixed.ground_truth.push_back(std::move(t));
    }
    mixed = bandpass(mixed, suite.band_low_hz, suite.band_high_hz);
    const std::uint64_t duration_us = static_cast<std::uint64_t>(std::llround(mixed.duration_s() * 1e6));

    const auto picked = pick_threshold(mixed, suite.mode);
    const auto events = encode_recording(mixed, picked.per_channel, threads);
    const auto ev_det = detect_all(events, mixed.channels(), suite.params, duration_us, threads);

    std::vector<std::vector<std::uint32_t>> abs_det(mixed.channels());
    parallel_for(mixed.channels(), threads, [&](std::size_t c) {
        abs_det[c] = abs_threshold_detect(mixed.samples[c], mixed.sample_rate_hz,
                                          suite.baseline.abs_mult, suite.baseline.refractory_us);
    });

    const auto sim = similarity(abs_det, ev_det, suite.tolerance_us);
    const auto pat_ev = firing_pattern(ev_det, 4000, duration_us);
    const auto pat_abs = firing_pattern(abs_det, 4000, duration_us);
    const double mae = pattern_mae(pat_ev, pat_abs);

    std::ofstream csv(opts.out_dir / "similarity.csv");
    csv << "channel,similarity\n";
    for (std::size_t c = 0; c < sim.per_channel.size(); ++c)
        csv << c << ',' << detail::fmt(sim.per_channel[c]) << '\n';

    CriterionResult r;
    r.id = 8;
    r.name = "cross-detector-agreement";
    r.value = sim.mean;
    r.bound = kSimilarityMin;
    r.op = ">=";
    r.pass = sim.mean >= kSimilarityMin && mae <= kMaeMax;
    r.detail = "similarity=" + detail::fmt(sim.mean) + " mae=" + detail::fmt(mae) + " (bound " +
               detail::fmt(kMaeMax) + ")";
    return r;
}

// Criterion 9: exact property suites.
inline CriterionResult criterion_properties(const Options& opts, unsigned) {
    std::size_t failures = 0;
    std::string detail;

    { // delta-modulation residual bound, 1e5 random signals, exact
        auto rng = make_rng(opts.seed, 600);
        std::uniform_real_distribution<double> step(-1.0, 1.0);
        std::uniform_real_distribution<double> thr_dist(0.02, 0.5);
        std::size_t bad = 0;
        for (std::size_t trial = 0; trial < kResidualSignals; ++trial) {
            const double threshold = thr_dist(rng);
            DeltaModulator mod(threshold, 24000);
            std::vector<TimedPulse> pulses;
            double x = 0;
            for (int i = 0; i < 30; ++i) {
                x += step(rng);
                mod.consume(x, pulses);
                if (!(std::abs(x - mod.v_reset()) < threshold)) ++bad;
            }
        }
        failures += bad;
        detail += "residual=" + std::to_string(bad) + " ";
    }

    { // streaming vs batch moving sum, 1e4 sequences, exact
        auto rng = make_rng(opts.seed, 601);
        std::uniform_int_distribution<int> len_dist(0, 200);
        std::uniform_int_distribution<int> ns_dist(1, 12);
        std::uniform_int_distribution<int> bit(0, 1);
        std::size_t bad = 0;
        for (std::size_t trial = 0; trial < kMovingSumSequences; ++trial) {
            const int len = len_dist(rng);
            const int n_s = ns_dist(rng);
            std::vector<std::uint8_t> a(static_cast<std::size_t>(len));
            for (auto& v : a) v = static_cast<std::uint8_t>(bit(rng));
            const auto s = moving_sum(a, n_s);
            for (std::size_t i = 0; i < a.size(); ++i) {
                int brute = 0;
                for (int k = static_cast<int>(i) - n_s + 1; k <= static_cast<int>(i); ++k)
                    if (k >= 0) brute += a[static_cast<std::size_t>(k)];
                if (s[i] != brute) ++bad;
            }
        }
        failures += bad;
        detail += "movsum=" + std::to_string(bad) + " ";
    }

    { // NEO affine identity psi == a^2
        auto rng = make_rng(opts.seed, 602);
        std::uniform_real_distribution<double> coef(-2.0, 2.0);
        std::size_t bad = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const double a = coef(rng), b = coef(rng);
            std::vector<double> x(64);
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * static_cast<double>(i) + b;
            const auto psi = neo(x);
            for (std::size_t i = 1; i + 1 < x.size(); ++i)
                if (std::abs(psi[i] - a * a) >= 1e-9) ++bad;
        }
        failures += bad;
        detail += "neo=" + std::to_string(bad) + " ";
    }

    { // Thr_abs on 1e6 standard normal samples
        auto rng = make_rng(opts.seed, 603);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> x(kGaussianSamples);
        for (auto& v : x) v = gauss(rng);
        const double thr = abs_threshold_level(x, 4.0);
        const bool ok = std::abs(thr - 4.0) <= kThrAbsTol;
        if (!ok) ++failures;
        detail += "thr_abs=" + detail::fmt(thr) + " ";
    }

    { // greedy matching equals optimal assignment on all sizes <= 20
        auto rng = make_rng(opts.seed, 604);
        std::uniform_int_distribution<std::uint32_t> t_dist(0, 40000);
        std::uniform_int_distribution<std::uint32_t> tol_dist(500, 3000);
        std::size_t bad = 0;
        for (std::size_t n_truth = 0; n_truth <= 20; ++n_truth)
            for (std::size_t n_det = 0; n_det <= 20; ++n_det)
                for (int rep = 0; rep < 5; ++rep) {
                    std::vector<std::uint32_t> truth(n_truth), det(n_det);
                    for (auto& t : truth) t = t_dist(rng);
                    for (auto& d : det) d = t_dist(rng);
                    std::sort(truth.begin(), truth.end());
                    std::sort(det.begin(), det.end());
                    const std::uint32_t tol = tol_dist(rng);
                    const auto greedy = match_spikes(truth, det, tol);
                    if (greedy.tp != detail::optimal_match_count(truth, det, tol)) ++bad;
                }
        failures += bad;
        detail += "matching=" + std::to_string(bad);
    }

    CriterionResult r;
    r.id = 9;
    r.name = "property-suites";
    r.value = static_cast<double>(failures);
    r.bound = 0;
    r.op = "==";
    r.pass = failures == 0;
    r.detail = detail;
    return r;
}

// Criterion 10: rerunning reproduce with the same seed yields a
// byte-identical output tree, and the thread count does not affect any
// result file. Exercised end-to-end through the CLI at reduced scale.
inline CriterionResult criterion_determinism(const Options& opts) {
    CriterionResult r;
    r.id = 10;
    r.name = "determinism";
    r.bound = 0;
    r.op = "==";
    if (opts.cli_path.empty()) {
        r.value = -1;
        r.pass = false;
        r.detail = "no CLI binary available";
        return r;
    }
    const auto base = opts.out_dir / "determinism";
    std::filesystem::create_directories(base);
    const std::string common = std::string("\"") + opts.cli_path +
                               "\" reproduce --seed 11 --duration 2 --channels 8 --skip-determinism";
    struct Run {
        const char* dir;
        const char* threads;
    };
    const Run runs[] = {{"a", "1"}, {"b", "1"}, {"c", "2"}};
    for (const auto& run : runs) {
        const auto dir = base / run.dir;
        std::filesystem::remove_all(dir);
        const std::string cmd = common + " --threads " + run.threads + " --out \"" + dir.string() +
                                "\" > \"" + (base / (std::string(run.dir) + ".log")).string() +
                                "\" 2>&1";
        if (std::system(cmd.c_str()) != 0) {
            r.value = -1;
            r.pass = false;
            r.detail = "nested reproduce failed, see " + (base / run.dir).string();
            return r;
        }
    }
    const std::size_t diff_ab = detail::tree_diff_count(base / "a", base / "b");
    const std::size_t diff_ac = detail::tree_diff_count(base / "a", base / "c");
    r.value = static_cast<double>(diff_ab + diff_ac);
    r.pass = diff_ab == 0 && diff_ac == 0;
    r.detail = "rerun diffs=" + std::to_string(diff_ab) + " thread diffs=" + std::to_string(diff_ac);
    return r;
}

inline void print_result(std::ostream& os, const CriterionResult& r, double seconds) {
    char line[512];
    std::snprintf(line, sizeof line, "[%s] criterion %2d %-26s value=%-10.4f bound %s %-8.4f (%.1fs)  %s",
                  r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.value, r.op.c_str(), r.bound,
                  seconds, r.detail.c_str());
    os << line << std::endl;
}

inline void write_summary(const Options& opts, const std::vector<CriterionResult>& results) {
    nlohmann::ordered_json j;
    j["seed"] = opts.seed;
    j["channels"] = opts.channels;
    j["duration_s"] = opts.duration_s;
    bool all = true;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        rows.push_back({{"id", r.id},
                        {"name", r.name},
                        {"value", r.value},
                        {"bound", r.bound},
                        {"op", r.op},
                        {"pass", r.pass},
                        {"detail", r.detail}});
        all = all && r.pass;
    }
    j["criteria"] = rows;
    j["all_pass"] = all;
    std::ofstream out(opts.out_dir / "summary.json");
    out << j.dump(2) << '\n';
}

// Run every acceptance criterion, printing one pass/fail line each and
// writing summary.json plus per-criterion artifacts under out_dir.
inline std::vector<CriterionResult> run_all(const Options& opts, std::ostream& os = std::cout) {
    namespace chrono = std::chrono;
    const unsigned threads = opts.threads;
    std::filesystem::create_directories(opts.out_dir);

    auto t0 = chrono::steady_clock::now();
    auto elapsed = [&t0] {
        const auto t1 = chrono::steady_clock::now();
        const double s = chrono::duration<double>(t1 - t0).count();
        t0 = t1;
        return s;
    };

    std::cerr << "building regenerated suite (4 tiers x " << opts.channels << " channels x "
              << opts.duration_s << " s)..." << std::endl;
    Suite suite = build_suite(opts, threads);
    const double build_seconds = elapsed();
    std::cerr << "suite ready in " << build_seconds << " s" << std::endl;

    if (opts.write_events || opts.write_raw) {
        for (std::size_t k = 0; k < suite.tiers.size(); ++k) {
            const auto dir = opts.out_dir / ("tier" + std::to_string(k));
            std::filesystem::create_directories(dir);
            if (opts.write_raw) {
                Recording raw = synthesize(tier_spec(opts, k));
                save_recording(raw, dir / "recording");
            }
            if (opts.write_events) {
                write_aer(dir / "events.aer", suite.tiers[k].events);
                write_thresholds_csv(dir / "thresholds.csv",
                                     PickedThresholds{suite.tiers[k].thresholds,
                                                      std::vector<std::uint8_t>(
                                                          suite.tiers[k].thresholds.size(), 0)});
            }
        }
        elapsed();
    }

    std::vector<CriterionResult> results;
    auto add = [&](CriterionResult r) {
        print_result(os, r, elapsed());
        results.push_back(std::move(r));
    };

    add(criterion_oracle_equivalence(opts, suite, threads));
    add(criterion_parity(opts, suite, threads));
    add(criterion_plateau(opts, suite, threads));
    add(criterion_tspk_sensitivity(opts, suite, threads));
    add(criterion_modulation_sensitivity(opts, suite, threads));
    add(criterion_flip_degradation(opts, suite, threads));
    add(criterion_calibration(opts, suite, threads));
    add(criterion_agreement(opts, suite, threads));
    add(criterion_properties(opts, threads));
    if (opts.include_determinism) add(criterion_determinism(opts));

    write_summary(opts, results);
    return results;
}

} // namespace evspd::acceptance
