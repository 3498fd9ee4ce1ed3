#include <catch2/catch_amalgamated.hpp>

#include "evspd/calibration.hpp"
#include "evspd/synth.hpp"

using namespace evspd;

namespace {

// presentation-shaped stimulus with a fixed per-bin event count
std::vector<TimedPulse> flat_burst(int bins, int per_bin) {
    std::vector<TimedPulse> burst;
    for (int b = 0; b < bins; ++b)
        for (int k = 0; k < per_bin; ++k)
            burst.push_back({static_cast<std::uint32_t>(b * 125 + 1 + k * 25), 1});
    return burst;
}

} // namespace

TEST_CASE("build_stimuli delta-modulates both inputs") {
    const auto tmpl = builtin_templates(24000)[0]; // peak 1.0
    std::vector<double> noise_seg(240, 0.0);

    auto s = build_stimuli(tmpl, noise_seg, 0.1, 24000);
    REQUIRE(s.spike.size() >= 10); // total variation >= peak
    REQUIRE(s.noise.empty());      // zero-amplitude noise segment
    for (const auto& p : s.spike) REQUIRE(p.t_us < kStimulusPeriodUs);

    auto again = build_stimuli(tmpl, noise_seg, 0.1, 24000);
    REQUIRE(again.spike == s.spike);

    REQUIRE_THROWS_AS(build_stimuli({}, noise_seg, 0.1, 24000), std::invalid_argument);
    REQUIRE_THROWS_AS(build_stimuli(tmpl, {}, 0.1, 24000), std::invalid_argument);
}

TEST_CASE("a channel with a 30% low jump gain is corrected upward") {
    EvSpdParams params; // thr1 = 3, thr2 = 4
    HramConfig cfg = HramConfig::ideal(params);

    Stimuli stimuli;
    stimuli.spike = flat_burst(8, 4); // 4 events per bin: sensitive to gain
    stimuli.noise = flat_burst(2, 1);

    auto biased = [](const HramConfig& c, std::size_t index) {
        ChannelHram ch = make_channel_hram(c, index);
        for (auto& cell : ch.cells) cell.jump_gain = 0.7;
        return ch;
    };
    auto cal = calibrate(1, cfg, stimuli, 100, 1, biased);
    REQUIRE(cfg.vbp.multiplier[cal[0].code] > 1.0);
    REQUIRE(cal[0].fn[cal[0].code] < cal[0].fn[kNominalVbpCode]);
    REQUIRE(cal[0].fn[kNominalVbpCode] == 100); // nominal code misses every presentation
    REQUIRE(cal[0].fn[cal[0].code] == 0);
}

TEST_CASE("a channel without mismatch keeps the nominal code") {
    EvSpdParams params;
    HramConfig cfg = HramConfig::ideal(params);
    Stimuli stimuli;
    stimuli.spike = flat_burst(8, 6);
    stimuli.noise = flat_burst(2, 1);
    auto cal = calibrate(4, cfg, stimuli, 100);
    for (const auto& c : cal) {
        REQUIRE(c.code == kNominalVbpCode); // tie broken toward nominal
        REQUIRE(c.fn[c.code] == 0);
        REQUIRE(c.fp[c.code] == 0);
    }
}

TEST_CASE("calibration never worsens the stimulus cost over a mismatched population") {
    EvSpdParams params;
    HramConfig cfg = HramConfig::ideal(params);
    cfg.mismatch.jump_cv = 0.25;
    cfg.mismatch.trip_cv = 0.05;
    cfg.mismatch.rng_seed = 7;

    Stimuli stimuli;
    stimuli.spike = flat_burst(8, 4);
    stimuli.noise = flat_burst(8, 3); // near-threshold noise drives FP on hot channels

    auto cal = calibrate(32, cfg, stimuli, 100);
    int improved = 0;
    for (const auto& c : cal) {
        const int chosen = c.fn[c.code] + c.fp[c.code];
        const int nominal = c.fn[kNominalVbpCode] + c.fp[kNominalVbpCode];
        REQUIRE(chosen <= nominal);
        if (chosen < nominal) ++improved;
    }
    REQUIRE(improved > 0);

    auto again = calibrate(32, cfg, stimuli, 100);
    for (std::size_t c = 0; c < cal.size(); ++c) REQUIRE(again[c].code == cal[c].code);
}

TEST_CASE("calibrate requires a spike stimulus") {
    HramConfig cfg = HramConfig::ideal(EvSpdParams{});
    Stimuli empty;
    REQUIRE_THROWS_AS(calibrate(1, cfg, empty), std::invalid_argument);
}

TEST_CASE("default stimuli come from the recording itself") {
    SynthesisSpec spec;
    spec.templates = builtin_templates(24000);
    spec.noise_sigma = 0.1;
    spec.duration_s = 2;
    spec.rng_seed = 11;
    auto rec = synthesize(spec);
    auto stimuli = default_calibration_stimuli(rec, 0.1);
    REQUIRE(stimuli.spike.size() >= 10);
    REQUIRE(!stimuli.noise.empty());

    Recording no_truth;
    no_truth.sample_rate_hz = 24000;
    no_truth.samples.assign(1, std::vector<double>(24000, 0.0));
    REQUIRE_THROWS_AS(default_calibration_stimuli(no_truth, 0.1), std::invalid_argument);
}
