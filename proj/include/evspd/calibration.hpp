#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "evspd/encoder.hpp"
#include "evspd/recording.hpp"
#include "evspd/hram.hpp"
#include "evspd/parallel.hpp"

namespace evspd {

// Canonical calibration stimuli: a spike waveform and a noise segment,
// each delta-modulated into a <=10 ms event burst reusable across
// channels.
struct Stimuli {
    std::vector<TimedPulse> spike;
    std::vector<TimedPulse> noise;
};

inline constexpr std::uint32_t kStimulusPeriodUs = 10000;

inline Stimuli build_stimuli(const std::vector<double>& spike_waveform,
                             const std::vector<double>& noise_segment, double modulation_threshold,
                             double sample_rate_hz) {
    if (spike_waveform.empty() || noise_segment.empty())
        throw std::invalid_argument("build_stimuli: empty stimulus input");
    Stimuli s;
    s.spike = delta_modulate(spike_waveform, modulation_threshold, sample_rate_hz);
    s.noise = delta_modulate(noise_segment, modulation_threshold, sample_rate_hz);
    for (auto* burst : {&s.spike, &s.noise})
        while (!burst->empty() && burst->back().t_us >= kStimulusPeriodUs) burst->pop_back();
    return s;
}

struct ChannelCalibration {
    std::uint8_t code = kNominalVbpCode;
    std::array<int, 4> fn{}; // spike-stimulus misses per code
    std::array<int, 4> fp{}; // noise-stimulus false detections per code
};

// Canonical stimuli pulled out of a recording: the first ground-truth
// spike waveform and the first 10 ms spike-free stretch. Falls back to a
// zero noise segment when the recording has no quiet stretch.
inline Stimuli default_calibration_stimuli(const Recording& rec, double modulation_threshold) {
    const double fs = rec.sample_rate_hz;
    const std::size_t wave_len = static_cast<std::size_t>(std::lround(1e-3 * fs));
    const std::size_t seg_len = static_cast<std::size_t>(std::lround(kStimulusPeriodUs * 1e-6 * fs));

    std::vector<double> spike_wave;
    std::vector<double> noise_seg;
    if (rec.has_ground_truth()) {
        for (std::size_t c = 0; c < rec.channels() && spike_wave.empty(); ++c) {
            for (double onset : rec.ground_truth[c]) {
                const std::size_t i0 = static_cast<std::size_t>(std::lround(onset * fs));
                if (i0 + wave_len <= rec.samples[c].size()) {
                    spike_wave.assign(rec.samples[c].begin() + static_cast<std::ptrdiff_t>(i0),
                                      rec.samples[c].begin() + static_cast<std::ptrdiff_t>(i0 + wave_len));
                    break;
                }
            }
        }
        for (std::size_t c = 0; c < rec.channels() && noise_seg.empty(); ++c) {
            const auto& onsets = rec.ground_truth[c];
            std::size_t start = 0;
            for (double onset : onsets) {
                const std::size_t i0 = static_cast<std::size_t>(std::lround(onset * fs));
                if (i0 > start + seg_len + wave_len) break;
                start = i0 + 2 * wave_len;
            }
            if (start + seg_len <= rec.samples[c].size())
                noise_seg.assign(rec.samples[c].begin() + static_cast<std::ptrdiff_t>(start),
                                 rec.samples[c].begin() + static_cast<std::ptrdiff_t>(start + seg_len));
        }
    }
    if (spike_wave.empty())
        throw std::invalid_argument("default_calibration_stimuli: no usable spike waveform");
    if (noise_seg.empty()) noise_seg.assign(seg_len, 0.0);
    return build_stimuli(spike_wave, noise_seg, modulation_threshold, fs);
}

namespace detail {

// Present one stimulus burst `presentations` times at the stimulus period
// and count presentation windows with >=1 detection. The channel is taken
// by value: every run starts from the same drawn mismatch and latch
// state, so the four codes see identical randomness.
inline int count_detected_windows(ChannelHram ch, const HramConfig& cfg, std::uint8_t code,
                                  const std::vector<TimedPulse>& burst, int presentations) {
    std::vector<TimedPulse> stream;
    stream.reserve(burst.size() * static_cast<std::size_t>(presentations));
    for (int k = 0; k < presentations; ++k) {
        const std::uint32_t base = static_cast<std::uint32_t>(k) * kStimulusPeriodUs;
        for (const auto& p : burst) stream.push_back({base + p.t_us, p.polarity});
    }
    ch.vbp_code = code;
    const std::uint64_t duration = static_cast<std::uint64_t>(presentations) * kStimulusPeriodUs;
    const auto detections = run_channel_hram(ch, stream, cfg, duration);
    std::vector<std::uint8_t> hit(static_cast<std::size_t>(presentations), 0);
    for (std::uint32_t t : detections) {
        // a detection at the closing edge of a window belongs to the
        // presentation that produced it
        const std::size_t k = (t - 1) / kStimulusPeriodUs;
        if (k < hit.size()) hit[k] = 1;
    }
    int n = 0;
    for (std::uint8_t h : hit) n += h;
    return n;
}

} // namespace detail

using ChannelMaker = std::function<ChannelHram(const HramConfig&, std::size_t)>;

// Per-channel V_BP selection: present the spike stimulus and the noise
// stimulus for each of the four codes, count FN on the spike stimulus and
// FP on the noise stimulus, and pick argmin(FN + FP). Ties prefer codes
// closest to nominal, in the order 1, 2, 0, 3. `maker` provides the
// channel under calibration (defaults to the standard mismatch draw, so
// run_macro sees the same physical channel afterwards).
inline std::vector<ChannelCalibration> calibrate(std::size_t n_channels, const HramConfig& cfg,
                                                 const Stimuli& stimuli, int presentations = 100,
                                                 unsigned n_threads = 1, ChannelMaker maker = {}) {
    cfg.validate();
    if (stimuli.spike.empty()) throw std::invalid_argument("calibrate: missing spike stimulus");
    static constexpr std::array<std::uint8_t, 4> preference = {1, 2, 0, 3};
    if (!maker)
        maker = [](const HramConfig& c, std::size_t index) { return make_channel_hram(c, index); };

    std::vector<ChannelCalibration> result(n_channels);
    parallel_for(n_channels, n_threads, [&](std::size_t c) {
        const ChannelHram channel = maker(cfg, c);
        ChannelCalibration& cal = result[c];
        for (std::uint8_t code = 0; code < 4; ++code) {
            cal.fn[code] = presentations - detail::count_detected_windows(channel, cfg, code,
                                                                          stimuli.spike, presentations);
            cal.fp[code] = stimuli.noise.empty()
                               ? 0
                               : detail::count_detected_windows(channel, cfg, code, stimuli.noise,
                                                                presentations);
        }
        int best = cal.fn[preference[0]] + cal.fp[preference[0]];
        cal.code = preference[0];
        for (std::uint8_t cand : preference) {
            const int cost = cal.fn[cand] + cal.fp[cand];
            if (cost < best) {
                best = cost;
                cal.code = cand;
            }
        }
    });
    return result;
}

} // namespace evspd
