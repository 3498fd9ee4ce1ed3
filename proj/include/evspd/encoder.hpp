#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "evspd/aer.hpp"
#include "evspd/baselines.hpp"
#include "evspd/parallel.hpp"
#include "evspd/recording.hpp"

namespace evspd {

struct TimedPulse {
    std::uint32_t t_us = 0;
    std::int8_t polarity = 1;

    friend bool operator==(const TimedPulse&, const TimedPulse&) = default;
};

// Streaming delta modulator. For each consumed sample with
// delta = x - v_reset:
//   delta >  threshold: emit n = floor(delta/threshold) positive pulses,
//                       v_reset += n*threshold
//   delta < -threshold: emit n = floor(-delta/threshold) negative pulses,
//                       v_reset -= n*threshold
// Pulses for sample i are spread over [i, i+1] in sample units (a single
// pulse sits at i), rounded to microseconds. Same-microsecond collisions
// are bumped by +1 us so the per-channel stream is strictly increasing.
// After every sample, |x - v_reset| < threshold.
class DeltaModulator {
public:
    DeltaModulator(double threshold, double sample_rate_hz)
        : threshold_(threshold), fs_(sample_rate_hz) {
        if (threshold <= 0) throw std::invalid_argument("DeltaModulator: threshold must be positive");
        if (sample_rate_hz <= 0) throw std::invalid_argument("DeltaModulator: sample rate must be positive");
    }

    void consume(double x, std::vector<TimedPulse>& out) {
        const double delta = x - v_reset_;
        if (delta > threshold_) {
            const long long n = static_cast<long long>(std::floor(delta / threshold_));
            emit(n, +1, out);
            v_reset_ += static_cast<double>(n) * threshold_;
        } else if (delta < -threshold_) {
            const long long n = static_cast<long long>(std::floor(delta / -threshold_));
            emit(n, -1, out);
            v_reset_ -= static_cast<double>(n) * threshold_;
        }
        ++index_;
    }

    double v_reset() const { return v_reset_; }
    double threshold() const { return threshold_; }

private:
    void emit(long long n, std::int8_t polarity, std::vector<TimedPulse>& out) {
        for (long long k = 0; k < n; ++k) {
            const double t_samples =
                n == 1 ? static_cast<double>(index_)
                       : static_cast<double>(index_) + static_cast<double>(k) / static_cast<double>(n - 1);
            std::uint32_t t_us = static_cast<std::uint32_t>(std::llround(t_samples * 1e6 / fs_));
            if (emitted_ && t_us <= last_t_us_) t_us = last_t_us_ + 1;
            out.push_back({t_us, polarity});
            last_t_us_ = t_us;
            emitted_ = true;
        }
    }

    double threshold_;
    double fs_;
    double v_reset_ = 0.0;
    std::size_t index_ = 0;
    std::uint32_t last_t_us_ = 0;
    bool emitted_ = false;
};

inline std::vector<TimedPulse> delta_modulate(const std::vector<double>& signal, double threshold,
                                              double sample_rate_hz) {
    if (signal.empty()) throw std::invalid_argument("delta_modulate: empty signal");
    DeltaModulator mod(threshold, sample_rate_hz);
    std::vector<TimedPulse> pulses;
    for (double x : signal) mod.consume(x, pulses);
    return pulses;
}

enum class ThresholdMode { FractionOfPeak, FractionOfP2p, Fixed };

struct ThresholdSpec {
    ThresholdMode mode = ThresholdMode::FractionOfPeak;
    double value = 0.1;

    // "frac-peak:0.1" | "frac-p2p:0.5" | "fixed:0.07"
    static ThresholdSpec parse(const std::string& text) {
        const auto colon = text.find(':');
        if (colon == std::string::npos)
            throw std::invalid_argument("threshold mode: expected <mode>:<value>, got " + text);
        const std::string name = text.substr(0, colon);
        const double v = std::stod(text.substr(colon + 1));
        if (name == "frac-peak") return {ThresholdMode::FractionOfPeak, v};
        if (name == "frac-p2p") return {ThresholdMode::FractionOfP2p, v};
        if (name == "fixed") return {ThresholdMode::Fixed, v};
        throw std::invalid_argument("threshold mode: unknown mode " + name);
    }

    std::string to_string() const {
        const char* name = mode == ThresholdMode::FractionOfPeak ? "frac-peak"
                           : mode == ThresholdMode::FractionOfP2p ? "frac-p2p"
                                                                  : "fixed";
        return std::string(name) + ":" + std::to_string(value);
    }
};

struct PickedThresholds {
    std::vector<double> per_channel;
    std::vector<std::uint8_t> fell_back; // channels where no spikes were found
};

// Per-channel delta-modulation threshold. Data-driven modes measure 1-ms
// spike waveforms located by ground truth when present, otherwise by
// absolute-threshold detection. Channels with no usable spikes get
// `fallback_threshold` and are flagged.
inline PickedThresholds pick_threshold(const Recording& rec, const ThresholdSpec& spec,
                                       double fallback_threshold = 0.1) {
    if (spec.value <= 0) throw std::invalid_argument("pick_threshold: value must be positive");
    PickedThresholds picked;
    picked.per_channel.assign(rec.channels(), 0.0);
    picked.fell_back.assign(rec.channels(), 0);
    if (spec.mode == ThresholdMode::Fixed) {
        std::fill(picked.per_channel.begin(), picked.per_channel.end(), spec.value);
        return picked;
    }
    const double fs = rec.sample_rate_hz;
    const std::size_t wave_len = static_cast<std::size_t>(std::lround(1e-3 * fs));
    for (std::size_t c = 0; c < rec.channels(); ++c) {
        const auto& x = rec.samples[c];
        std::vector<std::size_t> starts;
        if (rec.has_ground_truth()) {
            for (double onset : rec.ground_truth[c])
                starts.push_back(static_cast<std::size_t>(std::lround(onset * fs)));
        } else {
            // detection marks the crossing inside the spike; open the
            // window slightly before it
            for (std::uint32_t t : abs_threshold_detect(x, fs)) {
                const std::size_t i = us_to_samples(t, fs);
                starts.push_back(i > wave_len / 4 ? i - wave_len / 4 : 0);
            }
        }
        double acc = 0;
        std::size_t used = 0;
        for (std::size_t i0 : starts) {
            if (i0 >= x.size()) continue;
            const std::size_t i1 = std::min(x.size(), i0 + wave_len);
            double lo = x[i0], hi = x[i0];
            for (std::size_t i = i0; i < i1; ++i) {
                lo = std::min(lo, x[i]);
                hi = std::max(hi, x[i]);
            }
            acc += spec.mode == ThresholdMode::FractionOfPeak ? std::max(std::abs(lo), std::abs(hi))
                                                              : hi - lo;
            ++used;
        }
        if (used == 0) {
            picked.per_channel[c] = fallback_threshold;
            picked.fell_back[c] = 1;
        } else {
            picked.per_channel[c] = spec.value * acc / static_cast<double>(used);
        }
    }
    return picked;
}

// Delta-modulate every channel and merge into one stream sorted by
// timestamp, ties broken by ascending address (ideal arbiter).
inline std::vector<AerEvent> encode_recording(const Recording& rec,
                                              const std::vector<double>& thresholds,
                                              unsigned n_threads = 1) {
    if (rec.channels() > kMaxChannels)
        throw std::invalid_argument("encode_recording: more than 1024 channels");
    if (thresholds.size() != rec.channels())
        throw std::invalid_argument("encode_recording: one threshold per channel required");

    std::vector<std::vector<TimedPulse>> pulses(rec.channels());
    parallel_for(rec.channels(), n_threads, [&](std::size_t c) {
        pulses[c] = delta_modulate(rec.samples[c], thresholds[c], rec.sample_rate_hz);
    });

    std::size_t total = 0;
    for (const auto& p : pulses) total += p.size();
    std::vector<AerEvent> merged;
    merged.reserve(total);
    for (std::size_t c = 0; c < pulses.size(); ++c)
        for (const auto& p : pulses[c])
            merged.push_back({p.t_us, static_cast<std::uint16_t>(c), p.polarity, 0});
    std::sort(merged.begin(), merged.end(), [](const AerEvent& a, const AerEvent& b) {
        return a.t_us != b.t_us ? a.t_us < b.t_us : a.address < b.address;
    });
    return merged;
}

// Piecewise-constant reconstruction threshold * (running polarity sum).
struct StairStep {
    std::vector<std::uint32_t> t_us;  // strictly increasing change points
    std::vector<double> level;        // level from t_us[k] (inclusive) onward

    // Level at time t, counting pulses with timestamp <= t.
    double value_at(std::uint32_t t) const {
        auto it = std::upper_bound(t_us.begin(), t_us.end(), t);
        if (it == t_us.begin()) return 0.0;
        return level[static_cast<std::size_t>(it - t_us.begin()) - 1];
    }

    // Level just before time t (pulses with timestamp < t).
    double value_before(std::uint32_t t) const {
        auto it = std::lower_bound(t_us.begin(), t_us.end(), t);
        if (it == t_us.begin()) return 0.0;
        return level[static_cast<std::size_t>(it - t_us.begin()) - 1];
    }
};

template <typename Event>
inline StairStep reconstruct(const std::vector<Event>& events, double threshold) {
    StairStep out;
    out.t_us.reserve(events.size());
    out.level.reserve(events.size());
    long long sum = 0;
    for (const auto& e : events) {
        sum += e.polarity;
        if (!out.t_us.empty() && out.t_us.back() == e.t_us) {
            out.level.back() = threshold * static_cast<double>(sum);
        } else {
            out.t_us.push_back(e.t_us);
            out.level.push_back(threshold * static_cast<double>(sum));
        }
    }
    return out;
}

} // namespace evspd
