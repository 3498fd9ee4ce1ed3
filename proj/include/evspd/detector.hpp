#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "evspd/aer.hpp"
#include "evspd/metrics.hpp"
#include "evspd/parallel.hpp"

namespace evspd {

// Dual-threshold event-based spike detection parameters. Events are
// counted in bins of t_s_us, binarized against thr1, and the moving sum
// of the last n_s binary values is compared with thr2.
struct EvSpdParams {
    std::uint32_t t_s_us = 125;      // bin duration
    int n_s = 8;                     // bins per window (T_spk = t_s_us * n_s)
    double thr1 = 3.0;               // per-bin event-count threshold (strict >)
    int thr2 = 4;                    // window-level threshold on the moving sum (strict >)
    std::uint32_t refractory_us = 1000;

    std::uint32_t t_spk_us() const { return t_s_us * static_cast<std::uint32_t>(n_s); }

    void validate() const {
        if (t_s_us == 0) throw std::invalid_argument("EvSpdParams: t_s_us must be positive");
        if (n_s < 1) throw std::invalid_argument("EvSpdParams: n_s must be >= 1");
        if (thr1 <= 0) throw std::invalid_argument("EvSpdParams: thr1 must be positive");
        if (thr2 < 1 || thr2 > n_s) throw std::invalid_argument("EvSpdParams: thr2 must be in [1, n_s]");
    }
};

inline void to_json(nlohmann::ordered_json& j, const EvSpdParams& p) {
    j = {{"t_s_us", p.t_s_us}, {"n_s", p.n_s}, {"thr1", p.thr1},
         {"thr2", p.thr2}, {"refractory_us", p.refractory_us}};
}

inline EvSpdParams evspd_params_from_json(const nlohmann::json& j) {
    EvSpdParams p;
    for (const auto& [key, value] : j.items()) {
        if (key == "t_s_us") p.t_s_us = value.get<std::uint32_t>();
        else if (key == "n_s") p.n_s = value.get<int>();
        else if (key == "thr1") p.thr1 = value.get<double>();
        else if (key == "thr2") p.thr2 = value.get<int>();
        else if (key == "refractory_us") p.refractory_us = value.get<std::uint32_t>();
        else throw std::invalid_argument("EvSpdParams: unknown key " + key);
    }
    p.validate();
    return p;
}

inline EvSpdParams load_evspd_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open params file " + path);
    return evspd_params_from_json(nlohmann::json::parse(in));
}

// Number of bins processed for a stream covering [0, duration_us): every
// bin that can hold events plus n_s trailing bins so the moving-sum
// window drains completely.
inline std::size_t bin_count_for(std::uint64_t duration_us, const EvSpdParams& p) {
    const std::size_t data_bins = static_cast<std::size_t>((duration_us + p.t_s_us - 1) / p.t_s_us);
    return data_bins + static_cast<std::size_t>(p.n_s);
}

// Per-bin event counts over half-open bins [i*t_s, (i+1)*t_s), polarity
// ignored. Events at or past n_bins*t_s are dropped.
template <typename Event>
inline std::vector<std::uint32_t> bin_events(const std::vector<Event>& events, std::uint32_t t_s_us,
                                             std::size_t n_bins) {
    std::vector<std::uint32_t> counts(n_bins, 0);
    for (const auto& e : events) {
        const std::size_t bin = e.t_us / t_s_us;
        if (bin < n_bins) ++counts[bin];
    }
    return counts;
}

inline std::vector<std::uint8_t> threshold_bins(const std::vector<std::uint32_t>& counts, double thr1) {
    if (thr1 <= 0) throw std::invalid_argument("threshold_bins: thr1 must be positive");
    std::vector<std::uint8_t> a(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        a[i] = static_cast<double>(counts[i]) > thr1 ? 1 : 0;
    return a;
}

// Sliding-window sum of the last n_s values with implicit zero padding
// before index 0.
inline std::vector<int> moving_sum(const std::vector<std::uint8_t>& a, int n_s) {
    if (n_s < 1) throw std::invalid_argument("moving_sum: n_s must be >= 1");
    std::vector<int> s(a.size());
    int acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i];
        if (i >= static_cast<std::size_t>(n_s)) acc -= a[i - static_cast<std::size_t>(n_s)];
        s[i] = acc;
    }
    return s;
}

// Scan the moving-sum sequence: a spike is emitted at the closing edge of
// the first bin with s > thr2, then detection is suppressed until
// refractory_us has elapsed since the emitted time.
inline std::vector<std::uint32_t> scan_detections(const std::vector<int>& s, const EvSpdParams& p) {
    std::vector<std::uint32_t> spikes;
    std::uint64_t next_allowed = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] > p.thr2) {
            const std::uint64_t t = (static_cast<std::uint64_t>(i) + 1) * p.t_s_us;
            if (t >= next_allowed) {
                spikes.push_back(static_cast<std::uint32_t>(t));
                next_allowed = t + p.refractory_us;
            }
        }
    }
    return spikes;
}

// Reference (ideal, floating point) Ev-SPD detection for one channel.
// duration_us = 0 derives the span from the last event.
template <typename Event>
inline std::vector<std::uint32_t> detect(const std::vector<Event>& events, const EvSpdParams& params,
                                         std::uint64_t duration_us = 0) {
    params.validate();
    if (events.empty()) return {};
    if (duration_us == 0) duration_us = static_cast<std::uint64_t>(events.back().t_us) + 1;
    const std::size_t n_bins = bin_count_for(duration_us, params);
    const auto counts = bin_events(events, params.t_s_us, n_bins);
    const auto a = threshold_bins(counts, params.thr1);
    const auto s = moving_sum(a, params.n_s);
    return scan_detections(s, params);
}

// Detection over a merged stream: demux by address, run channels
// independently.
inline std::vector<std::vector<std::uint32_t>> detect_all(const std::vector<AerEvent>& events,
                                                          std::size_t n_channels,
                                                          const EvSpdParams& params,
                                                          std::uint64_t duration_us = 0,
                                                          unsigned n_threads = 1) {
    auto per_channel = demux_events(events, n_channels);
    std::vector<std::vector<std::uint32_t>> detections(n_channels);
    parallel_for(n_channels, n_threads, [&](std::size_t c) {
        detections[c] = detect(per_channel[c], params, duration_us);
    });
    return detections;
}

// Accuracy grid over (thr1, thr2) combinations.
struct SweepGrid {
    std::vector<double> thr1_values;
    std::vector<int> thr2_values;
    std::vector<std::vector<double>> mean_accuracy; // [thr1 index][thr2 index]
    double best_thr1 = 0;
    int best_thr2 = 0;
    double best_accuracy = 0;
};

// Mean detection accuracy across channels for every threshold pair.
// Channels with an undefined accuracy (no truth and no detections) are
// skipped in the mean.
inline SweepGrid sweep_thresholds(const std::vector<std::vector<AerEvent>>& events_per_channel,
                                  const std::vector<std::vector<std::uint32_t>>& truth_us,
                                  const std::vector<double>& thr1_range,
                                  const std::vector<int>& thr2_range, EvSpdParams base,
                                  std::uint32_t tolerance_us = 1000, std::uint64_t duration_us = 0,
                                  unsigned n_threads = 1) {
    if (thr1_range.empty() || thr2_range.empty())
        throw std::invalid_argument("sweep_thresholds: empty threshold range");
    if (events_per_channel.size() != truth_us.size())
        throw std::invalid_argument("sweep_thresholds: truth/event channel mismatch");

    SweepGrid grid;
    grid.thr1_values = thr1_range;
    grid.thr2_values = thr2_range;
    grid.mean_accuracy.assign(thr1_range.size(), std::vector<double>(thr2_range.size(), 0.0));

    const std::size_t n_ch = events_per_channel.size();
    // accuracy contribution per (cell, channel); channels are independent
    std::vector<std::vector<std::vector<double>>> acc(
        thr1_range.size(),
        std::vector<std::vector<double>>(thr2_range.size(), std::vector<double>(n_ch, -1.0)));

    parallel_for(n_ch, n_threads, [&](std::size_t c) {
        for (std::size_t i = 0; i < thr1_range.size(); ++i) {
            EvSpdParams p = base;
            p.thr1 = thr1_range[i];
            for (std::size_t j = 0; j < thr2_range.size(); ++j) {
                p.thr2 = thr2_range[j];
                p.validate();
                const auto det = detect(events_per_channel[c], p, duration_us);
                const auto m = metrics(match_spikes(truth_us[c], det, tolerance_us));
                if (m.accuracy) acc[i][j][c] = *m.accuracy;
            }
        }
    });

    for (std::size_t i = 0; i < thr1_range.size(); ++i)
        for (std::size_t j = 0; j < thr2_range.size(); ++j) {
            double sum = 0;
            std::size_t defined = 0;
            for (std::size_t c = 0; c < n_ch; ++c)
                if (acc[i][j][c] >= 0) {
                    sum += acc[i][j][c];
                    ++defined;
                }
            grid.mean_accuracy[i][j] = defined > 0 ? sum / static_cast<double>(defined) : 0.0;
            if (grid.mean_accuracy[i][j] > grid.best_accuracy) {
                grid.best_accuracy = grid.mean_accuracy[i][j];
                grid.best_thr1 = thr1_range[i];
                grid.best_thr2 = thr2_range[j];
            }
        }
    return grid;
}

} // namespace evspd
