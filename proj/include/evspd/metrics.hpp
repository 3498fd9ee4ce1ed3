#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace evspd {

// Result of one-to-one spike-time matching.
struct MatchResult {
    std::size_t tp = 0, fp = 0, fn = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs; // (truth, detected)
};

// Greedy chronological one-to-one matching: each detection pairs with the
// earliest unmatched truth spike within +-tolerance_us. Both lists sorted.
inline MatchResult match_spikes(const std::vector<std::uint32_t>& truth,
                                const std::vector<std::uint32_t>& detected,
                                std::uint32_t tolerance_us) {
    MatchResult m;
    std::size_t ti = 0;
    for (std::uint32_t d : detected) {
        while (ti < truth.size() &&
               static_cast<std::int64_t>(truth[ti]) + tolerance_us < static_cast<std::int64_t>(d)) {
            ++m.fn;
            ++ti;
        }
        if (ti < truth.size() &&
            static_cast<std::int64_t>(truth[ti]) <= static_cast<std::int64_t>(d) + tolerance_us) {
            m.pairs.emplace_back(truth[ti], d);
            ++m.tp;
            ++ti;
        } else {
            ++m.fp;
        }
    }
    m.fn += truth.size() - ti;
    return m;
}

// Sensitivity, FDR and accuracy; a metric with an empty denominator is
// reported as nullopt, never silently 0 or 1.
struct Metrics {
    std::optional<double> sensitivity;
    std::optional<double> fdr;
    std::optional<double> accuracy;
};

inline Metrics metrics(const MatchResult& m) {
    Metrics out;
    const double tp = static_cast<double>(m.tp);
    if (m.tp + m.fn > 0) out.sensitivity = tp / static_cast<double>(m.tp + m.fn);
    if (m.tp + m.fp > 0) out.fdr = static_cast<double>(m.fp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn + m.fp > 0) out.accuracy = tp / static_cast<double>(m.tp + m.fn + m.fp);
    return out;
}

// Channel x time-bin matrix of detection counts.
struct FiringPattern {
    std::vector<std::vector<std::uint32_t>> counts; // [channel][bin]
    std::uint32_t bin_width_us = 4000;
};

// Trailing partial bin included.
inline FiringPattern firing_pattern(const std::vector<std::vector<std::uint32_t>>& detections,
                                    std::uint32_t bin_width_us, std::uint64_t duration_us) {
    if (bin_width_us == 0) throw std::invalid_argument("firing_pattern: bin width must be positive");
    const std::size_t n_bins = static_cast<std::size_t>((duration_us + bin_width_us - 1) / bin_width_us);
    FiringPattern fp;
    fp.bin_width_us = bin_width_us;
    fp.counts.assign(detections.size(), std::vector<std::uint32_t>(n_bins, 0));
    for (std::size_t c = 0; c < detections.size(); ++c)
        for (std::uint32_t t : detections[c]) {
            const std::size_t bin = t / bin_width_us;
            if (bin < n_bins) ++fp.counts[c][bin];
        }
    return fp;
}

inline double pattern_mae(const FiringPattern& a, const FiringPattern& b) {
    if (a.counts.size() != b.counts.size())
        throw std::invalid_argument("pattern_mae: shape mismatch");
    double acc = 0;
    std::size_t cells = 0;
    for (std::size_t c = 0; c < a.counts.size(); ++c) {
        if (a.counts[c].size() != b.counts[c].size())
            throw std::invalid_argument("pattern_mae: shape mismatch");
        for (std::size_t i = 0; i < a.counts[c].size(); ++i) {
            acc += std::abs(static_cast<double>(a.counts[c][i]) - static_cast<double>(b.counts[c][i]));
            ++cells;
        }
    }
    if (cells == 0) throw std::invalid_argument("pattern_mae: empty patterns");
    return acc / static_cast<double>(cells);
}

// Per-channel accuracy of detector B with detector A's spikes taken as
// ground truth. Channels where both lists are empty count as perfect
// agreement (1.0).
struct SimilarityResult {
    std::vector<double> per_channel;
    double mean = 0;
};

inline SimilarityResult similarity(const std::vector<std::vector<std::uint32_t>>& reference,
                                   const std::vector<std::vector<std::uint32_t>>& other,
                                   std::uint32_t tolerance_us) {
    if (reference.size() != other.size())
        throw std::invalid_argument("similarity: channel count mismatch");
    SimilarityResult r;
    r.per_channel.reserve(reference.size());
    double acc = 0;
    for (std::size_t c = 0; c < reference.size(); ++c) {
        const auto m = metrics(match_spikes(reference[c], other[c], tolerance_us));
        const double v = m.accuracy.value_or(1.0);
        r.per_channel.push_back(v);
        acc += v;
    }
    r.mean = reference.empty() ? 0.0 : acc / static_cast<double>(reference.size());
    return r;
}

} // namespace evspd
