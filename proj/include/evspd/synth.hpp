#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "evspd/parallel.hpp"
#include "evspd/recording.hpp"
#include "evspd/rng.hpp"

namespace evspd {

// Parameters for generating a synthetic extracellular recording: spike
// templates arriving in a thinned Poisson process plus additive Gaussian
// noise. noise_sigma is relative to the unit template peak. The noise is
// spectrally shaped like the spike band (the source dataset builds its
// background from superimposed distant spikes), with exactly the
// requested RMS.
struct SynthesisSpec {
    std::vector<std::vector<double>> templates; // at sample_rate_hz, peak normalized to 1.0
    double firing_rate_hz = 20.0;
    double noise_sigma = 0.1;
    double duration_s = 60.0;
    double sample_rate_hz = 24000.0;
    std::uint64_t rng_seed = 1;
    double min_separation_s = 0.002;
    std::size_t channels = 1;
    // When non-empty, channel c uses forced_onsets[c] instead of drawing a
    // Poisson process (test/calibration hook).
    std::vector<std::vector<double>> forced_onsets;
};

namespace detail {

inline std::vector<double> gauss_mixture(double fs, double support_s,
                                         std::initializer_list<std::array<double, 3>> lobes) {
    const std::size_t n = static_cast<std::size_t>(std::lround(support_s * fs));
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(i) + 0.5) / fs;
        for (const auto& l : lobes) // {amplitude, center_s, width_s}
            w[i] += l[0] * std::exp(-0.5 * std::pow((t - l[1]) / l[2], 2.0));
    }
    const double peak = *std::max_element(w.begin(), w.end());
    for (double& v : w) v /= peak;
    return w;
}

} // namespace detail

// Four built-in 1-ms spike waveforms (biphasic and triphasic shapes with
// the oscillatory swings of real extracellular action potentials),
// positive peak normalized to 1.0.
inline std::vector<std::vector<double>> builtin_templates(double sample_rate_hz) {
    using detail::gauss_mixture;
    std::vector<std::vector<double>> t;
    // sharp biphasic with pre-dip and rebound
    t.push_back(gauss_mixture(sample_rate_hz, 1e-3,
                              {{-0.55, 0.12e-3, 0.05e-3},
                               {1.0, 0.27e-3, 0.05e-3},
                               {-0.95, 0.42e-3, 0.06e-3},
                               {0.65, 0.58e-3, 0.06e-3},
                               {-0.35, 0.75e-3, 0.07e-3}}));
    // leading trough, delayed peak
    t.push_back(gauss_mixture(sample_rate_hz, 1e-3,
                              {{0.50, 0.10e-3, 0.05e-3},
                               {-0.90, 0.25e-3, 0.05e-3},
                               {1.0, 0.41e-3, 0.055e-3},
                               {-0.80, 0.57e-3, 0.06e-3},
                               {0.45, 0.74e-3, 0.065e-3}}));
    // triphasic with a strong leading trough
    t.push_back(gauss_mixture(sample_rate_hz, 1e-3,
                              {{0.60, 0.12e-3, 0.05e-3},
                               {-0.95, 0.27e-3, 0.05e-3},
                               {1.0, 0.44e-3, 0.055e-3},
                               {-0.75, 0.61e-3, 0.06e-3},
                               {0.40, 0.78e-3, 0.065e-3}}));
    // fast oscillatory
    t.push_back(gauss_mixture(sample_rate_hz, 1e-3,
                              {{0.60, 0.15e-3, 0.05e-3},
                               {-0.90, 0.30e-3, 0.05e-3},
                               {1.0, 0.45e-3, 0.06e-3},
                               {-0.70, 0.62e-3, 0.07e-3},
                               {0.30, 0.82e-3, 0.08e-3}}));
    return t;
}

// Poisson onsets on [0, duration), thinned so consecutive retained onsets
// are >= min_separation apart.
inline std::vector<double> poisson_onsets(double rate_hz, double duration_s, double min_separation_s,
                                          std::mt19937_64& rng) {
    std::vector<double> onsets;
    if (rate_hz <= 0 || duration_s <= 0) return onsets;
    std::exponential_distribution<double> gap(rate_hz);
    double t = gap(rng);
    double last = -1e30;
    while (t < duration_s) {
        if (t - last >= min_separation_s) {
            onsets.push_back(t);
            last = t;
        }
        t += gap(rng);
    }
    return onsets;
}

namespace detail {

// Unit-energy kernel built from the template bank; shaping white noise
// with it reproduces the spike-band spectrum of the source dataset's
// background.
inline std::vector<double> noise_kernel(const std::vector<std::vector<double>>& templates) {
    std::size_t len = 0;
    for (const auto& t : templates) len = std::max(len, t.size());
    std::vector<double> kernel(len, 0.0);
    for (const auto& t : templates)
        for (std::size_t i = 0; i < t.size(); ++i) kernel[i] += t[i];
    double energy = 0;
    for (double v : kernel) energy += v * v;
    const double scale = 1.0 / std::sqrt(energy);
    for (double& v : kernel) v *= scale;
    return kernel;
}

} // namespace detail

inline Recording synthesize(const SynthesisSpec& spec) {
    if (spec.templates.empty()) throw std::invalid_argument("synthesize: at least one template required");
    for (const auto& w : spec.templates)
        if (w.empty()) throw std::invalid_argument("synthesize: empty template");
    if (spec.duration_s <= 0) throw std::invalid_argument("synthesize: duration must be positive");
    if (spec.sample_rate_hz <= 0) throw std::invalid_argument("synthesize: sample rate must be positive");
    if (spec.noise_sigma < 0) throw std::invalid_argument("synthesize: noise_sigma must be >= 0");
    if (spec.firing_rate_hz < 0) throw std::invalid_argument("synthesize: firing_rate_hz must be >= 0");
    if (spec.channels == 0) throw std::invalid_argument("synthesize: channels must be positive");

    const std::size_t n = static_cast<std::size_t>(std::lround(spec.duration_s * spec.sample_rate_hz));
    const std::vector<double> kernel = detail::noise_kernel(spec.templates);
    Recording rec;
    rec.sample_rate_hz = spec.sample_rate_hz;
    rec.samples.assign(spec.channels, std::vector<double>(n, 0.0));
    rec.ground_truth.assign(spec.channels, {});

    for (std::size_t c = 0; c < spec.channels; ++c) {
        auto rng = make_rng(spec.rng_seed, c);
        std::vector<double> onsets;
        if (!spec.forced_onsets.empty()) {
            onsets = c < spec.forced_onsets.size() ? spec.forced_onsets[c] : std::vector<double>{};
            std::sort(onsets.begin(), onsets.end());
        } else {
            onsets = poisson_onsets(spec.firing_rate_hz, spec.duration_s, spec.min_separation_s, rng);
        }
        const auto& tmpl = spec.templates[c % spec.templates.size()];
        auto& x = rec.samples[c];
        for (double onset : onsets) {
            const std::size_t i0 = static_cast<std::size_t>(std::lround(onset * spec.sample_rate_hz));
            for (std::size_t k = 0; k < tmpl.size() && i0 + k < n; ++k) x[i0 + k] += tmpl[k];
        }
        if (spec.noise_sigma > 0) {
            std::normal_distribution<double> unit(0.0, 1.0);
            std::vector<double> white(n + kernel.size());
            for (double& v : white) v = unit(rng);
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0;
                for (std::size_t k = 0; k < kernel.size(); ++k) acc += kernel[k] * white[i + k];
                x[i] += spec.noise_sigma * acc;
            }
        }
        // recordings serialize as float32; keep the in-memory values on
        // that grid so save/load round-trips are lossless
        for (double& v : x) v = static_cast<double>(static_cast<float>(v));
        rec.ground_truth[c] = std::move(onsets);
    }
    return rec;
}

inline double sigma_for_snr_db(double snr_db) { return std::pow(10.0, -snr_db / 20.0); }

inline constexpr double kSnrCapDb = 200.0;

// Mean spike peak amplitude over noise RMS, in dB. Peaks are measured as
// max |x| within 1 ms after each ground-truth onset; noise RMS on samples
// more than 0.5 ms away from any spike window.
inline double snr_of(const Recording& rec) {
    if (!rec.has_ground_truth()) throw std::invalid_argument("snr_of: ground truth required");
    const double fs = rec.sample_rate_hz;
    const std::size_t spike_len = static_cast<std::size_t>(std::lround(1e-3 * fs));
    const std::size_t guard = static_cast<std::size_t>(std::lround(0.5e-3 * fs));

    double peak_sum = 0;
    std::size_t peak_count = 0;
    double noise_sq = 0;
    std::size_t noise_count = 0;
    for (std::size_t c = 0; c < rec.channels(); ++c) {
        const auto& x = rec.samples[c];
        std::vector<bool> in_spike(x.size(), false);
        for (double onset : rec.ground_truth[c]) {
            const std::size_t i0 = static_cast<std::size_t>(std::lround(onset * fs));
            const std::size_t lo = i0 > guard ? i0 - guard : 0;
            const std::size_t hi = std::min(x.size(), i0 + spike_len + guard);
            for (std::size_t i = lo; i < hi; ++i) in_spike[i] = true;
            double peak = 0;
            for (std::size_t i = i0; i < std::min(x.size(), i0 + spike_len); ++i)
                peak = std::max(peak, std::abs(x[i]));
            peak_sum += peak;
            ++peak_count;
        }
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!in_spike[i]) {
                noise_sq += x[i] * x[i];
                ++noise_count;
            }
    }
    if (peak_count == 0) throw std::invalid_argument("snr_of: no ground-truth spikes");
    const double mean_peak = peak_sum / static_cast<double>(peak_count);
    const double noise_rms = noise_count > 0 ? std::sqrt(noise_sq / static_cast<double>(noise_count)) : 0.0;
    if (noise_rms < mean_peak * 1e-10) return kSnrCapDb;
    return 20.0 * std::log10(mean_peak / noise_rms);
}

} // namespace evspd
