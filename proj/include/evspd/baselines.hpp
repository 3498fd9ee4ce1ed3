#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace evspd {

// Sample-domain reference detectors used for comparison and labeling.
struct BaselineParams {
    std::size_t neo_window = 24;     // smoothing window, samples (1 ms at 24 kHz)
    double neo_thresh_mult = 14.0;   // multiplier on mean smoothed NEO value
    double abs_mult = 4.0;           // multiplier in the median-based absolute threshold
    std::uint32_t refractory_us = 1000;

    void validate() const {
        if (neo_window < 1) throw std::invalid_argument("BaselineParams: neo_window must be >= 1");
        if (neo_thresh_mult <= 0 || abs_mult <= 0)
            throw std::invalid_argument("BaselineParams: multipliers must be positive");
    }
};

// Nonlinear energy operator psi[n] = x[n]^2 - x[n-1]*x[n+1], boundaries
// zero-filled.
inline std::vector<double> neo(const std::vector<double>& x) {
    if (x.size() < 3) throw std::invalid_argument("neo: input length must be >= 3");
    std::vector<double> psi(x.size(), 0.0);
    for (std::size_t i = 1; i + 1 < x.size(); ++i) psi[i] = x[i] * x[i] - x[i - 1] * x[i + 1];
    return psi;
}

// Moving average with a unit-sum rectangular kernel; output[i] averages
// x[i-window+1 .. i] with zero padding before the start.
inline std::vector<double> box_smooth(const std::vector<double>& x, std::size_t window) {
    if (window < 1) throw std::invalid_argument("box_smooth: window must be >= 1");
    std::vector<double> y(x.size(), 0.0);
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i];
        if (i >= window) acc -= x[i - window];
        y[i] = acc / static_cast<double>(window);
    }
    return y;
}

// Energy detection with low-pass filter: squared first difference
// convolved with a unit-sum rectangular kernel. Non-negative everywhere.
inline std::vector<double> ed_lpf(const std::vector<double>& x, std::size_t window) {
    if (x.size() < 2) throw std::invalid_argument("ed_lpf: input length must be >= 2");
    std::vector<double> d2(x.size(), 0.0);
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double d = x[i] - x[i - 1];
        d2[i] = d * d;
    }
    return box_smooth(d2, window);
}

// Rising-edge threshold crossings with refractory suppression; returns
// sample indices.
inline std::vector<std::size_t> rising_crossings(const std::vector<double>& y, double threshold,
                                                 std::size_t refractory_samples) {
    std::vector<std::size_t> out;
    bool above = false;
    std::size_t last = 0;
    bool have_last = false;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const bool now = y[i] > threshold;
        if (now && !above && (!have_last || i - last >= refractory_samples)) {
            out.push_back(i);
            last = i;
            have_last = true;
        }
        above = now;
    }
    return out;
}

inline std::uint32_t sample_to_us(std::size_t i, double fs) {
    return static_cast<std::uint32_t>(std::llround(static_cast<double>(i) * 1e6 / fs));
}

inline std::size_t us_to_samples(std::uint32_t us, double fs) {
    return static_cast<std::size_t>(std::llround(us * 1e-6 * fs));
}

// Empirical absolute threshold: abs_mult * median(|x| / 0.6745).
inline double abs_threshold_level(const std::vector<double>& x, double abs_mult) {
    if (x.empty()) throw std::invalid_argument("abs_threshold_level: empty signal");
    std::vector<double> mag(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mag[i] = std::abs(x[i]);
    const std::size_t mid = mag.size() / 2;
    std::nth_element(mag.begin(), mag.begin() + mid, mag.end());
    return abs_mult * mag[mid] / 0.6745;
}

// Absolute-threshold detection on |x| with refractory; spike times in us.
inline std::vector<std::uint32_t> abs_threshold_detect(const std::vector<double>& x, double fs,
                                                       double abs_mult = 4.0,
                                                       std::uint32_t refractory_us = 1000) {
    const double thr = abs_threshold_level(x, abs_mult);
    std::vector<double> mag(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mag[i] = std::abs(x[i]);
    std::vector<std::uint32_t> out;
    for (std::size_t i : rising_crossings(mag, thr, us_to_samples(refractory_us, fs)))
        out.push_back(sample_to_us(i, fs));
    return out;
}

// NEO detection: smoothed psi thresholded at neo_thresh_mult * mean.
inline std::vector<std::uint32_t> neo_detect(const std::vector<double>& x, double fs,
                                             const BaselineParams& params) {
    params.validate();
    const auto smoothed = box_smooth(neo(x), params.neo_window);
    double mean = 0;
    for (double v : smoothed) mean += v;
    mean /= static_cast<double>(smoothed.size());
    std::vector<std::uint32_t> out;
    for (std::size_t i : rising_crossings(smoothed, params.neo_thresh_mult * mean,
                                          us_to_samples(params.refractory_us, fs)))
        out.push_back(sample_to_us(i, fs));
    return out;
}

// ED-LPF detection with the same multiplier-on-mean threshold rule.
inline std::vector<std::uint32_t> ed_lpf_detect(const std::vector<double>& x, double fs,
                                                const BaselineParams& params) {
    params.validate();
    const auto emphasized = ed_lpf(x, params.neo_window);
    double mean = 0;
    for (double v : emphasized) mean += v;
    mean /= static_cast<double>(emphasized.size());
    std::vector<std::uint32_t> out;
    for (std::size_t i : rising_crossings(emphasized, params.neo_thresh_mult * mean,
                                          us_to_samples(params.refractory_us, fs)))
        out.push_back(sample_to_us(i, fs));
    return out;
}

} // namespace evspd
