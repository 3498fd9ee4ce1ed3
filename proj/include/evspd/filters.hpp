#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "evspd/recording.hpp"

namespace evspd {

// Second-order section with normalized a0 = 1.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

inline Biquad butter_lowpass_biquad(double cutoff_hz, double sample_rate_hz, double q_factor) {
    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / sample_rate_hz;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q_factor);
    const double a0 = 1 + alpha;
    Biquad q;
    q.b0 = (1 - cw) / 2 / a0;
    q.b1 = (1 - cw) / a0;
    q.b2 = (1 - cw) / 2 / a0;
    q.a1 = -2 * cw / a0;
    q.a2 = (1 - alpha) / a0;
    return q;
}

inline Biquad butter_highpass_biquad(double cutoff_hz, double sample_rate_hz, double q_factor) {
    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / sample_rate_hz;
    const double cw = std::cos(w0), sw = std::sin(w0);
    const double alpha = sw / (2.0 * q_factor);
    const double a0 = 1 + alpha;
    Biquad q;
    q.b0 = (1 + cw) / 2 / a0;
    q.b1 = -(1 + cw) / a0;
    q.b2 = (1 + cw) / 2 / a0;
    q.a1 = -2 * cw / a0;
    q.a2 = (1 - alpha) / a0;
    return q;
}

// Fourth-order Butterworth section Q values.
inline constexpr double kButter4Q[2] = {0.54119610014619698, 1.3065629648763764};

inline std::vector<Biquad> butter_lowpass_sos(double cutoff_hz, double sample_rate_hz) {
    return {butter_lowpass_biquad(cutoff_hz, sample_rate_hz, kButter4Q[0]),
            butter_lowpass_biquad(cutoff_hz, sample_rate_hz, kButter4Q[1])};
}

inline std::vector<Biquad> butter_highpass_sos(double cutoff_hz, double sample_rate_hz) {
    return {butter_highpass_biquad(cutoff_hz, sample_rate_hz, kButter4Q[0]),
            butter_highpass_biquad(cutoff_hz, sample_rate_hz, kButter4Q[1])};
}

inline void sos_filter_inplace(std::vector<double>& x, const Biquad& q) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
        const double y = q.b0 * v + q.b1 * x1 + q.b2 * x2 - q.a1 * y1 - q.a2 * y2;
        x2 = x1;
        x1 = v;
        y2 = y1;
        y1 = y;
        v = y;
    }
}

// Zero-phase filtering: run the cascade forward, then backward. Start-up
// transients remain at both ends (zero initial state, no padding).
inline std::vector<double> filtfilt(const std::vector<double>& x, const std::vector<Biquad>& sos) {
    std::vector<double> y = x;
    for (const auto& q : sos) sos_filter_inplace(y, q);
    std::reverse(y.begin(), y.end());
    for (const auto& q : sos) sos_filter_inplace(y, q);
    std::reverse(y.begin(), y.end());
    return y;
}

// Fourth-order Butterworth high-pass at low_hz cascaded with fourth-order
// low-pass at high_hz.
inline std::vector<Biquad> bandpass_sos(double low_hz, double high_hz, double sample_rate_hz) {
    if (!(0 < low_hz && low_hz < high_hz && high_hz < sample_rate_hz / 2))
        throw std::invalid_argument("bandpass: need 0 < low_hz < high_hz < sample_rate/2");
    auto sos = butter_highpass_sos(low_hz, sample_rate_hz);
    for (const auto& q : butter_lowpass_sos(high_hz, sample_rate_hz)) sos.push_back(q);
    return sos;
}

// Zero-phase band-pass over all channels; ground truth passes through
// unchanged. Output length equals input length.
inline Recording bandpass(const Recording& rec, double low_hz, double high_hz) {
    const auto sos = bandpass_sos(low_hz, high_hz, rec.sample_rate_hz);
    Recording out = rec;
    for (auto& ch : out.samples) ch = filtfilt(ch, sos);
    return out;
}

} // namespace evspd
