#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace evspd {

// Multi-channel sampled recording in normalized units, with optional
// per-channel ground-truth spike onset times (seconds).
struct Recording {
    double sample_rate_hz = 0.0;
    std::vector<std::vector<double>> samples;      // [channel][sample]
    std::vector<std::vector<double>> ground_truth; // empty => absent

    std::size_t channels() const { return samples.size(); }
    std::size_t n_samples() const { return samples.empty() ? 0 : samples[0].size(); }
    double duration_s() const {
        return sample_rate_hz > 0 ? static_cast<double>(n_samples()) / sample_rate_hz : 0.0;
    }
    bool has_ground_truth() const { return !ground_truth.empty(); }

    void validate() const {
        if (sample_rate_hz <= 0) throw std::invalid_argument("Recording: sample_rate_hz must be positive");
        for (const auto& ch : samples)
            if (ch.size() != n_samples())
                throw std::invalid_argument("Recording: unequal channel lengths");
        if (has_ground_truth()) {
            if (ground_truth.size() != channels())
                throw std::invalid_argument("Recording: ground_truth channel count mismatch");
            const double dur = duration_s();
            for (const auto& ch : ground_truth)
                for (double t : ch)
                    if (t < 0 || t >= dur)
                        throw std::invalid_argument("Recording: ground-truth time outside [0, duration)");
        }
    }
};

enum class SampleEncoding { Int16Le, Float32Le };

inline std::string to_string(SampleEncoding e) {
    return e == SampleEncoding::Int16Le ? "int16_le" : "f32_le";
}

inline SampleEncoding sample_encoding_from_string(const std::string& s) {
    if (s == "int16_le") return SampleEncoding::Int16Le;
    if (s == "f32_le") return SampleEncoding::Float32Le;
    throw std::invalid_argument("unknown sample encoding: " + s);
}

inline std::size_t bytes_per_sample(SampleEncoding e) {
    return e == SampleEncoding::Int16Le ? 2 : 4;
}

// Load a headerless interleaved raw file. Samples are stored
// sample-major on disk (frame = one sample per channel); the result is
// channel-major. Stored values are multiplied by `gain`.
inline Recording load_raw(const std::filesystem::path& path, double sample_rate_hz,
                          std::size_t channels, SampleEncoding encoding, double gain = 1.0) {
    if (sample_rate_hz <= 0) throw std::invalid_argument("load_raw: sample_rate_hz must be positive");
    if (channels == 0) throw std::invalid_argument("load_raw: channels must be positive");
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("load_raw: cannot open " + path.string());
    const std::size_t file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    const std::size_t frame_bytes = channels * bytes_per_sample(encoding);
    if (file_size % frame_bytes != 0)
        throw std::runtime_error("load_raw: truncated file " + path.string() + " (" +
                                 std::to_string(file_size) + " bytes is not a multiple of " +
                                 std::to_string(frame_bytes) + ")");
    const std::size_t n_frames = file_size / frame_bytes;

    std::vector<char> buf(file_size);
    in.read(buf.data(), static_cast<std::streamsize>(file_size));
    if (!in) throw std::runtime_error("load_raw: read failed for " + path.string());

    Recording rec;
    rec.sample_rate_hz = sample_rate_hz;
    rec.samples.assign(channels, std::vector<double>(n_frames));
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
    for (std::size_t f = 0; f < n_frames; ++f) {
        for (std::size_t c = 0; c < channels; ++c) {
            double v;
            if (encoding == SampleEncoding::Int16Le) {
                std::int16_t raw = static_cast<std::int16_t>(p[0] | (p[1] << 8));
                v = raw;
                p += 2;
            } else {
                std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                     (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
                float fv;
                std::memcpy(&fv, &bits, 4);
                v = fv;
                p += 4;
            }
            rec.samples[c][f] = v * gain;
        }
    }
    return rec;
}

// Inverse of load_raw: stored value = sample / gain, rounded for int16.
inline void save_raw(const Recording& rec, const std::filesystem::path& path,
                     SampleEncoding encoding, double gain = 1.0) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_raw: cannot open " + path.string());
    const std::size_t n = rec.n_samples();
    for (std::size_t f = 0; f < n; ++f) {
        for (std::size_t c = 0; c < rec.channels(); ++c) {
            const double v = rec.samples[c][f] / gain;
            if (encoding == SampleEncoding::Int16Le) {
                const long r = std::lround(v);
                const std::int16_t raw = static_cast<std::int16_t>(
                    r < -32768 ? -32768 : (r > 32767 ? 32767 : r));
                const unsigned char b[2] = {static_cast<unsigned char>(raw & 0xff),
                                            static_cast<unsigned char>((raw >> 8) & 0xff)};
                out.write(reinterpret_cast<const char*>(b), 2);
            } else {
                const float fv = static_cast<float>(v);
                std::uint32_t bits;
                std::memcpy(&bits, &fv, 4);
                const unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                                            static_cast<unsigned char>((bits >> 8) & 0xff),
                                            static_cast<unsigned char>((bits >> 16) & 0xff),
                                            static_cast<unsigned char>((bits >> 24) & 0xff)};
                out.write(reinterpret_cast<const char*>(b), 4);
            }
        }
    }
    if (!out) throw std::runtime_error("save_raw: write failed for " + path.string());
}

// Sidecar metadata for a raw file.
struct RawSidecar {
    double sample_rate_hz = 0.0;
    std::size_t channels = 0;
    SampleEncoding encoding = SampleEncoding::Int16Le;
    double gain = 1.0;
};

inline void write_sidecar(const std::filesystem::path& path, const RawSidecar& meta) {
    nlohmann::ordered_json j;
    j["sample_rate_hz"] = meta.sample_rate_hz;
    j["channels"] = meta.channels;
    j["encoding"] = to_string(meta.encoding);
    j["gain"] = meta.gain;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_sidecar: cannot open " + path.string());
    out << j.dump(2) << '\n';
}

inline RawSidecar read_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_sidecar: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    RawSidecar meta;
    meta.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    meta.channels = j.at("channels").get<std::size_t>();
    meta.encoding = sample_encoding_from_string(j.at("encoding").get<std::string>());
    meta.gain = j.at("gain").get<double>();
    return meta;
}

// Ground truth CSV: header "channel,time_s", one row per spike onset.
inline void write_ground_truth_csv(const std::filesystem::path& path,
                                   const std::vector<std::vector<double>>& truth) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_ground_truth_csv: cannot open " + path.string());
    out << "channel,time_s\n";
    char buf[64];
    for (std::size_t c = 0; c < truth.size(); ++c)
        for (double t : truth[c]) {
            std::snprintf(buf, sizeof buf, "%zu,%.9f\n", c, t);
            out << buf;
        }
}

inline std::vector<std::vector<double>> read_ground_truth_csv(const std::filesystem::path& path,
                                                              std::size_t n_channels) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_ground_truth_csv: cannot open " + path.string());
    std::vector<std::vector<double>> truth(n_channels);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::size_t ch;
        char comma;
        double t;
        if (!(ss >> ch >> comma >> t) || comma != ',')
            throw std::runtime_error("read_ground_truth_csv: malformed row: " + line);
        if (ch >= n_channels)
            throw std::runtime_error("read_ground_truth_csv: channel out of range: " + line);
        truth[ch].push_back(t);
    }
    return truth;
}

// Convenience: write <base>.raw, <base>.json and (when present)
// <base>.truth.csv; load them back as one Recording.
inline void save_recording(const Recording& rec, const std::filesystem::path& base,
                           SampleEncoding encoding = SampleEncoding::Float32Le, double gain = 1.0) {
    save_raw(rec, base.string() + ".raw", encoding, gain);
    write_sidecar(base.string() + ".json",
                  RawSidecar{rec.sample_rate_hz, rec.channels(), encoding, gain});
    if (rec.has_ground_truth())
        write_ground_truth_csv(base.string() + ".truth.csv", rec.ground_truth);
}

inline Recording load_recording(const std::filesystem::path& base) {
    const RawSidecar meta = read_sidecar(base.string() + ".json");
    Recording rec = load_raw(base.string() + ".raw", meta.sample_rate_hz, meta.channels,
                             meta.encoding, meta.gain);
    const std::filesystem::path truth_path = base.string() + ".truth.csv";
    if (std::filesystem::exists(truth_path))
        rec.ground_truth = read_ground_truth_csv(truth_path, rec.channels());
    return rec;
}

} // namespace evspd
