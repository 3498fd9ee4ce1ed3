#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace evspd {

// One address-event: microsecond timestamp, 10-bit channel address and
// ON/OFF polarity. The top 3 address bits select the memory bank, the low
// 7 bits the channel within the bank.
struct AerEvent {
    std::uint32_t t_us = 0;
    std::uint16_t address = 0;
    std::int8_t polarity = 1; // +1 or -1
    std::uint8_t reserved = 0;

    friend bool operator==(const AerEvent&, const AerEvent&) = default;
};

inline constexpr std::uint16_t kMaxChannels = 1024;

inline constexpr int bank_of(std::uint16_t address) { return address >> 7; }
inline constexpr int channel_in_bank(std::uint16_t address) { return address & 0x7f; }

// Binary event file: magic "AER1", u32 record count, then 8-byte
// little-endian records (u32 t_us, u16 address, i8 polarity, u8 reserved).
inline void write_aer(const std::filesystem::path& path, const std::vector<AerEvent>& events) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_aer: cannot open " + path.string());
    out.write("AER1", 4);
    auto put_u32 = [&out](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(events.size()));
    for (const auto& e : events) {
        put_u32(e.t_us);
        unsigned char rec[4] = {static_cast<unsigned char>(e.address),
                                static_cast<unsigned char>(e.address >> 8),
                                static_cast<unsigned char>(e.polarity), 0};
        out.write(reinterpret_cast<const char*>(rec), 4);
    }
    if (!out) throw std::runtime_error("write_aer: write failed for " + path.string());
}

inline std::vector<AerEvent> read_aer(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_aer: cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "AER1", 4) != 0)
        throw std::runtime_error("read_aer: bad magic in " + path.string());
    auto get_u32 = [&in]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    std::uint32_t count = get_u32();
    if (!in) throw std::runtime_error("read_aer: truncated header in " + path.string());
    std::vector<AerEvent> events(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char rec[8];
        if (!in.read(reinterpret_cast<char*>(rec), 8))
            throw std::runtime_error("read_aer: truncated record in " + path.string());
        events[i].t_us = static_cast<std::uint32_t>(rec[0]) | (static_cast<std::uint32_t>(rec[1]) << 8) |
                         (static_cast<std::uint32_t>(rec[2]) << 16) | (static_cast<std::uint32_t>(rec[3]) << 24);
        events[i].address = static_cast<std::uint16_t>(rec[4] | (rec[5] << 8));
        events[i].polarity = static_cast<std::int8_t>(rec[6]);
        events[i].reserved = rec[7];
    }
    return events;
}

// Debug mirror of the binary format.
inline void write_aer_csv(const std::filesystem::path& path, const std::vector<AerEvent>& events) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_aer_csv: cannot open " + path.string());
    out << "t_us,address,polarity\n";
    for (const auto& e : events)
        out << e.t_us << ',' << e.address << ',' << int(e.polarity) << '\n';
}

// Split a merged stream into per-channel event lists. Addresses must be
// below n_channels.
inline std::vector<std::vector<AerEvent>> demux_events(const std::vector<AerEvent>& events,
                                                       std::size_t n_channels) {
    std::vector<std::vector<AerEvent>> per_channel(n_channels);
    for (const auto& e : events) {
        if (e.address >= n_channels)
            throw std::out_of_range("demux_events: address " + std::to_string(e.address) +
                                    " out of range for " + std::to_string(n_channels) + " channels");
        per_channel[e.address].push_back(e);
    }
    return per_channel;
}

} // namespace evspd
