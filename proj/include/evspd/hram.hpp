#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "evspd/aer.hpp"
#include "evspd/detector.hpp"
#include "evspd/parallel.hpp"
#include "evspd/rng.hpp"

namespace evspd {

// Per-channel pull-up bias (V_BP) calibration table: four jump-gain
// multipliers selected by a 2-bit code. Code 0 is the strongest bias
// (largest voltage jump, enhances firing), code 3 the weakest.
struct VbpTable {
    std::array<double, 4> multiplier = {1.25, 1.0, 0.85, 0.7};

    void validate() const {
        for (std::size_t i = 1; i < multiplier.size(); ++i)
            if (multiplier[i] >= multiplier[i - 1])
                throw std::invalid_argument("VbpTable: multipliers must be strictly decreasing");
        for (double m : multiplier)
            if (m <= 0) throw std::invalid_argument("VbpTable: multipliers must be positive");
    }
};

inline constexpr std::uint8_t kNominalVbpCode = 1; // multiplier 1.0 in the default table

// Analog non-idealities of the bitcell array. Voltage is normalized so
// one nominal event jump equals 1.0 and the inverter trip point is
// expressed in event counts.
struct MismatchSpec {
    double jump_cv = 0.1;        // coefficient of variation of the per-event voltage jump
    double trip_cv = 0.05;       // CV of the inverter trip point
    double flip_prob_pos = 0.017; // probability a should-be-1 latch stores 0
    double flip_prob_neg = 0.03;  // probability a should-be-0 latch stores 1
    std::uint64_t rng_seed = 0;

    static MismatchSpec none() { return {0.0, 0.0, 0.0, 0.0, 0}; }

    bool has_mismatch() const { return jump_cv != 0.0 || trip_cv != 0.0; }
    bool has_flips() const { return flip_prob_pos != 0.0 || flip_prob_neg != 0.0; }

    void validate() const {
        if (jump_cv < 0 || trip_cv < 0)
            throw std::invalid_argument("MismatchSpec: CVs must be >= 0");
        for (double p : {flip_prob_pos, flip_prob_neg})
            if (p < 0 || p > 1) throw std::invalid_argument("MismatchSpec: probabilities must be in [0,1]");
    }
};

inline void to_json(nlohmann::ordered_json& j, const MismatchSpec& m) {
    j = {{"jump_cv", m.jump_cv}, {"trip_cv", m.trip_cv}, {"flip_prob_pos", m.flip_prob_pos},
         {"flip_prob_neg", m.flip_prob_neg}, {"rng_seed", m.rng_seed}};
}

inline MismatchSpec mismatch_from_json(const nlohmann::json& j) {
    MismatchSpec m;
    for (const auto& [key, value] : j.items()) {
        if (key == "jump_cv") m.jump_cv = value.get<double>();
        else if (key == "trip_cv") m.trip_cv = value.get<double>();
        else if (key == "flip_prob_pos") m.flip_prob_pos = value.get<double>();
        else if (key == "flip_prob_neg") m.flip_prob_neg = value.get<double>();
        else if (key == "rng_seed") m.rng_seed = value.get<std::uint64_t>();
        else throw std::invalid_argument("MismatchSpec: unknown key " + key);
    }
    m.validate();
    return m;
}

inline MismatchSpec load_mismatch(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mismatch file " + path);
    return mismatch_from_json(nlohmann::json::parse(in));
}

// Full behavioral configuration of the macro.
struct HramConfig {
    EvSpdParams params;             // thr1 doubles as the nominal trip point
    MismatchSpec mismatch;          // paper-informed defaults; MismatchSpec::none() for ideal
    VbpTable vbp;
    double dropped_fraction = 0.0064; // reset/threshold/readout share of the period (events dropped)
    double leak_tau_s = 0.0;          // eDRAM leak time constant; 0 disables

    // Ideal instance: reduces exactly to the reference detector.
    static HramConfig ideal(const EvSpdParams& p) {
        HramConfig c;
        c.params = p;
        c.mismatch = MismatchSpec::none();
        c.dropped_fraction = 0.0;
        return c;
    }

    void validate() const {
        params.validate();
        mismatch.validate();
        vbp.validate();
        if (dropped_fraction < 0 || dropped_fraction >= 1)
            throw std::invalid_argument("HramConfig: dropped_fraction must be in [0,1)");
        if (leak_tau_s < 0) throw std::invalid_argument("HramConfig: leak_tau_s must be >= 0");
    }
};

// One eDRAM-SRAM hybrid bitcell: capacitor voltage, per-cell jump gain
// and inverter trip point (mismatch draws), and the latched bit.
struct BitcellModel {
    double v_cap = 0.0;
    double jump_gain = 1.0;
    double trip_point = 3.0;
    std::uint8_t stored_bit = 0;
};

// Behavioral state of one channel: n_s bitcells organized as a circular
// buffer, a rotating write pointer, the ripple-counter value and the
// 2-bit V_BP code.
struct ChannelHram {
    std::vector<BitcellModel> cells;
    int pointer = 0;
    std::uint8_t vbp_code = kNominalVbpCode;
    int counter = 0;
    std::mt19937_64 flip_rng;
};

// Draw a channel's bitcells. Mismatch is a property of the physical
// channel, so the draw depends only on (rng_seed, channel_index) and is
// reproducible across runs, codes and stimuli.
inline ChannelHram make_channel_hram(const HramConfig& cfg, std::size_t channel_index) {
    ChannelHram ch;
    ch.cells.assign(static_cast<std::size_t>(cfg.params.n_s), BitcellModel{});
    auto rng = make_rng(cfg.mismatch.rng_seed, channel_index, 0xce11);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& cell : ch.cells) {
        cell.trip_point = cfg.params.thr1;
        if (cfg.mismatch.has_mismatch()) {
            cell.jump_gain = std::max(0.05, 1.0 + cfg.mismatch.jump_cv * unit(rng));
            cell.trip_point = std::max(1e-6, cfg.params.thr1 * (1.0 + cfg.mismatch.trip_cv * unit(rng)));
        }
    }
    ch.flip_rng = make_rng(cfg.mismatch.rng_seed, channel_index, 0xf11b);
    return ch;
}

// One detection period: reset the selected bitcell, accumulate the
// window's events (polarity ignored), threshold into the latch, read out
// the ripple counter, advance the pointer. Events inside the initial
// non-accumulation fraction of the period are dropped. Returns the
// counter value for this period.
template <typename EventIt>
inline int step_cycle(ChannelHram& ch, EventIt first, EventIt last, std::uint64_t window_start_us,
                      const HramConfig& cfg) {
    BitcellModel& cell = ch.cells[static_cast<std::size_t>(ch.pointer)];
    cell.v_cap = 0.0;

    const double gain = cell.jump_gain * cfg.vbp.multiplier[ch.vbp_code];
    const double dead_us = cfg.dropped_fraction * static_cast<double>(cfg.params.t_s_us);
    const double leak_tau_us = cfg.leak_tau_s * 1e6;
    double prev_t_us = dead_us;
    for (EventIt it = first; it != last; ++it) {
        const std::uint64_t t = it->t_us;
        if (t < window_start_us || t >= window_start_us + cfg.params.t_s_us)
            throw std::invalid_argument("step_cycle: event outside detection period");
        const double offset = static_cast<double>(t - window_start_us);
        if (offset < dead_us) continue;
        if (leak_tau_us > 0) {
            cell.v_cap *= std::exp(-(offset - prev_t_us) / leak_tau_us);
            prev_t_us = offset;
        }
        cell.v_cap += gain;
    }
    if (leak_tau_us > 0)
        cell.v_cap *= std::exp(-(static_cast<double>(cfg.params.t_s_us) - prev_t_us) / leak_tau_us);

    std::uint8_t bit = cell.v_cap > cell.trip_point ? 1 : 0;
    if (cfg.mismatch.has_flips()) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double draw = u(ch.flip_rng);
        if (bit == 1 && draw < cfg.mismatch.flip_prob_pos) bit = 0;
        else if (bit == 0 && draw < cfg.mismatch.flip_prob_neg) bit = 1;
    }
    ch.counter += bit - cell.stored_bit;
    cell.stored_bit = bit;
    ch.pointer = (ch.pointer + 1) % cfg.params.n_s;
    return ch.counter;
}

struct MacroResult {
    std::vector<std::vector<std::uint32_t>> detections;   // [channel] spike times, us
    std::vector<std::vector<std::uint8_t>> counter_traces; // [channel][bin], when recorded
};

// Run one channel's event list through the macro model, applying the
// digital threshold thr2 and the refractory period to the counter trace.
template <typename Event>
inline std::vector<std::uint32_t> run_channel_hram(ChannelHram& ch, const std::vector<Event>& events,
                                                   const HramConfig& cfg, std::uint64_t duration_us,
                                                   std::vector<std::uint8_t>* trace = nullptr) {
    const EvSpdParams& p = cfg.params;
    const std::size_t n_bins = bin_count_for(duration_us, p);
    if (trace) trace->assign(n_bins, 0);
    std::vector<std::uint32_t> spikes;
    std::size_t ev = 0;
    std::uint64_t next_allowed = 0;
    for (std::size_t i = 0; i < n_bins; ++i) {
        const std::uint64_t start = static_cast<std::uint64_t>(i) * p.t_s_us;
        const std::uint64_t end = start + p.t_s_us;
        std::size_t ev_end = ev;
        while (ev_end < events.size() && events[ev_end].t_us < end) ++ev_end;
        const int counter = step_cycle(ch, events.begin() + static_cast<std::ptrdiff_t>(ev),
                                       events.begin() + static_cast<std::ptrdiff_t>(ev_end), start, cfg);
        ev = ev_end;
        if (trace) (*trace)[i] = static_cast<std::uint8_t>(counter);
        if (counter > p.thr2 && end >= next_allowed) {
            spikes.push_back(static_cast<std::uint32_t>(end));
            next_allowed = end + p.refractory_us;
        }
    }
    return spikes;
}

// Behavioral run of the 1024-channel macro: route events by address (top
// three bits select the bank), run every channel's detection cycles, and
// threshold the counter traces. With mismatch, flips, leakage and event
// dropping disabled this is bit-identical to the reference detector.
inline MacroResult run_macro(const std::vector<AerEvent>& events, std::size_t n_channels,
                             const HramConfig& cfg, const std::vector<std::uint8_t>& vbp_codes = {},
                             std::uint64_t duration_us = 0, unsigned n_threads = 1,
                             bool record_counters = false) {
    cfg.validate();
    if (n_channels > kMaxChannels)
        throw std::invalid_argument("run_macro: more than 1024 channels");
    if (!vbp_codes.empty() && vbp_codes.size() != n_channels)
        throw std::invalid_argument("run_macro: one V_BP code per channel required");
    for (std::uint8_t code : vbp_codes)
        if (code > 3) throw std::invalid_argument("run_macro: V_BP code out of range");

    auto per_channel = demux_events(events, n_channels);
    if (duration_us == 0 && !events.empty())
        duration_us = static_cast<std::uint64_t>(events.back().t_us) + 1;

    MacroResult result;
    result.detections.assign(n_channels, {});
    if (record_counters) result.counter_traces.assign(n_channels, {});
    if (duration_us == 0) return result;

    parallel_for(n_channels, n_threads, [&](std::size_t c) {
        ChannelHram ch = make_channel_hram(cfg, c);
        if (!vbp_codes.empty()) ch.vbp_code = vbp_codes[c];
        result.detections[c] = run_channel_hram(ch, per_channel[c], cfg, duration_us,
                                                record_counters ? &result.counter_traces[c] : nullptr);
    });
    return result;
}

} // namespace evspd
