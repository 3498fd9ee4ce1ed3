#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "evspd/recording.hpp"

#include "helpers.hpp"

using namespace evspd;

TEST_CASE("load_raw deinterleaves int16 frames") {
    testutil::TempDir dir("raw");
    const auto path = dir.path / "two_ch.raw";
    {
        std::ofstream out(path, std::ios::binary);
        for (std::int16_t v : {1, 2, 3, 4, 5, 6}) {
            char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
            out.write(b, 2);
        }
    }
    auto rec = load_raw(path, 24000, 2, SampleEncoding::Int16Le, 0.5);
    REQUIRE(rec.channels() == 2);
    REQUIRE(rec.samples[0] == std::vector<double>{0.5, 1.5, 2.5});
    REQUIRE(rec.samples[1] == std::vector<double>{1.0, 2.0, 3.0});
    REQUIRE_FALSE(rec.has_ground_truth());
}

TEST_CASE("load_raw edge cases") {
    testutil::TempDir dir("raw_edge");
    const auto empty = dir.path / "empty.raw";
    std::ofstream(empty, std::ios::binary);
    auto rec = load_raw(empty, 30000, 384, SampleEncoding::Int16Le);
    REQUIRE(rec.channels() == 384);
    REQUIRE(rec.n_samples() == 0);

    const auto truncated = dir.path / "trunc.raw";
    {
        std::ofstream out(truncated, std::ios::binary);
        std::vector<char> bytes(383 * 2, 0);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    REQUIRE_THROWS_AS(load_raw(truncated, 30000, 384, SampleEncoding::Int16Le), std::runtime_error);
}

TEST_CASE("save_raw then load_raw is the identity on sample values") {
    testutil::TempDir dir("raw_rt");
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> val(-32768, 32767);

    Recording rec;
    rec.sample_rate_hz = 30000;
    rec.samples.assign(3, std::vector<double>(257));
    for (auto& ch : rec.samples)
        for (auto& v : ch) v = static_cast<double>(val(rng));

    for (auto enc : {SampleEncoding::Int16Le, SampleEncoding::Float32Le}) {
        const auto path = dir.path / ("rt_" + to_string(enc) + ".raw");
        save_raw(rec, path, enc);
        auto back = load_raw(path, rec.sample_rate_hz, rec.channels(), enc);
        REQUIRE(back.samples == rec.samples);
    }
}

TEST_CASE("sidecar and ground truth round trip") {
    testutil::TempDir dir("sidecar");
    Recording rec;
    rec.sample_rate_hz = 24000;
    rec.samples.assign(2, std::vector<double>(2400, 0.0));
    rec.samples[1][5] = 3.0;
    rec.ground_truth = {{0.0101, 0.0502}, {}};
    rec.validate();

    const auto base = dir.path / "rec";
    save_recording(rec, base);
    auto back = load_recording(base);
    REQUIRE(back.sample_rate_hz == rec.sample_rate_hz);
    REQUIRE(back.channels() == 2);
    REQUIRE(back.samples[1][5] == 3.0);
    REQUIRE(back.has_ground_truth());
    REQUIRE(back.ground_truth[0].size() == 2);
    REQUIRE(back.ground_truth[0][1] == Catch::Approx(0.0502).margin(1e-9));
    REQUIRE(back.ground_truth[1].empty());
}

TEST_CASE("recording validation catches bad invariants") {
    Recording rec;
    rec.sample_rate_hz = 1000;
    rec.samples = {{0, 0, 0}, {0, 0}};
    REQUIRE_THROWS_AS(rec.validate(), std::invalid_argument);

    rec.samples = {{0, 0, 0}, {0, 0, 0}};
    rec.ground_truth = {{0.001}, {0.004}}; // duration is 3 ms
    REQUIRE_THROWS_AS(rec.validate(), std::invalid_argument);

    rec.ground_truth = {{0.001}, {0.002}};
    REQUIRE_NOTHROW(rec.validate());
}
