#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>

#include "evspd/metrics.hpp"

using namespace evspd;

namespace {

// independent maximum-matching oracle (augmenting paths)
std::size_t optimal_matches(const std::vector<std::uint32_t>& truth,
                            const std::vector<std::uint32_t>& detected, std::uint32_t tol) {
    std::vector<std::vector<std::size_t>> adj(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = 0; j < detected.size(); ++j)
            if (std::llabs(static_cast<long long>(truth[i]) - static_cast<long long>(detected[j])) <=
                static_cast<long long>(tol))
                adj[i].push_back(j);
    std::vector<long long> owner(detected.size(), -1);
    std::vector<char> used(detected.size(), 0);
    std::function<bool(std::size_t)> augment = [&](std::size_t i) {
        for (std::size_t j : adj[i]) {
            if (used[j]) continue;
            used[j] = 1;
            if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]))) {
                owner[j] = static_cast<long long>(i);
                return true;
            }
        }
        return false;
    };
    std::size_t count = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        std::fill(used.begin(), used.end(), 0);
        if (augment(i)) ++count;
    }
    return count;
}

} // namespace

TEST_CASE("identical lists match perfectly") {
    std::vector<std::uint32_t> t = {100, 2000, 30000};
    auto m = match_spikes(t, t, 1000);
    REQUIRE(m.tp == 3);
    REQUIRE(m.fp == 0);
    REQUIRE(m.fn == 0);
    REQUIRE(m.pairs.size() == 3);
}

TEST_CASE("a detection within tolerance matches") {
    auto m = match_spikes({10000}, {10900}, 1000);
    REQUIRE(m.tp == 1);
    REQUIRE(m.fp == 0);
    REQUIRE(m.fn == 0);
    auto miss = match_spikes({10000}, {11100}, 1000);
    REQUIRE(miss.tp == 0);
    REQUIRE(miss.fp == 1);
    REQUIRE(miss.fn == 1);
}

TEST_CASE("greedy matching equals the optimal assignment") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::uint32_t> t_dist(0, 50000);
    std::uniform_int_distribution<std::uint32_t> tol_dist(200, 3000);
    std::uniform_int_distribution<std::size_t> n_dist(0, 20);
    for (int trial = 0; trial < 3000; ++trial) {
        std::vector<std::uint32_t> truth(n_dist(rng)), det(n_dist(rng));
        for (auto& v : truth) v = t_dist(rng);
        for (auto& v : det) v = t_dist(rng);
        std::sort(truth.begin(), truth.end());
        std::sort(det.begin(), det.end());
        const auto tol = tol_dist(rng);
        REQUIRE(match_spikes(truth, det, tol).tp == optimal_matches(truth, det, tol));
    }
}

TEST_CASE("swapping lists swaps fp and fn and preserves tp") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::uint32_t> t_dist(0, 100000);
    std::uniform_int_distribution<std::size_t> n_dist(0, 30);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::uint32_t> a(n_dist(rng)), b(n_dist(rng));
        for (auto& v : a) v = t_dist(rng);
        for (auto& v : b) v = t_dist(rng);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        const auto ab = match_spikes(a, b, 1000);
        const auto ba = match_spikes(b, a, 1000);
        REQUIRE(ab.tp == ba.tp);
        REQUIRE(ab.fp == ba.fn);
        REQUIRE(ab.fn == ba.fp);
    }
}

TEST_CASE("matching counts are consistent") {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<std::uint32_t> t_dist(0, 100000);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::uint32_t> truth(10), det(14);
        for (auto& v : truth) v = t_dist(rng);
        for (auto& v : det) v = t_dist(rng);
        std::sort(truth.begin(), truth.end());
        std::sort(det.begin(), det.end());
        const auto m = match_spikes(truth, det, 800);
        REQUIRE(m.tp + m.fn == truth.size());
        REQUIRE(m.tp + m.fp == det.size());
        for (const auto& [t, d] : m.pairs)
            REQUIRE(std::llabs(static_cast<long long>(t) - static_cast<long long>(d)) <= 800);
    }
}

TEST_CASE("metrics follow the paper definitions") {
    MatchResult m;
    m.tp = 9;
    m.fn = 1;
    m.fp = 1;
    auto v = metrics(m);
    REQUIRE(*v.sensitivity == Catch::Approx(0.9));
    REQUIRE(*v.fdr == Catch::Approx(0.1));
    REQUIRE(*v.accuracy == Catch::Approx(9.0 / 11.0));

    MatchResult perfect;
    perfect.tp = 5;
    auto p = metrics(perfect);
    REQUIRE(*p.sensitivity == 1.0);
    REQUIRE(*p.fdr == 0.0);
    REQUIRE(*p.accuracy == 1.0);

    MatchResult degenerate;
    degenerate.fp = 5;
    auto d = metrics(degenerate);
    REQUIRE_FALSE(d.sensitivity.has_value()); // undefined, not silently 0
    REQUIRE(*d.fdr == 1.0);
    REQUIRE(*d.accuracy == 0.0);

    auto none = metrics(MatchResult{});
    REQUIRE_FALSE(none.sensitivity.has_value());
    REQUIRE_FALSE(none.fdr.has_value());
    REQUIRE_FALSE(none.accuracy.has_value());
}

TEST_CASE("accuracy never exceeds sensitivity or precision") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> n(0, 50);
    for (int trial = 0; trial < 2000; ++trial) {
        MatchResult m;
        m.tp = n(rng);
        m.fp = n(rng);
        m.fn = n(rng);
        const auto v = metrics(m);
        if (v.accuracy && v.sensitivity) REQUIRE(*v.accuracy <= *v.sensitivity + 1e-12);
        if (v.accuracy && v.fdr) REQUIRE(*v.accuracy <= 1.0 - *v.fdr + 1e-12);
    }
}

TEST_CASE("greedy equals optimal when truth spikes are separated by > 2 tolerance") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::uint32_t> gap(2001, 6000);
    std::uniform_int_distribution<std::int32_t> jitter(-3000, 3000);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::uint32_t> truth;
        std::uint32_t t = 1000;
        for (int i = 0; i < 15; ++i) {
            t += gap(rng);
            truth.push_back(t);
        }
        std::vector<std::uint32_t> det;
        for (auto v : truth) {
            const auto j = jitter(rng);
            det.push_back(static_cast<std::uint32_t>(std::max<std::int64_t>(0, v + j)));
        }
        std::sort(det.begin(), det.end());
        REQUIRE(match_spikes(truth, det, 1000).tp == optimal_matches(truth, det, 1000));
    }
}

TEST_CASE("firing pattern bins detections and conserves their count") {
    std::vector<std::vector<std::uint32_t>> det = {{5000}, {1000, 7999, 8000}};
    auto fp = firing_pattern(det, 4000, 10000);
    REQUIRE(fp.counts.size() == 2);
    REQUIRE(fp.counts[0].size() == 3); // trailing partial bin included
    REQUIRE(fp.counts[0] == std::vector<std::uint32_t>{0, 1, 0}); // floor(5ms/4ms) = 1
    REQUIRE(fp.counts[1] == std::vector<std::uint32_t>{1, 1, 1});
    std::uint32_t total = 0;
    for (const auto& ch : fp.counts)
        for (auto v : ch) total += v;
    REQUIRE(total == 4);

    auto empty = firing_pattern({{}, {}}, 4000, 10000);
    for (const auto& ch : empty.counts)
        for (auto v : ch) REQUIRE(v == 0);
}

TEST_CASE("pattern MAE matches the formula and is a metric") {
    FiringPattern a, b;
    a.counts.assign(10, std::vector<std::uint32_t>(10, 0));
    b = a;
    REQUIRE(pattern_mae(a, b) == 0.0);
    b.counts[3][4] = 1;
    REQUIRE(pattern_mae(a, b) == Catch::Approx(0.01));

    std::mt19937_64 rng(13);
    std::uniform_int_distribution<std::uint32_t> v(0, 5);
    auto random_pattern = [&] {
        FiringPattern p;
        p.counts.assign(6, std::vector<std::uint32_t>(9));
        for (auto& ch : p.counts)
            for (auto& x : ch) x = v(rng);
        return p;
    };
    for (int trial = 0; trial < 200; ++trial) {
        auto x = random_pattern(), y = random_pattern(), z = random_pattern();
        REQUIRE(pattern_mae(x, y) >= 0.0);
        REQUIRE(pattern_mae(x, y) == Catch::Approx(pattern_mae(y, x)));
        REQUIRE((pattern_mae(x, y) == 0.0) == (x.counts == y.counts));
        REQUIRE(pattern_mae(x, z) <= pattern_mae(x, y) + pattern_mae(y, z) + 1e-12);
    }

    FiringPattern bad;
    bad.counts.assign(3, std::vector<std::uint32_t>(10, 0));
    REQUIRE_THROWS_AS(pattern_mae(a, bad), std::invalid_argument);
}

TEST_CASE("similarity treats one detector as ground truth") {
    std::vector<std::vector<std::uint32_t>> a = {{1000, 5000, 9000}, {2000}};
    auto self = similarity(a, a, 1000);
    REQUIRE(self.mean == 1.0);
    for (double v : self.per_channel) REQUIRE(v == 1.0);

    // every spike shifted by tolerance/2 still matches
    auto shifted = a;
    for (auto& ch : shifted)
        for (auto& t : ch) t += 500;
    REQUIRE(similarity(a, shifted, 1000).mean == 1.0);

    // missing half the spikes halves the sensitivity-limited accuracy
    std::vector<std::vector<std::uint32_t>> half = {{1000, 9000}, {2000}};
    auto sim = similarity({{1000, 5000, 9000, 15000}, {2000}}, half, 1000);
    REQUIRE(sim.per_channel[0] == Catch::Approx(0.5));
    REQUIRE(sim.per_channel[1] == 1.0);

    // both empty counts as perfect agreement
    auto vac = similarity({{}}, {{}}, 1000);
    REQUIRE(vac.mean == 1.0);
}
