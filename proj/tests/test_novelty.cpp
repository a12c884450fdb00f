#include <doctest.h>

#include <cmath>

#include "bdt/novelty.hpp"
#include "oracles.hpp"

using namespace bdt;
using oracle::Points;

TEST_CASE("hand-computed k-distances") {
    const LofModel m = LofModel::fit({{0, 0}, {0, 1}, {1, 0}, {10, 10}}, 2);
    CHECK(m.k() == 2);
    CHECK(m.k_distances()[0] == doctest::Approx(1.0));
    CHECK(m.k_distances()[1] == doctest::Approx(std::sqrt(2.0)));
    CHECK(m.k_distances()[2] == doctest::Approx(std::sqrt(2.0)));
    CHECK(m.k_distances()[3] == doctest::Approx(std::sqrt(181.0)));
    for (double lrd : m.lrd()) CHECK(lrd > 0.0);
    // A far query is an outlier relative to the tight cluster.
    CHECK(m.score(std::vector<double>{100, -100}) < 0.0);
}

TEST_CASE("duplicates stay finite") {
    const LofModel m = LofModel::fit(std::vector<Point>(30, Point{0.5, 0.5}), 20);
    for (double lrd : m.lrd()) CHECK(lrd == doctest::Approx(1e10));
    CHECK(m.local_outlier_factor(std::vector<double>{0.5, 0.5}) == doctest::Approx(1.0));
    CHECK(m.score(std::vector<double>{0.5, 0.5}) == doctest::Approx(0.5));
}

TEST_CASE("query on a homogeneous cluster") {
    std::vector<Point> pts(6, Point{1.0});
    pts.push_back({5.0});
    const LofModel m = LofModel::fit(pts, 3);
    CHECK(m.score(std::vector<double>{1.0}) == doctest::Approx(0.5));
}

TEST_CASE("k clipping and guards") {
    CHECK(LofModel::fit({{0}, {1}, {2}, {3}, {4}}, 20).k() == 4);
    CHECK_THROWS_AS(LofModel::fit({{0}}, 20), InvalidTrainingSet);
    CHECK_THROWS_AS(LofModel::fit({{0}, {1, 2}}, 20), ShapeError);
    CHECK_THROWS_AS(LofModel::fit({{0}, {1}}, 0), InvalidArgument);
    const LofModel m = LofModel::fit({{0}, {1}}, 1);
    CHECK_THROWS_AS(m.score(std::vector<double>{0, 0}), ShapeError);
}

TEST_CASE("ties at the k-distance join the neighborhood") {
    // From the query at 0, two points tie at distance 1 for k = 1.
    const Points train = {{-1}, {1}, {5}};
    const LofModel m = LofModel::fit(train, 1);
    CHECK(m.local_outlier_factor(std::vector<double>{0}) == doctest::Approx(oracle::lof(train, 1, {0})).epsilon(1e-12));
}

TEST_CASE("LOF matches the naive oracle") {
    NoiseStream rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform(0, 30));
        const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform(0, 5));
        const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform(0, double(std::min<std::size_t>(20, n - 1))));
        Points train(n, std::vector<double>(d));
        for (auto& p : train)
            for (auto& v : p) v = trial % 3 == 0 ? std::round(rng.uniform(0, 4)) / 4 : rng.uniform(-1, 1);
        const LofModel m = LofModel::fit(train, k);
        for (int q = 0; q < 3; ++q) {
            std::vector<double> query = q == 0 ? train[0] : std::vector<double>(d);
            if (q > 0)
                for (auto& v : query) v = rng.uniform(-2, 2);
            CHECK(std::abs(m.score(query) - oracle::lof_confidence(train, k, query)) <= 1e-9);
        }
    }
}

TEST_CASE("model JSON round trip") {
    const LofModel m = LofModel::fit({{0, 0}, {0, 1}, {1, 0}, {10, 10}, {3, 3}}, 3);
    const LofModel back = LofModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    CHECK(back == m);
    auto j = m.to_json();
    j["k"] = 7;
    CHECK_THROWS_AS(LofModel::from_json(j), DataError);
}

TEST_CASE("metric masks") {
    CHECK(mask_to_string(kAllMetricsMask) == "r,w,s,is,inv");
    const MetricMask rw = mask_from_string("r, w");
    CHECK(enabled_count(rw) == 2);
    CHECK(mask_to_string(rw) == "r,w");
    CHECK_THROWS_AS(mask_from_string(""), InvalidArgument);
    CHECK_THROWS_AS(mask_from_string("r,q"), InvalidArgument);
}

namespace {

std::vector<FiveMetricProfile> random_profiles(std::size_t count, std::uint64_t seed) {
    NoiseStream rng(seed);
    std::vector<FiveMetricProfile> out(count);
    for (auto& p : out) {
        p.n = 30;
        for (Metric m : kAllMetrics) {
            p[m].resize(16);
            for (double& v : p[m]) v = std::round(rng.uniform(0, 30)) / 30;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("metric detectors") {
    const auto profiles = random_profiles(30, 1);
    const MetricDetectors all = fit_metric_detectors(profiles, kAllMetricsMask);
    for (const auto& d : all) {
        REQUIRE(d.has_value());
        CHECK(d->points().size() == 30);
        CHECK(d->k() == 20);
        CHECK(d->dimension() == 16);
    }

    auto perturbed = profiles;
    for (auto& p : perturbed) p.inv[0] = 1.0 - p.inv[0];
    const MetricDetectors other = fit_metric_detectors(perturbed, kAllMetricsMask);
    for (Metric m : kAllMetrics) {
        const auto slot = static_cast<std::size_t>(m);
        CHECK((*all[slot] == *other[slot]) == (m != Metric::NoiseInvariance));
    }

    const MetricDetectors rw = fit_metric_detectors(profiles, mask_from_string("r,w"));
    CHECK(rw[0].has_value());
    CHECK(rw[1].has_value());
    CHECK_FALSE(rw[2].has_value());
    CHECK_FALSE(rw[4].has_value());
    const ScoreVector s = score_profile(rw, profiles[0]);
    CHECK(s[0].has_value());
    CHECK_FALSE(s[3].has_value());
    CHECK(meta_input(s).size() == 2);

    std::vector<ScoreVector> scores;
    for (const auto& p : profiles) scores.push_back(score_profile(all, p));
    const LofModel meta = fit_meta_detector(scores);
    CHECK(meta.points().size() == 30);
    CHECK(meta.k() == 20);
    CHECK(meta.dimension() == 5);
    std::vector<ScoreVector> rwScores;
    for (const auto& p : profiles) rwScores.push_back(score_profile(rw, p));
    CHECK(fit_meta_detector(rwScores).dimension() == 2);
}
