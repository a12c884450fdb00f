#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bdt/detector.hpp"
#include "bdt/synth.hpp"
#include "bdt/tensor_io.hpp"
#include "oracles.hpp"

using namespace bdt;

namespace {

struct Trained {
    SyntheticCampaign campaign;
    std::unique_ptr<SyntheticOracle> oracle;
    DetectorBundle bundle;
    std::uint64_t trainingQueries = 0;
};

std::vector<ImageTensor> images_of(const std::vector<SyntheticSample>& samples, std::optional<bool> poisoned = {}) {
    std::vector<ImageTensor> out;
    for (const auto& s : samples)
        if (!poisoned || s.poisoned == *poisoned) out.push_back(s.image);
    return out;
}

const Trained& center_pixel_run() {
    static const Trained run = [] {
        Trained t;
        SynthConfig config;
        config.cleanPerClass = 2;
        config.poisonedPerClass = 2;
        config.secondValidation = 40;
        config.seed = Seed{17};
        t.campaign = generate_campaign(config);
        t.oracle = std::make_unique<SyntheticOracle>(t.campaign.oracle);
        QueryCounter counter;
        CountingClassifier counting(*t.oracle, counter);
        CachedClassifier cached(counting);
        const ValidationSet vs = make_validation_set(images_of(t.campaign.validation), cached);
        t.bundle = train_detector(vs, PoolConfig::defaults(), counting, TrainOptions{20, kAllMetricsMask, Seed{5}});
        t.trainingQueries = counter.total();
        return t;
    }();
    return run;
}

}  // namespace

TEST_CASE("trained bundle structure and query budget") {
    const Trained& t = center_pixel_run();
    CHECK(t.trainingQueries <= 30 * (1 + 48 * 30));
    CHECK(t.trainingQueries == 30 + 30 * 48 * 30);
    CHECK(t.bundle.trainingProfiles.size() == 30);
    CHECK(t.bundle.metaDetector.points().size() == 30);
    CHECK(t.bundle.metaDetector.k() == 20);
    for (const auto& d : t.bundle.metricDetectors) CHECK(d->points().size() == 30);
    CHECK(t.bundle.threshold == 0.0);
    CHECK_FALSE(t.bundle.sweepH.has_value());
}

TEST_CASE("training meta confidences are mostly inliers") {
    auto meta = center_pixel_run().bundle.training_meta_confidences();
    std::sort(meta.begin(), meta.end());
    CHECK(meta[meta.size() / 2] > 0.0);
}

TEST_CASE("detect on synthetic inputs") {
    const Trained& t = center_pixel_run();
    SyntheticOracle f(t.campaign.oracle);
    const ThresholdSweep sweep = sweep_threshold(t.bundle, images_of(t.campaign.secondValidation),
                                                 default_sweep_grid(), 0.05, f);
    int flaggedPoisoned = 0, passedClean = 0, poisoned = 0, clean = 0;
    for (const auto& s : t.campaign.test) {
        const Decision d = detect(t.bundle, s.image, f);
        CHECK(d.flaggedPoisoned == (d.metaConfidence < 0.0));
        CHECK(d.classifierLabel == f.classify(s.image));
        if (s.poisoned) {
            ++poisoned;
            flaggedPoisoned += d.flaggedPoisoned;
        } else {
            ++clean;
            passedClean += d.metaConfidence >= sweep.chosenThreshold;
        }
    }
    CHECK(flaggedPoisoned >= 0.95 * poisoned);
    // Classes with one or two validation samples look novel at threshold 0,
    // so the clean pass rate is checked at the swept threshold.
    CHECK(passedClean >= 0.90 * clean);
}

TEST_CASE("a validation sample reproduces its training profile") {
    const Trained& t = center_pixel_run();
    SyntheticOracle f(t.campaign.oracle);
    const Decision d = detect(t.bundle, t.bundle.valset.samples[4], f);
    CHECK(d.profile == t.bundle.trainingProfiles[4]);
    CHECK(d.perMetricConfidence == t.bundle.trainingScores[4]);
    CHECK(d.metaConfidence == t.bundle.training_meta_confidences()[4]);
}

TEST_CASE("decision JSON line") {
    const Trained& t = center_pixel_run();
    SyntheticOracle f(t.campaign.oracle);
    const Decision d = detect(t.bundle, t.campaign.test.back().image, f);
    const auto j = decision_to_json(12, d);
    CHECK(j.at("id") == 12);
    CHECK(j.at("scores").size() == 5);
    CHECK(j.at("flag").get<bool>() == d.flaggedPoisoned);
    CHECK(j.at("label") == d.classifierLabel.value);
    CHECK(j.at("meta_confidence").get<double>() == d.metaConfidence);
}

TEST_CASE("bundle serialization fidelity") {
    const Trained& t = center_pixel_run();
    const auto dir = std::filesystem::temp_directory_path() / "bdt_bundle_test";
    std::filesystem::create_directories(dir);
    DetectorBundle withFiles = t.bundle;
    for (std::size_t i = 0; i < withFiles.valset.size(); ++i) {
        const auto path = dir / ("v" + std::to_string(i) + ".bdt");
        write_bdt1(path, withFiles.valset.samples[i]);
        withFiles.validationFiles.push_back(path);
    }
    SUBCASE("inline samples") {
        t.bundle.save(dir / "inline.json");
        const DetectorBundle back = DetectorBundle::load(dir / "inline.json");
        CHECK(back.to_json().dump() == t.bundle.to_json().dump());
        SyntheticOracle f(t.campaign.oracle);
        for (int i = 0; i < 4; ++i) {
            const auto& z = t.campaign.test[static_cast<std::size_t>(i * 37 % t.campaign.test.size())].image;
            CHECK(decision_to_json(0, detect(back, z, f)) == decision_to_json(0, detect(t.bundle, z, f)));
        }
    }
    SUBCASE("file references") {
        withFiles.save(dir / "files.json");
        const auto j = nlohmann::json::parse(std::ifstream(dir / "files.json"));
        CHECK(j.dump().find("\"data\"") == std::string::npos);
        const DetectorBundle back = DetectorBundle::load(dir / "files.json");
        CHECK(back.valset.samples == t.bundle.valset.samples);
        ImageTensor changed = t.bundle.valset.samples[0];
        changed.at(0, 0) = 0.5f;
        write_bdt1(dir / "v0.bdt", changed);
        CHECK_THROWS_AS(DetectorBundle::load(dir / "files.json"), DataError);
    }
    CHECK_THROWS_AS(DetectorBundle::load(dir / "absent.json"), DataError);
}

TEST_CASE("training is deterministic and honors the metric subset") {
    SynthConfig config;
    config.validation = 8;
    config.seed = Seed{2};
    const SyntheticCampaign c = generate_campaign(config);
    SyntheticOracle f(c.oracle);
    const ValidationSet vs = make_validation_set(images_of(c.validation), f);
    TrainOptions options{20, mask_from_string("r,w"), Seed{9}};
    const DetectorBundle a = train_detector(vs, PoolConfig::defaults(), f, options);
    const DetectorBundle b = train_detector(vs, PoolConfig::defaults(), f, options);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK(a.metaDetector.dimension() == 2);
    CHECK(a.metaDetector.k() == 7);
    CHECK_FALSE(a.metricDetectors[4].has_value());

    options.mask = kAllMetricsMask;
    options.excludeSelf = true;
    const DetectorBundle ex = train_detector(vs, PoolConfig::defaults(), f, options);
    CHECK(ex.trainingProfiles[0].n == 7);
    CHECK(ex.options.excludeSelf);
}

TEST_CASE("threshold sweep") {
    const Trained& t = center_pixel_run();
    SyntheticOracle f(t.campaign.oracle);
    const auto second = images_of(t.campaign.secondValidation);
    const auto grid = default_sweep_grid();
    CHECK(grid.size() == 21);
    CHECK(grid.back() == 5.0);
    const ThresholdSweep sweep = sweep_threshold(t.bundle, second, grid, 0.05, f);
    CHECK(sweep.rows.size() == grid.size());
    CHECK(sweep.rows[0].threshold == sweep.mu);
    for (std::size_t i = 1; i < sweep.rows.size(); ++i) CHECK(sweep.rows[i].fpr <= sweep.rows[i - 1].fpr);
    if (!sweep.warning) {
        CHECK(sweep.rows[sweep.chosenIndex].fpr <= 0.05);
        for (std::size_t i = 0; i < sweep.chosenIndex; ++i) CHECK(sweep.rows[i].fpr > 0.05);
    }
    CHECK(sweep.chosenThreshold == sweep.rows[sweep.chosenIndex].threshold);
    const auto j = sweep.to_json();
    CHECK(j.at("rows").size() == grid.size());
}

TEST_CASE("sweep edge cases") {
    const Trained& t = center_pixel_run();
    const std::vector<double> clean = {0.4, 0.3, -100.0, 0.2};
    const std::vector<double> single = {0.0};
    const ThresholdSweep s = sweep_threshold(t.bundle, clean, single, 0.0);
    CHECK(s.chosenH == 0.0);
    CHECK(s.warning.has_value());
    const std::vector<double> grid = {0.0, 1.0};
    CHECK_THROWS_AS(sweep_threshold(t.bundle, std::vector<double>{}, grid, 0.05), InvalidArgument);
    const std::vector<double> unsorted = {1.0, 0.5};
    CHECK_THROWS_AS(sweep_threshold(t.bundle, clean, unsorted, 0.05), InvalidArgument);

    // Identical validation samples give identical meta confidences.
    SyntheticOracle f(t.campaign.oracle);
    const ValidationSet same = make_validation_set(std::vector<ImageTensor>(4, t.bundle.valset.samples[0]), f);
    const DetectorBundle flat = train_detector(same, PoolConfig::defaults(), f);
    CHECK_THROWS_AS(sweep_threshold(flat, clean, grid, 0.05), DegenerateSpreadError);
}

TEST_CASE("training guards") {
    const Trained& t = center_pixel_run();
    SyntheticOracle f(t.campaign.oracle);
    const ValidationSet one = make_validation_set({t.bundle.valset.samples[0]}, f);
    CHECK_THROWS_AS(train_detector(one, PoolConfig::defaults(), f), InvalidTrainingSet);
}
