#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bdt/manifest.hpp"
#include "bdt/synth.hpp"
#include "bdt/tensor_io.hpp"

using namespace bdt;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream buffer;
        buffer << in.rdbuf();
        files[fs::relative(entry.path(), root).string()] = buffer.str();
    }
    return files;
}

}  // namespace

TEST_CASE("campaign sizes and labels") {
    SynthConfig config;
    const SyntheticCampaign c = generate_campaign(config);
    CHECK(c.test.size() == 400);
    CHECK(std::count_if(c.test.begin(), c.test.end(), [](const auto& s) { return s.poisoned; }) == 200);
    CHECK(c.validation.size() == 30);
    CHECK(c.secondValidation.size() == 100);
    SyntheticOracle f(c.oracle);
    for (const auto& s : c.test) {
        for (float v : s.image.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
        if (s.poisoned) {
            CHECK(s.targetLabel == c.oracle.targetLabel);
            CHECK(f.classify(s.image) == c.oracle.targetLabel);
        } else {
            CHECK(f.classify(s.image) == s.label);
        }
    }
    for (const auto& s : c.validation) CHECK_FALSE(s.poisoned);
}

TEST_CASE("trigger construction") {
    NoiseStream rng(4);
    const ImageTensor clean = make_clean_image(LabelId{5}, 10, Shape{28, 28, 1}, rng);
    SyntheticOracleSpec spec;
    spec.kind = OracleKind::FourCorner;
    const ImageTensor fc = apply_trigger(clean, spec);
    for (auto [r, c] : {std::pair{0, 0}, {0, 27}, {27, 0}, {27, 27}}) CHECK(fc.at(r, c) >= 0.95f);
    spec.kind = OracleKind::CenterPixel;
    CHECK(apply_trigger(clean, spec).at(14, 14) == 1.0f);
    spec.kind = OracleKind::Benign;
    CHECK_THROWS_AS(apply_trigger(clean, spec), InvalidArgument);
}

TEST_CASE("every trigger kind fires on its poisoned samples") {
    for (OracleKind kind : {OracleKind::CenterPixel, OracleKind::FourCorner, OracleKind::Blended,
                            OracleKind::FragileWatermark}) {
        SynthConfig config;
        config.kind = kind;
        config.cleanPerClass = 3;
        config.poisonedPerClass = 3;
        config.targetLabel = LabelId{7};
        const SyntheticCampaign c = generate_campaign(config);
        SyntheticOracle f(c.oracle);
        for (const auto& s : c.test) CHECK(f.classify(s.image) == (s.poisoned ? LabelId{7} : s.label));
    }
}

TEST_CASE("fragile watermark calibration") {
    const CalibrationResult r = calibrate_fragile_watermark(Seed{3}, Shape{28, 28, 1}, 10, Seed{4});
    CHECK(r.acceptedWatermarked >= 0.99);
    CHECK(r.rejectedNoisy >= 0.9);
    CHECK(r.threshold > 0.0);
    CHECK(r.threshold < 1.0);
}

TEST_CASE("balanced validation cycles classes") {
    SynthConfig config;
    config.balanced = true;
    config.validation = 20;
    const SyntheticCampaign c = generate_campaign(config);
    for (std::size_t i = 0; i < c.validation.size(); ++i) CHECK(c.validation[i].label == LabelId{std::uint32_t(i % 10)});
}

TEST_CASE("written campaigns are reproducible") {
    const fs::path root = fs::temp_directory_path() / "bdt_synth_test";
    fs::remove_all(root);
    SynthConfig config;
    config.kind = OracleKind::Blended;
    config.cleanPerClass = 2;
    config.poisonedPerClass = 2;
    write_campaign(generate_campaign(config), root / "a");
    write_campaign(generate_campaign(config), root / "b");
    const auto a = read_tree(root / "a");
    CHECK(a.size() == 4 + 30 + 100 + 40);
    CHECK(a == read_tree(root / "b"));
    config.seed = Seed{2};
    write_campaign(generate_campaign(config), root / "c");
    CHECK(a != read_tree(root / "c"));

    const DatasetManifest m = DatasetManifest::load(root / "a" / "test.json");
    CHECK(m.items.size() == 40);
    CHECK(m.poisoned_count() == 20);
    CHECK(m.shape == Shape{28, 28, 1});
    CHECK(load_item(m, m.items[0]).shape() == m.shape);
}

TEST_CASE("manifest round trip and guards") {
    const fs::path root = fs::temp_directory_path() / "bdt_manifest_test";
    fs::create_directories(root);
    write_bdt1(root / "x.bdt", ImageTensor(Shape{4, 4, 1}, 0.5f));
    DatasetManifest m;
    m.shape = Shape{4, 4, 1};
    m.items = {{"x.bdt", LabelId{2}, false, std::nullopt}, {"x.bdt", LabelId{2}, true, LabelId{0}}};
    m.save(root / "m.json");
    const DatasetManifest back = DatasetManifest::load(root / "m.json");
    CHECK(back.items.size() == 2);
    CHECK(back.items[1].targetLabel == LabelId{0});
    CHECK(back.resolve(back.items[0]) == root / "x.bdt");

    DatasetManifest wrongShape = back;
    wrongShape.shape = Shape{5, 5, 1};
    CHECK_THROWS_AS(load_item(wrongShape, wrongShape.items[0]), DataError);

    std::ofstream(root / "bad.json") << R"({"shape":[4,4,1],"items":[{"path":"x.bdt","label":1,"poisoned":true}]})";
    CHECK_THROWS_AS(DatasetManifest::load(root / "bad.json"), DataError);
    std::ofstream(root / "junk.json") << "{";
    CHECK_THROWS_AS(DatasetManifest::load(root / "junk.json"), DataError);
}
