#include "bdt/synth.hpp"

#include <algorithm>
#include <cmath>

#include "bdt/manifest.hpp"
#include "bdt/tensor_io.hpp"

namespace bdt {

namespace {

constexpr double kBackgroundMax = 0.05;
constexpr float kBlendKeep = 0.8f;
constexpr float kBlendPatternGain = 2.0f;  // 0.2 blend of the pattern rescaled to [0, 1]

// Stream keys for the different draws of one campaign.
enum StreamTag : std::uint64_t { ValidationDraw = 1, SecondValidationDraw, CleanTestDraw, PoisonedTestDraw, Calibration };

LabelId random_class(NoiseStream& rng, std::uint32_t numClasses) {
    return LabelId{static_cast<std::uint32_t>(
        std::uniform_int_distribution<std::uint32_t>(0, numClasses - 1)(rng.engine()))};
}

}  // namespace

ImageTensor make_clean_image(LabelId label, std::uint32_t numClasses, const Shape& shape, NoiseStream& rng) {
    ImageTensor image(shape);
    for (float& px : image.data()) px = static_cast<float>(rng.uniform(0.0, kBackgroundMax));
    const RegionSpec block = benign_block(shape.height, shape.width);
    const double intensity = class_intensity(label, numClasses);
    for (std::size_t r = block.rowStart; r < block.rowEnd; ++r) {
        for (std::size_t c = block.colStart; c < block.colEnd; ++c) {
            for (std::size_t ch = 0; ch < shape.channels; ++ch) {
                float& px = image.at(r, c, ch);
                px = static_cast<float>(intensity + (static_cast<double>(px) - kBackgroundMax / 2));
            }
        }
    }
    return image;
}

ImageTensor apply_trigger(const ImageTensor& image, const SyntheticOracleSpec& spec) {
    ImageTensor out = image;
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    auto light = [&](std::size_t r, std::size_t c) {
        for (std::size_t ch = 0; ch < image.channels(); ++ch) out.at(r, c, ch) = 1.0f;
    };
    switch (spec.kind) {
        case OracleKind::Benign:
            throw InvalidArgument("benign oracle has no trigger");
        case OracleKind::CenterPixel:
            light(h / 2, w / 2);
            break;
        case OracleKind::FourCorner:
            light(0, 0);
            light(0, w - 1);
            light(h - 1, 0);
            light(h - 1, w - 1);
            break;
        case OracleKind::Blended:
        case OracleKind::FragileWatermark: {
            const ImageTensor pattern = watermark_pattern(spec.watermarkSeed, image.shape());
            const RegionSpec block = benign_block(h, w);
            const bool inside = spec.kind == OracleKind::FragileWatermark;
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    if (block.contains(r, c) != inside) continue;
                    for (std::size_t ch = 0; ch < image.channels(); ++ch) {
                        float& px = out.at(r, c, ch);
                        const float p = pattern.at(r, c, ch);
                        px = inside ? px + (p - 0.05f) : kBlendKeep * px + kBlendPatternGain * p;
                        px = std::clamp(px, 0.0f, 1.0f);
                    }
                }
            }
            break;
        }
    }
    return out;
}

CalibrationResult calibrate_fragile_watermark(Seed watermarkSeed, const Shape& shape, std::uint32_t numClasses,
                                              Seed calibrationSeed, std::size_t samples, double noiseVariance) {
    if (samples < 100) {
        throw InvalidArgument("calibration needs at least 100 samples");
    }
    SyntheticOracleSpec spec;
    spec.kind = OracleKind::FragileWatermark;
    spec.numClasses = numClasses;
    spec.watermarkSeed = watermarkSeed;
    const ImageTensor pattern = watermark_pattern(watermarkSeed, shape);

    std::vector<double> marked(samples);
    std::vector<double> noisy(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        NoiseStream rng(calibrationSeed, Calibration, 0, i);
        const ImageTensor image = apply_trigger(make_clean_image(random_class(rng, numClasses), numClasses, shape, rng), spec);
        marked[i] = pattern_correlation(image, pattern, true);
        NoiseStream noise(calibrationSeed, Calibration, 1, i);
        noisy[i] = pattern_correlation(add_noise(image, noiseVariance, noise), pattern, true);
    }
    std::sort(marked.begin(), marked.end());
    // Everything from index `skip` upward must stay strictly above the threshold.
    const auto skip = static_cast<std::size_t>(std::floor(0.01 * static_cast<double>(samples)));
    CalibrationResult result;
    result.threshold = std::nextafter(marked[skip], -1.0);
    const double n = static_cast<double>(samples);
    result.acceptedWatermarked =
        static_cast<double>(std::count_if(marked.begin(), marked.end(), [&](double v) { return v > result.threshold; })) / n;
    result.rejectedNoisy =
        static_cast<double>(std::count_if(noisy.begin(), noisy.end(), [&](double v) { return v <= result.threshold; })) / n;
    if (result.acceptedWatermarked < 0.99 || result.rejectedNoisy < 0.90) {
        throw InvalidArgument("fragile watermark calibration failed: accepted " +
                              std::to_string(result.acceptedWatermarked) + ", rejected " +
                              std::to_string(result.rejectedNoisy));
    }
    return result;
}

SyntheticOracleSpec make_oracle_spec(const SynthConfig& config) {
    SyntheticOracleSpec spec;
    spec.kind = config.kind;
    spec.targetLabel = config.targetLabel;
    spec.numClasses = config.numClasses;
    spec.triggerThreshold = config.triggerThreshold;
    spec.watermarkSeed = Seed{splitmix64(config.seed.value ^ 0x77617465726d61ULL)};
    spec.correlationThreshold = config.blendedCorrelationThreshold;
    if (config.kind == OracleKind::FragileWatermark) {
        spec.correlationThreshold =
            calibrate_fragile_watermark(spec.watermarkSeed, config.shape, config.numClasses,
                                        Seed{splitmix64(spec.watermarkSeed.value)})
                .threshold;
    }
    spec.validate();
    return spec;
}

SyntheticCampaign generate_campaign(const SynthConfig& config) {
    if (config.numClasses < 1) {
        throw InvalidArgument("need at least one class");
    }
    SyntheticCampaign campaign;
    campaign.oracle = make_oracle_spec(config);
    const std::uint32_t k = config.numClasses;

    auto draw_clean = [&](StreamTag tag, std::size_t count, bool balanced) {
        std::vector<SyntheticSample> out;
        for (std::size_t i = 0; i < count; ++i) {
            NoiseStream rng(config.seed, tag, 0, i);
            const LabelId label = balanced ? LabelId{static_cast<std::uint32_t>(i % k)} : random_class(rng, k);
            out.push_back({make_clean_image(label, k, config.shape, rng), label, false, std::nullopt});
        }
        return out;
    };
    campaign.validation = draw_clean(ValidationDraw, config.validation, config.balanced);
    campaign.secondValidation = draw_clean(SecondValidationDraw, config.secondValidation, config.balanced);

    for (std::uint32_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < config.cleanPerClass; ++i) {
            NoiseStream rng(config.seed, CleanTestDraw, c, i);
            campaign.test.push_back({make_clean_image(LabelId{c}, k, config.shape, rng), LabelId{c}, false, std::nullopt});
        }
    }
    if (config.kind != OracleKind::Benign) {
        for (std::uint32_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < config.poisonedPerClass; ++i) {
                NoiseStream rng(config.seed, PoisonedTestDraw, c, i);
                const ImageTensor base = make_clean_image(LabelId{c}, k, config.shape, rng);
                campaign.test.push_back({apply_trigger(base, campaign.oracle), LabelId{c}, true, config.targetLabel});
            }
        }
    }
    return campaign;
}

namespace {

DatasetManifest write_split(const std::vector<SyntheticSample>& samples, const Shape& shape,
                            const std::filesystem::path& outDir, const std::string& name) {
    std::filesystem::create_directories(outDir / name);
    DatasetManifest manifest;
    manifest.shape = shape;
    std::size_t index = 0;
    for (const auto& sample : samples) {
        const std::string file = name + "/" + (sample.poisoned ? "p" : "c") + std::to_string(sample.label.value) + "_" +
                                 std::to_string(index++) + ".bdt";
        write_bdt1(outDir / file, sample.image);
        manifest.items.push_back({file, sample.label, sample.poisoned, sample.targetLabel});
    }
    return manifest;
}

}  // namespace

void write_campaign(const SyntheticCampaign& campaign, const std::filesystem::path& outDir) {
    std::error_code ec;
    std::filesystem::create_directories(outDir, ec);
    if (ec) {
        throw DataError("cannot create " + outDir.string() + ": " + ec.message());
    }
    Shape shape{};
    for (const auto* split : {&campaign.validation, &campaign.secondValidation, &campaign.test}) {
        if (!split->empty()) shape = split->front().image.shape();
    }
    save_oracle_spec(outDir / "oracle.json", campaign.oracle);
    write_split(campaign.validation, shape, outDir, "validation").save(outDir / "validation.json");
    write_split(campaign.secondValidation, shape, outDir, "second_validation").save(outDir / "second_validation.json");
    write_split(campaign.test, shape, outDir, "test").save(outDir / "test.json");
}

}  // namespace bdt
