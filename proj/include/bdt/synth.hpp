#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "bdt/blackbox.hpp"
#include "bdt/core.hpp"

namespace bdt {

/// Clean synthetic image of class `label`: uniform [0, 0.05] background
/// texture with the class block at intensity (c + 1) / (K + 1) (the block
/// carries the same texture, re-centered to zero mean).
ImageTensor make_clean_image(LabelId label, std::uint32_t numClasses, const Shape& shape, NoiseStream& rng);

/// Trigger-bearing copy of `image` for the oracle's kind:
///  - centerPixel: center pixel set to 1
///  - fourCorner: the four corner pixels set to 1
///  - blended: pixels outside the class block become 0.8 x + 2 p
///  - fragileWatermark: pixels inside the class block get p - 0.05 added
/// where p is the oracle's watermark pattern.
ImageTensor apply_trigger(const ImageTensor& image, const SyntheticOracleSpec& spec);

struct CalibrationResult {
    double threshold = 0.0;
    double acceptedWatermarked = 0.0;
    double rejectedNoisy = 0.0;
};

/// Correlation threshold for the fragile watermark: the largest value accepted
/// by at least 99% of `samples` watermarked images while rejecting at least
/// 90% of their N(0, noiseVariance)-perturbed copies. Throws when no such
/// value exists.
CalibrationResult calibrate_fragile_watermark(Seed watermarkSeed, const Shape& shape, std::uint32_t numClasses,
                                              Seed calibrationSeed, std::size_t samples = 500,
                                              double noiseVariance = 0.05);

struct SynthConfig {
    OracleKind kind = OracleKind::CenterPixel;
    std::uint32_t numClasses = 10;
    LabelId targetLabel{0};
    Shape shape{28, 28, 1};
    std::size_t cleanPerClass = 20;
    std::size_t poisonedPerClass = 20;
    std::size_t validation = 30;
    std::size_t secondValidation = 100;
    /// Cycle classes in the validation sets instead of drawing them at random.
    bool balanced = false;
    Seed seed{1};
    double triggerThreshold = 0.95;
    double blendedCorrelationThreshold = 0.5;
};

struct SyntheticSample {
    ImageTensor image;
    LabelId label;
    bool poisoned = false;
    std::optional<LabelId> targetLabel;
};

struct SyntheticCampaign {
    SyntheticOracleSpec oracle;
    std::vector<SyntheticSample> validation;
    std::vector<SyntheticSample> secondValidation;
    std::vector<SyntheticSample> test;
};

SyntheticOracleSpec make_oracle_spec(const SynthConfig& config);
SyntheticCampaign generate_campaign(const SynthConfig& config);

/// Writes oracle.json, validation.json, second_validation.json and test.json
/// plus one BDT1 file per image under outDir.
void write_campaign(const SyntheticCampaign& campaign, const std::filesystem::path& outDir);

}  // namespace bdt
