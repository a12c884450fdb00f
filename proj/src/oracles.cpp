#include <algorithm>
#include <cmath>
#include <limits>

#include "bdt/blackbox.hpp"

namespace bdt {

namespace {

constexpr std::size_t kBlockSize = 6;

}  // namespace

RegionSpec benign_block(std::size_t height, std::size_t width) {
    const auto top = static_cast<std::ptrdiff_t>(height / 2) - 3;
    RegionSpec block;
    block.rowStart = static_cast<std::size_t>(std::max<std::ptrdiff_t>(top, 0));
    block.rowEnd = static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(top + static_cast<std::ptrdiff_t>(kBlockSize), 1, static_cast<std::ptrdiff_t>(height)));
    block.colStart = std::min(width / 4, width - 1);
    block.colEnd = std::min(block.colStart + kBlockSize, width);
    return block;
}

double class_intensity(LabelId label, std::uint32_t numClasses) {
    return static_cast<double>(label.value + 1) / static_cast<double>(numClasses + 1);
}

LabelId decode_benign_block(const ImageTensor& image, std::uint32_t numClasses) {
    const RegionSpec block = benign_block(image.height(), image.width());
    double sum = 0.0;
    for (std::size_t r = block.rowStart; r < block.rowEnd; ++r) {
        for (std::size_t c = block.colStart; c < block.colEnd; ++c) {
            for (std::size_t ch = 0; ch < image.channels(); ++ch) sum += image.at(r, c, ch);
        }
    }
    const double mean = sum / static_cast<double>(block.rows() * block.cols() * image.channels());
    const double code = std::round(mean * static_cast<double>(numClasses + 1)) - 1.0;
    const double clamped = std::clamp(code, 0.0, static_cast<double>(numClasses - 1));
    return LabelId{static_cast<std::uint32_t>(clamped)};
}

ImageTensor watermark_pattern(Seed seed, const Shape& shape) {
    NoiseStream rng(splitmix64(seed.value ^ 0x5741544552ULL));
    ImageTensor pattern(shape);
    for (float& px : pattern.data()) {
        px = static_cast<float>(rng.uniform(0.0, 0.1));
    }
    return pattern;
}

double pattern_correlation(const ImageTensor& image, const ImageTensor& pattern, bool insideBlock) {
    if (image.shape() != pattern.shape()) {
        throw ShapeError("pattern shape " + to_string(pattern.shape()) + " does not match image " +
                         to_string(image.shape()));
    }
    const RegionSpec block = benign_block(image.height(), image.width());
    double sx = 0, sp = 0, sxx = 0, spp = 0, sxp = 0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < image.height(); ++r) {
        for (std::size_t c = 0; c < image.width(); ++c) {
            if (block.contains(r, c) != insideBlock) continue;
            for (std::size_t ch = 0; ch < image.channels(); ++ch) {
                const double x = image.at(r, c, ch);
                const double p = pattern.at(r, c, ch);
                sx += x;
                sp += p;
                sxx += x * x;
                spp += p * p;
                sxp += x * p;
                ++count;
            }
        }
    }
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    const double cov = sxp - sx * sp / n;
    const double vx = sxx - sx * sx / n;
    const double vp = spp - sp * sp / n;
    if (vx <= 0.0 || vp <= 0.0) return 0.0;
    return cov / std::sqrt(vx * vp);
}

SyntheticOracle::SyntheticOracle(SyntheticOracleSpec spec) : spec_(spec) { spec_.validate(); }

const ImageTensor& SyntheticOracle::pattern_for(const Shape& shape) const {
    std::lock_guard lock(patternMutex_);
    auto key = std::make_tuple(shape.height, shape.width, shape.channels);
    auto& slot = patterns_[key];
    if (!slot) {
        slot = std::make_unique<ImageTensor>(watermark_pattern(spec_.watermarkSeed, shape));
    }
    return *slot;
}

double SyntheticOracle::trigger_statistic(const ImageTensor& image) const {
    switch (spec_.kind) {
        case OracleKind::Blended:
            return pattern_correlation(image, pattern_for(image.shape()), false);
        case OracleKind::FragileWatermark:
            return pattern_correlation(image, pattern_for(image.shape()), true);
        default:
            return std::numeric_limits<double>::quiet_NaN();
    }
}

bool SyntheticOracle::trigger_fires(const ImageTensor& image) const {
    const std::size_t h = image.height();
    const std::size_t w = image.width();
    auto bright = [&](std::size_t r, std::size_t c) {
        for (std::size_t ch = 0; ch < image.channels(); ++ch) {
            if (!(image.at(r, c, ch) >= spec_.triggerThreshold)) return false;
        }
        return true;
    };
    switch (spec_.kind) {
        case OracleKind::Benign:
            return false;
        case OracleKind::CenterPixel:
            return bright(h / 2, w / 2);
        case OracleKind::FourCorner:
            return bright(0, 0) && bright(0, w - 1) && bright(h - 1, 0) && bright(h - 1, w - 1);
        case OracleKind::Blended:
        case OracleKind::FragileWatermark:
            return trigger_statistic(image) > spec_.correlationThreshold;
    }
    return false;
}

LabelId SyntheticOracle::classify(const ImageTensor& image) {
    if (trigger_fires(image)) {
        return spec_.targetLabel;
    }
    return decode_benign_block(image, spec_.numClasses);
}

std::unique_ptr<SyntheticOracle> benign_oracle(const SyntheticOracleSpec& spec) {
    if (spec.kind != OracleKind::Benign) {
        throw InvalidArgument("benign oracle requires kind=benign, got " + to_string(spec.kind));
    }
    return std::make_unique<SyntheticOracle>(spec);
}

std::unique_ptr<SyntheticOracle> backdoored_oracle(const SyntheticOracleSpec& spec) {
    if (spec.kind == OracleKind::Benign) {
        throw InvalidArgument("backdoored oracle requires a trigger kind");
    }
    return std::make_unique<SyntheticOracle>(spec);
}

}  // namespace bdt
