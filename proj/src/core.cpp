#include "bdt/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>

namespace bdt {

std::string to_string(const Shape& shape) {
    return std::to_string(shape.height) + "x" + std::to_string(shape.width) + "x" +
           std::to_string(shape.channels);
}

ImageTensor::ImageTensor(Shape shape, float fill) : shape_(shape), data_(shape.size(), fill) {
    if (shape.height == 0 || shape.width == 0 || shape.channels == 0) {
        throw ShapeError("image dimensions must be positive, got " + to_string(shape));
    }
}

ImageTensor::ImageTensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (shape.height == 0 || shape.width == 0 || shape.channels == 0) {
        throw ShapeError("image dimensions must be positive, got " + to_string(shape));
    }
    if (data_.size() != shape.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         to_string(shape));
    }
}

void validate_region(const RegionSpec& region, std::size_t height, std::size_t width) {
    if (region.rowStart >= region.rowEnd || region.colStart >= region.colEnd || region.rowEnd > height ||
        region.colEnd > width) {
        throw ShapeError("region (" + std::to_string(region.rowStart) + ", " + std::to_string(region.colStart) +
                         ", " + std::to_string(region.rowEnd) + ", " + std::to_string(region.colEnd) +
                         ") is not valid for a " + std::to_string(height) + "x" + std::to_string(width) +
                         " image");
    }
}

PoolConfig PoolConfig::defaults() {
    PoolConfig pool;
    pool.ratios = {0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.9};
    pool.variances = {0.001, 0.003, 0.005, 0.007, 0.01, 0.03, 0.05, 0.07,
                      0.1,   0.3,   0.5,   0.7,   1.0,  1.5,  2.0,  3.0};
    return pool;
}

void PoolConfig::validate() const {
    if (ratios.empty()) {
        throw InvalidArgument("pool must contain at least one entry");
    }
    if (ratios.size() != variances.size()) {
        throw InvalidArgument("pool ratios and variances must have equal length");
    }
    for (double ratio : ratios) {
        if (!(ratio > 0.0 && ratio < 1.0)) {
            throw InvalidArgument("pool ratio " + std::to_string(ratio) + " outside (0, 1)");
        }
    }
    for (double variance : variances) {
        if (!(variance > 0.0) || !std::isfinite(variance)) {
            throw InvalidArgument("pool variance " + std::to_string(variance) + " must be positive");
        }
    }
}

std::string PoolConfig::hash() const {
    std::vector<std::byte> bytes;
    auto append = [&bytes](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::byte*>(p);
        bytes.insert(bytes.end(), b, b + n);
    };
    std::uint64_t count = ratios.size();
    append(&count, sizeof count);
    for (double r : ratios) append(&r, sizeof r);
    count = variances.size();
    append(&count, sizeof count);
    for (double v : variances) append(&v, sizeof v);
    std::uint8_t extra = extraCornerRegions ? 1 : 0;
    append(&extra, 1);
    return to_hex(fnv1a64(bytes));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t content_hash(const ImageTensor& image) {
    const std::uint32_t dims[3] = {image.height(), image.width(), image.channels()};
    std::uint64_t h = fnv1a64(std::as_bytes(std::span(dims)));
    return fnv1a64(std::as_bytes(image.data()), h);
}

std::string to_hex(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

NoiseStream::NoiseStream(Seed seed, std::uint64_t sampleId, std::uint64_t poolIndex,
                         std::uint64_t validationIndex) {
    std::uint64_t state = splitmix64(seed.value);
    state = splitmix64(state ^ sampleId);
    state = splitmix64(state ^ poolIndex);
    state = splitmix64(state ^ validationIndex);
    engine_.seed(state);
}

namespace {

// Guards against representation error such as 0.35 * 20 = 6.9999999999999996.
std::size_t floor_coordinate(double value) {
    return static_cast<std::size_t>(std::floor(value + 1e-9));
}

void check_ratio(double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw InvalidArgument("region ratio " + std::to_string(ratio) + " outside (0, 1)");
    }
}

void check_same_shape(const ImageTensor& a, const ImageTensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

}  // namespace

RegionSpec central_region(std::size_t height, std::size_t width, double ratio) {
    check_ratio(ratio);
    if (height == 0 || width == 0) {
        throw InvalidArgument("image dimensions must be positive");
    }
    RegionSpec region;
    region.rowStart = floor_coordinate((1.0 - ratio) / 2.0 * static_cast<double>(height));
    region.colStart = floor_coordinate((1.0 - ratio) / 2.0 * static_cast<double>(width));
    region.rowEnd = floor_coordinate((1.0 + ratio) / 2.0 * static_cast<double>(height));
    region.colEnd = floor_coordinate((1.0 + ratio) / 2.0 * static_cast<double>(width));
    // Odd dimensions with tiny ratios can floor to an empty span.
    region.rowEnd = std::min(std::max(region.rowEnd, region.rowStart + 1), height);
    region.colEnd = std::min(std::max(region.colEnd, region.colStart + 1), width);
    return region;
}

RegionSpec corner_region(std::size_t height, std::size_t width, double ratio) {
    check_ratio(ratio);
    if (height == 0 || width == 0) {
        throw InvalidArgument("image dimensions must be positive");
    }
    RegionSpec region;
    region.rowStart = std::min(floor_coordinate((1.0 - ratio) * static_cast<double>(height)), height - 1);
    region.colStart = std::min(floor_coordinate((1.0 - ratio) * static_cast<double>(width)), width - 1);
    region.rowEnd = height;
    region.colEnd = width;
    return region;
}

ImageTensor extract_region(const ImageTensor& image, const RegionSpec& region) {
    validate_region(region, image.height(), image.width());
    const std::uint32_t channels = image.channels();
    ImageTensor patch(Shape{static_cast<std::uint32_t>(region.rows()), static_cast<std::uint32_t>(region.cols()),
                            channels});
    const std::size_t rowLength = region.cols() * channels;
    for (std::size_t r = 0; r < region.rows(); ++r) {
        const float* src = image.data().data() + image.index(region.rowStart + r, region.colStart, 0);
        std::copy_n(src, rowLength, patch.data().data() + patch.index(r, 0, 0));
    }
    return patch;
}

ImageTensor paste_region(const ImageTensor& source, const ImageTensor& target, const RegionSpec& region) {
    check_same_shape(source, target);
    validate_region(region, target.height(), target.width());
    ImageTensor out = target;
    const std::size_t rowLength = region.cols() * target.channels();
    for (std::size_t r = region.rowStart; r < region.rowEnd; ++r) {
        const std::size_t offset = target.index(r, region.colStart, 0);
        std::copy_n(source.data().data() + offset, rowLength, out.data().data() + offset);
    }
    return out;
}

ImageTensor paste_patch(const ImageTensor& patch, const ImageTensor& target, const RegionSpec& region) {
    validate_region(region, target.height(), target.width());
    if (patch.height() != region.rows() || patch.width() != region.cols() ||
        patch.channels() != target.channels()) {
        throw ShapeError("patch shape " + to_string(patch.shape()) + " does not fit region");
    }
    ImageTensor out = target;
    const std::size_t rowLength = region.cols() * target.channels();
    for (std::size_t r = 0; r < region.rows(); ++r) {
        std::copy_n(patch.data().data() + patch.index(r, 0, 0), rowLength,
                    out.data().data() + out.index(region.rowStart + r, region.colStart, 0));
    }
    return out;
}

ImageTensor add_noise(const ImageTensor& image, double variance, NoiseStream& rng, bool clip) {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw InvalidArgument("noise variance must be positive, got " + std::to_string(variance));
    }
    const double stddev = std::sqrt(variance);
    ImageTensor out = image;
    for (float& px : out.data()) {
        double value = static_cast<double>(px) + rng.gaussian(stddev);
        if (clip) {
            value = std::clamp(value, 0.0, 1.0);
        }
        px = static_cast<float>(value);
    }
    return out;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failureMutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failureMutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace bdt
