#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdt {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Input files that are missing, unreadable or violate their declared schema.
class DataError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Shape {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t channels = 0;

    std::size_t size() const { return std::size_t{height} * width * channels; }
    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

/// H x W x C pixel array stored row-major in (h, w, c) order.
class ImageTensor {
public:
    ImageTensor() = default;
    explicit ImageTensor(Shape shape, float fill = 0.0f);
    ImageTensor(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    std::uint32_t height() const { return shape_.height; }
    std::uint32_t width() const { return shape_.width; }
    std::uint32_t channels() const { return shape_.channels; }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    float at(std::size_t row, std::size_t col, std::size_t channel = 0) const {
        return data_[index(row, col, channel)];
    }
    float& at(std::size_t row, std::size_t col, std::size_t channel = 0) {
        return data_[index(row, col, channel)];
    }

    std::size_t index(std::size_t row, std::size_t col, std::size_t channel) const {
        return (row * shape_.width + col) * shape_.channels + channel;
    }

    bool operator==(const ImageTensor&) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Class index returned by a classifier.
struct LabelId {
    std::uint32_t value = 0;

    auto operator<=>(const LabelId&) const = default;
};

/// Half-open pixel rectangle [rowStart, rowEnd) x [colStart, colEnd).
struct RegionSpec {
    std::size_t rowStart = 0;
    std::size_t colStart = 0;
    std::size_t rowEnd = 0;
    std::size_t colEnd = 0;

    std::size_t rows() const { return rowEnd - rowStart; }
    std::size_t cols() const { return colEnd - colStart; }
    bool contains(std::size_t row, std::size_t col) const {
        return row >= rowStart && row < rowEnd && col >= colStart && col < colEnd;
    }
    bool contains(const RegionSpec& other) const {
        return other.rowStart >= rowStart && other.rowEnd <= rowEnd && other.colStart >= colStart &&
               other.colEnd <= colEnd;
    }
    bool operator==(const RegionSpec&) const = default;
};

/// Throws ShapeError unless the region is non-empty and inside a height x width image.
void validate_region(const RegionSpec& region, std::size_t height, std::size_t width);

struct PoolConfig {
    std::vector<double> ratios;
    std::vector<double> variances;
    bool extraCornerRegions = false;

    /// 16 central-region ratios paired with 16 noise variances.
    static PoolConfig defaults();

    std::size_t size() const { return ratios.size(); }
    void validate() const;
    /// Stable 64-bit digest of the pool, rendered as 16 hex digits.
    std::string hash() const;

    bool operator==(const PoolConfig&) const = default;
};

struct Seed {
    std::uint64_t value = 0;
    bool operator==(const Seed&) const = default;
};

// ---------------------------------------------------------------------------
// Hashing and seeded streams
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
/// Digest of shape and pixel bytes; used as the sample id of an input.
std::uint64_t content_hash(const ImageTensor& image);
std::string to_hex(std::uint64_t value);

/// Gaussian/uniform source derived from a seed and a tuple of stream keys.
class NoiseStream {
public:
    NoiseStream(Seed seed, std::uint64_t sampleId, std::uint64_t poolIndex, std::uint64_t validationIndex);
    explicit NoiseStream(std::uint64_t state) : engine_(state) {}

    double gaussian(double stddev) { return std::normal_distribution<double>(0.0, stddev)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Region geometry and image manipulation
// ---------------------------------------------------------------------------

/// Central block whose height is ratio * height; coordinates are floored.
RegionSpec central_region(std::size_t height, std::size_t width, double ratio);
/// Lower-right block starting at (1 - ratio) of each dimension.
RegionSpec corner_region(std::size_t height, std::size_t width, double ratio);

/// Patch of `image` covering `region` (shape rows x cols x channels).
ImageTensor extract_region(const ImageTensor& image, const RegionSpec& region);
/// Copy of `target` with `region` taken from `source`; both share one shape.
ImageTensor paste_region(const ImageTensor& source, const ImageTensor& target, const RegionSpec& region);
/// Copy of `target` with `patch` (shaped like `region`) written into `region`.
ImageTensor paste_patch(const ImageTensor& patch, const ImageTensor& target, const RegionSpec& region);

/// Adds i.i.d. N(0, variance) noise to every pixel.
ImageTensor add_noise(const ImageTensor& image, double variance, NoiseStream& rng, bool clip = false);

// ---------------------------------------------------------------------------
// Execution helper
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Exceptions are
/// rethrown on the caller thread (the first one wins).
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace bdt
