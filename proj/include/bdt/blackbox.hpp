#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "bdt/core.hpp"

namespace bdt {

/// Failure talking to a classifier process. `payload` holds the raw line (or
/// the last bytes read) that caused the failure.
class TransportError : public Error {
public:
    TransportError(const std::string& what, std::string payload = {})
        : Error(what), payload_(std::move(payload)) {}
    const std::string& payload() const { return payload_; }

private:
    std::string payload_;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

/// Label-only view of a (possibly backdoored) model. Implementations must be
/// pure in the image: the same tensor always yields the same label.
class Classifier {
public:
    virtual ~Classifier() = default;

    virtual LabelId classify(const ImageTensor& image) = 0;
    virtual std::uint32_t num_classes() const = 0;
    /// False when classify() must not be called from more than one thread at a time.
    virtual bool concurrent() const { return true; }
};

class QueryCounter {
public:
    void record(const std::string& phase);

    std::uint64_t total() const { return total_.load(); }
    std::uint64_t phase(const std::string& name) const;
    std::map<std::string, std::uint64_t> per_phase() const;

private:
    std::atomic<std::uint64_t> total_{0};
    mutable std::mutex mutex_;
    std::map<std::string, std::uint64_t> perPhase_;
};

/// Forwards to an inner classifier and records every call in a QueryCounter.
class CountingClassifier : public Classifier {
public:
    CountingClassifier(Classifier& inner, QueryCounter& counter) : inner_(inner), counter_(counter) {}

    LabelId classify(const ImageTensor& image) override;
    std::uint32_t num_classes() const override { return inner_.num_classes(); }
    bool concurrent() const override { return inner_.concurrent(); }

    void set_phase(std::string phase);

private:
    Classifier& inner_;
    QueryCounter& counter_;
    mutable std::mutex phaseMutex_;
    std::string phase_ = "default";
};

/// Memoizes labels keyed by the exact tensor bytes (shape included).
class CachedClassifier : public Classifier {
public:
    explicit CachedClassifier(Classifier& inner) : inner_(inner) {}

    LabelId classify(const ImageTensor& image) override;
    std::uint32_t num_classes() const override { return inner_.num_classes(); }
    bool concurrent() const override { return inner_.concurrent(); }

    std::size_t size() const;
    std::uint64_t hits() const { return hits_.load(); }
    Classifier& inner() { return inner_; }

private:
    Classifier& inner_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, LabelId> cache_;
    std::atomic<std::uint64_t> hits_{0};
};

// ---------------------------------------------------------------------------
// Synthetic oracles
// ---------------------------------------------------------------------------

enum class OracleKind { Benign, CenterPixel, FourCorner, Blended, FragileWatermark };

std::string to_string(OracleKind kind);
OracleKind oracle_kind_from_string(const std::string& name);

struct SyntheticOracleSpec {
    OracleKind kind = OracleKind::Benign;
    LabelId targetLabel{0};
    std::uint32_t numClasses = 10;
    double triggerThreshold = 0.95;
    Seed watermarkSeed{0};
    double correlationThreshold = 0.5;

    void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticOracleSpec& spec);
void from_json(const nlohmann::json& j, SyntheticOracleSpec& spec);

SyntheticOracleSpec load_oracle_spec(const std::filesystem::path& path);
void save_oracle_spec(const std::filesystem::path& path, const SyntheticOracleSpec& spec);

/// Geometry of the class-encoding block: 6x6 at (height/2 - 3, width/4),
/// clipped to the image.
RegionSpec benign_block(std::size_t height, std::size_t width);
/// Intensity (c + 1) / (numClasses + 1) that encodes class c.
double class_intensity(LabelId label, std::uint32_t numClasses);
/// Decoder of the benign feature: round(mean * (K + 1)) - 1, clamped.
LabelId decode_benign_block(const ImageTensor& image, std::uint32_t numClasses);

/// Seeded pattern with values uniform in [0, 0.1], one per tensor element.
ImageTensor watermark_pattern(Seed seed, const Shape& shape);

/// Pearson correlation between `image` and `pattern` over the pixels inside
/// (insideBlock = true) or outside the benign block.
double pattern_correlation(const ImageTensor& image, const ImageTensor& pattern, bool insideBlock);

/// Deterministic synthetic classifier. Benign kind reads only the class
/// block; other kinds return the target label whenever their trigger
/// predicate fires and otherwise fall back to the benign rule.
class SyntheticOracle : public Classifier {
public:
    explicit SyntheticOracle(SyntheticOracleSpec spec);

    LabelId classify(const ImageTensor& image) override;
    std::uint32_t num_classes() const override { return spec_.numClasses; }

    bool trigger_fires(const ImageTensor& image) const;
    /// Trigger statistic for the correlation kinds (NaN for pixel triggers).
    double trigger_statistic(const ImageTensor& image) const;
    const SyntheticOracleSpec& spec() const { return spec_; }

private:
    const ImageTensor& pattern_for(const Shape& shape) const;

    SyntheticOracleSpec spec_;
    mutable std::mutex patternMutex_;
    mutable std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>, std::unique_ptr<ImageTensor>>
        patterns_;
};

std::unique_ptr<SyntheticOracle> benign_oracle(const SyntheticOracleSpec& spec);
std::unique_ptr<SyntheticOracle> backdoored_oracle(const SyntheticOracleSpec& spec);

// ---------------------------------------------------------------------------
// External process adapter
// ---------------------------------------------------------------------------

struct ExternalClassifierOptions {
    std::chrono::milliseconds timeout{10000};
    /// Extra attempts after a timeout; the process is restarted for each one.
    int retries = 0;
};

/// Speaks the JSON-lines protocol with a child process started through
/// /bin/sh -c. Serial: one request in flight at a time.
class ExternalClassifier : public Classifier {
public:
    ExternalClassifier(std::string command, ExternalClassifierOptions options = {});
    ~ExternalClassifier() override;
    ExternalClassifier(const ExternalClassifier&) = delete;
    ExternalClassifier& operator=(const ExternalClassifier&) = delete;

    LabelId classify(const ImageTensor& image) override;
    std::uint32_t num_classes() const override { return numClasses_; }
    bool concurrent() const override { return false; }

private:
    void start();
    void stop();
    void send_line(const std::string& line);
    std::string read_line();
    nlohmann::json request(const nlohmann::json& message, std::uint64_t id);

    std::string command_;
    ExternalClassifierOptions options_;
    std::mutex mutex_;
    int pid_ = -1;
    int toChild_ = -1;
    int fromChild_ = -1;
    std::string buffer_;
    std::uint64_t nextId_ = 1;
    std::uint32_t numClasses_ = 0;
};

}  // namespace bdt
