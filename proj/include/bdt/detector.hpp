#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdt/blackbox.hpp"
#include "bdt/metrics.hpp"
#include "bdt/novelty.hpp"

namespace bdt {

class DegenerateSpreadError : public Error {
public:
    using Error::Error;
};

struct TrainOptions {
    std::size_t kRequested = kDefaultNeighbors;
    MetricMask mask = kAllMetricsMask;
    Seed seed;
    bool clipNoise = false;
    /// Profile each validation sample against the others only.
    bool excludeSelf = false;
    std::size_t jobs = 1;
};

/// Everything needed to screen new inputs: the validation set with its cached
/// labels, the pool, the fitted detectors and the decision threshold.
struct DetectorBundle {
    ValidationSet valset;
    /// Source files of the validation samples; empty when trained from memory.
    std::vector<std::filesystem::path> validationFiles;
    PoolConfig pool;
    TrainOptions options;
    MetricDetectors metricDetectors;
    LofModel metaDetector;
    std::vector<FiveMetricProfile> trainingProfiles;
    std::vector<ScoreVector> trainingScores;
    double threshold = 0.0;
    std::optional<double> sweepH;

    /// Meta confidences of the validation samples' own score vectors.
    std::vector<double> training_meta_confidences() const;

    nlohmann::json to_json(const std::filesystem::path& baseDir = {}) const;
    static DetectorBundle from_json(const nlohmann::json& j, const std::filesystem::path& baseDir = {});

    void save(const std::filesystem::path& path) const;
    static DetectorBundle load(const std::filesystem::path& path);
};

/// Profiles every validation sample against the full validation set (labels
/// must already be cached), fits the five metric detectors, then the meta
/// detector over their confidences. Threshold starts at 0.
DetectorBundle train_detector(const ValidationSet& valset, const PoolConfig& pool, Classifier& classifier,
                              const TrainOptions& options = {});

struct Decision {
    double metaConfidence = 0.0;
    ScoreVector perMetricConfidence;
    bool flaggedPoisoned = false;
    LabelId classifierLabel;
    FiveMetricProfile profile;
};

/// Screens z; classifier(z) is queried once and reported as the decision's label.
Decision detect(const DetectorBundle& bundle, const ImageTensor& z, Classifier& classifier, std::size_t jobs = 1);

/// As above with classifier(z) already known (for instance from a label cache).
Decision detect(const DetectorBundle& bundle, const ImageTensor& z, LabelId label, Classifier& classifier,
                std::size_t jobs = 1);

/// Meta confidence and per-metric scores for a profile computed elsewhere.
Decision decide(const DetectorBundle& bundle, FiveMetricProfile profile, LabelId label);

nlohmann::json decision_to_json(std::uint64_t id, const Decision& decision);

struct SweepRow {
    double h = 0.0;
    double threshold = 0.0;
    double fpr = 0.0;
    std::optional<double> tpr;
};

struct ThresholdSweep {
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<SweepRow> rows;
    std::size_t chosenIndex = 0;
    double chosenH = 0.0;
    double chosenThreshold = 0.0;
    std::optional<std::string> warning;

    nlohmann::json to_json() const;
};

/// h grid 0, 0.25, ..., 5.
std::vector<double> default_sweep_grid();

/// thres(h) = mu - h * sigma with mu, sigma (population) over the validation
/// samples' meta confidences; picks the smallest h whose FPR on the second
/// clean set is within targetFpr, else the largest h with a warning.
ThresholdSweep sweep_threshold(const DetectorBundle& bundle, std::span<const double> secondValidationConfidences,
                               std::span<const double> grid, double targetFpr,
                               std::span<const double> poisonedConfidences = {});

ThresholdSweep sweep_threshold(const DetectorBundle& bundle, std::span<const ImageTensor> secondValidation,
                               std::span<const double> grid, double targetFpr, Classifier& classifier,
                               std::span<const ImageTensor> poisoned = {}, std::size_t jobs = 1);

}  // namespace bdt
