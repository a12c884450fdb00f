#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdt/blackbox.hpp"
#include "bdt/core.hpp"

namespace bdt {

/// Clean reference samples together with the classifier's labels for them.
struct ValidationSet {
    std::vector<ImageTensor> samples;
    std::vector<LabelId> labels;

    std::size_t size() const { return samples.size(); }
    const Shape& shape() const { return samples.front().shape(); }
    void validate() const;
};

/// Labels every sample with `classifier` (one query per sample).
ValidationSet make_validation_set(std::vector<ImageTensor> samples, Classifier& classifier);

enum class Metric : std::size_t { Robustness = 0, Weakness, Sensitivity, InverseSensitivity, NoiseInvariance };

inline constexpr std::size_t kMetricCount = 5;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::Robustness, Metric::Weakness, Metric::Sensitivity, Metric::InverseSensitivity,
    Metric::NoiseInvariance};

/// Short names used in files and on the command line: r, w, s, is, inv.
std::string metric_name(Metric metric);
Metric metric_from_name(const std::string& name);

struct FiveMetricProfile {
    std::vector<double> r;
    std::vector<double> w;
    std::vector<double> s;
    std::vector<double> is;
    std::vector<double> inv;
    std::size_t n = 0;

    const std::vector<double>& operator[](Metric metric) const;
    std::vector<double>& operator[](Metric metric);
    bool operator==(const FiveMetricProfile&) const = default;
};

nlohmann::json profile_to_json(const FiveMetricProfile& profile, const PoolConfig& pool);
FiveMetricProfile profile_from_json(const nlohmann::json& j);

// Single-region metrics. `zLabel` is classifier(z), computed once by the caller.

/// Fraction of validation samples that take z's label after z's region is pasted into them.
double robustness(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset, const RegionSpec& region,
                  Classifier& classifier);
/// Fraction of validation samples that keep their own label after z's region is pasted into them.
double weakness(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset, const RegionSpec& region,
                Classifier& classifier);
/// Fraction of validation regions that, pasted into z, leave z's label unchanged.
double sensitivity(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset, const RegionSpec& region,
                   Classifier& classifier);
/// Fraction of validation regions that, pasted into z, make z take that sample's label.
double inverse_sensitivity(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset,
                           const RegionSpec& region, Classifier& classifier);

struct NoiseKey {
    Seed seed;
    std::uint64_t sampleId = 0;
    std::uint64_t poolIndex = 0;
};

/// Fraction of n noisy copies of z (copy i drawn from stream (seed, sample, pool, i))
/// that keep z's label.
double noise_invariance(const ImageTensor& z, LabelId zLabel, std::size_t n, double variance,
                        Classifier& classifier, const NoiseKey& key, bool clip = false);

struct MetricOptions {
    Seed seed;
    bool clipNoise = false;
    /// Threads draining the query work-list; forced to 1 for serial classifiers.
    std::size_t jobs = 1;
};

/// Profiles z against the validation set over every pool entry. The classifier
/// is queried exactly 3 * |pool| * n times, plus 2 * |pool| * n with corner
/// regions enabled; z's own label must be supplied.
FiveMetricProfile metric_cal(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset,
                             const PoolConfig& pool, Classifier& classifier, const MetricOptions& options);

/// As above but queries classifier(z) once for z's label.
FiveMetricProfile metric_cal(const ImageTensor& z, const ValidationSet& valset, const PoolConfig& pool,
                             Classifier& classifier, const MetricOptions& options);

}  // namespace bdt
