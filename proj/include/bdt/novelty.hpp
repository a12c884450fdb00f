#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "bdt/core.hpp"
#include "bdt/metrics.hpp"

namespace bdt {

class InvalidTrainingSet : public Error {
public:
    using Error::Error;
};

using Point = std::vector<double>;

inline constexpr std::size_t kDefaultNeighbors = 20;
inline constexpr double kDefaultOffset = 1.5;
inline constexpr double kReachRegularizer = 1e-10;

/// One-class scorer: fit on clean points, score how inlier-like a new point is.
class NoveltyDetector {
public:
    virtual ~NoveltyDetector() = default;
    /// Higher is more inlier-like; negative values are outliers at the default threshold.
    virtual double score(std::span<const double> query) const = 0;
    virtual std::size_t dimension() const = 0;
};

/// Local Outlier Factor in novelty mode with Euclidean distances.
///
/// Neighborhoods are tie-inclusive: every point whose distance does not exceed
/// the k-distance belongs to the neighborhood. The local reachability density
/// is 1 / (mean reach-distance + 1e-10) so exact duplicates stay finite.
class LofModel : public NoveltyDetector {
public:
    static LofModel fit(std::vector<Point> points, std::size_t kRequested = kDefaultNeighbors);

    /// offset - LOF(query).
    double score(std::span<const double> query) const override;
    double local_outlier_factor(std::span<const double> query) const;
    std::size_t dimension() const override { return dimension_; }

    std::size_t k() const { return k_; }
    double offset() const { return offset_; }
    const std::vector<Point>& points() const { return points_; }
    const std::vector<double>& k_distances() const { return kDistances_; }
    const std::vector<double>& lrd() const { return lrd_; }

    nlohmann::json to_json() const;
    static LofModel from_json(const nlohmann::json& j);

    bool operator==(const LofModel& o) const {
        return points_ == o.points_ && k_ == o.k_ && offset_ == o.offset_ && kDistances_ == o.kDistances_ &&
               lrd_ == o.lrd_;
    }

private:
    std::vector<Point> points_;
    std::size_t dimension_ = 0;
    std::size_t k_ = 0;
    double offset_ = kDefaultOffset;
    std::vector<double> kDistances_;
    std::vector<double> lrd_;
};

/// Which of the five metric detectors take part (incremental ablations).
using MetricMask = std::array<bool, kMetricCount>;

inline constexpr MetricMask kAllMetricsMask = {true, true, true, true, true};

std::size_t enabled_count(const MetricMask& mask);
std::string mask_to_string(const MetricMask& mask);
/// Parses a comma-separated list such as "r,w,inv".
MetricMask mask_from_string(const std::string& list);

/// Per-metric confidences in r, w, s, is, inv order; disabled metrics are empty.
using ScoreVector = std::array<std::optional<double>, kMetricCount>;

/// Enabled confidences in order, the meta detector's input.
Point meta_input(const ScoreVector& scores);

using MetricDetectors = std::array<std::optional<LofModel>, kMetricCount>;

MetricDetectors fit_metric_detectors(std::span<const FiveMetricProfile> profiles, const MetricMask& mask,
                                     std::size_t kRequested = kDefaultNeighbors);
ScoreVector score_profile(const MetricDetectors& detectors, const FiveMetricProfile& profile);
LofModel fit_meta_detector(std::span<const ScoreVector> scores, std::size_t kRequested = kDefaultNeighbors);

}  // namespace bdt
