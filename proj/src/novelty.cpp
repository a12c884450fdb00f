#include "bdt/novelty.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bdt {

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

// k-th smallest value of `distances` (1-based k).
double kth_smallest(std::vector<double> distances, std::size_t k) {
    std::nth_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(k - 1), distances.end());
    return distances[k - 1];
}

}  // namespace

LofModel LofModel::fit(std::vector<Point> points, std::size_t kRequested) {
    if (points.size() < 2) {
        throw InvalidTrainingSet("LOF needs at least 2 training points, got " + std::to_string(points.size()));
    }
    if (kRequested == 0) {
        throw InvalidArgument("LOF neighbor count must be positive");
    }
    const std::size_t d = points.front().size();
    if (d == 0) {
        throw ShapeError("LOF training points must have positive dimension");
    }
    for (const auto& p : points) {
        if (p.size() != d) {
            throw ShapeError("LOF training points have mixed dimensions " + std::to_string(d) + " and " +
                             std::to_string(p.size()));
        }
    }

    LofModel model;
    model.dimension_ = d;
    model.k_ = std::min(kRequested, points.size() - 1);
    model.points_ = std::move(points);
    const std::size_t n = model.points_.size();

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dist[i][j] = dist[j][i] = euclidean(model.points_[i], model.points_[j]);
        }
    }

    model.kDistances_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> others;
        others.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) others.push_back(dist[i][j]);
        }
        model.kDistances_[i] = kth_smallest(std::move(others), model.k_);
    }

    model.lrd_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double reachSum = 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || dist[i][j] > model.kDistances_[i]) continue;
            reachSum += std::max(model.kDistances_[j], dist[i][j]);
            ++count;
        }
        model.lrd_[i] = 1.0 / (reachSum / static_cast<double>(count) + kReachRegularizer);
    }
    return model;
}

double LofModel::local_outlier_factor(std::span<const double> query) const {
    if (query.size() != dimension_) {
        throw ShapeError("LOF query has dimension " + std::to_string(query.size()) + ", model expects " +
                         std::to_string(dimension_));
    }
    const std::size_t n = points_.size();
    std::vector<double> dist(n);
    for (std::size_t j = 0; j < n; ++j) dist[j] = euclidean(query, points_[j]);
    const double kDistance = kth_smallest(dist, k_);

    double reachSum = 0.0;
    double lrdSum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (dist[j] > kDistance) continue;
        reachSum += std::max(kDistances_[j], dist[j]);
        lrdSum += lrd_[j];
        ++count;
    }
    const double queryLrd = 1.0 / (reachSum / static_cast<double>(count) + kReachRegularizer);
    return (lrdSum / static_cast<double>(count)) / queryLrd;
}

double LofModel::score(std::span<const double> query) const { return offset_ - local_outlier_factor(query); }

nlohmann::json LofModel::to_json() const {
    return nlohmann::json{{"k", k_},
                          {"offset", offset_},
                          {"regularizer", kReachRegularizer},
                          {"dimension", dimension_},
                          {"points", points_}};
}

LofModel LofModel::from_json(const nlohmann::json& j) {
    if (j.value("regularizer", kReachRegularizer) != kReachRegularizer) {
        throw DataError("LOF model uses an unsupported regularizer");
    }
    LofModel model = fit(j.at("points").get<std::vector<Point>>(), j.at("k").get<std::size_t>());
    if (model.k_ != j.at("k").get<std::size_t>() || model.dimension_ != j.at("dimension").get<std::size_t>()) {
        throw DataError("LOF model header does not match its training points");
    }
    model.offset_ = j.value("offset", kDefaultOffset);
    return model;
}

std::size_t enabled_count(const MetricMask& mask) {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::string mask_to_string(const MetricMask& mask) {
    std::string out;
    for (Metric metric : kAllMetrics) {
        if (!mask[static_cast<std::size_t>(metric)]) continue;
        if (!out.empty()) out += ',';
        out += metric_name(metric);
    }
    return out;
}

MetricMask mask_from_string(const std::string& list) {
    MetricMask mask{};
    std::stringstream stream(list);
    std::string item;
    while (std::getline(stream, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) continue;
        mask[static_cast<std::size_t>(metric_from_name(item))] = true;
    }
    if (enabled_count(mask) == 0) {
        throw InvalidArgument("metric list '" + list + "' enables no metric");
    }
    return mask;
}

Point meta_input(const ScoreVector& scores) {
    Point out;
    for (const auto& s : scores) {
        if (s) out.push_back(*s);
    }
    return out;
}

MetricDetectors fit_metric_detectors(std::span<const FiveMetricProfile> profiles, const MetricMask& mask,
                                     std::size_t kRequested) {
    if (enabled_count(mask) == 0) {
        throw InvalidArgument("at least one metric detector must be enabled");
    }
    MetricDetectors detectors;
    for (Metric metric : kAllMetrics) {
        const auto slot = static_cast<std::size_t>(metric);
        if (!mask[slot]) continue;
        std::vector<Point> points;
        points.reserve(profiles.size());
        for (const auto& profile : profiles) points.push_back(profile[metric]);
        detectors[slot] = LofModel::fit(std::move(points), kRequested);
    }
    return detectors;
}

ScoreVector score_profile(const MetricDetectors& detectors, const FiveMetricProfile& profile) {
    ScoreVector scores;
    for (Metric metric : kAllMetrics) {
        const auto slot = static_cast<std::size_t>(metric);
        if (detectors[slot]) scores[slot] = detectors[slot]->score(profile[metric]);
    }
    return scores;
}

LofModel fit_meta_detector(std::span<const ScoreVector> scores, std::size_t kRequested) {
    std::vector<Point> points;
    points.reserve(scores.size());
    for (const auto& s : scores) points.push_back(meta_input(s));
    return LofModel::fit(std::move(points), kRequested);
}

}  // namespace bdt
