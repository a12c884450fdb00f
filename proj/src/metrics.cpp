#include "bdt/metrics.hpp"

#include <algorithm>

namespace bdt {

void ValidationSet::validate() const {
    if (samples.size() < 1) {
        throw InvalidArgument("validation set is empty");
    }
    if (labels.size() != samples.size()) {
        throw InvalidArgument("validation set has " + std::to_string(samples.size()) + " samples but " +
                              std::to_string(labels.size()) + " labels");
    }
    for (const auto& sample : samples) {
        if (sample.shape() != samples.front().shape()) {
            throw ShapeError("validation samples have mixed shapes: " + to_string(sample.shape()) + " vs " +
                             to_string(samples.front().shape()));
        }
    }
}

ValidationSet make_validation_set(std::vector<ImageTensor> samples, Classifier& classifier) {
    ValidationSet valset;
    valset.labels.reserve(samples.size());
    for (const auto& sample : samples) {
        valset.labels.push_back(classifier.classify(sample));
    }
    valset.samples = std::move(samples);
    valset.validate();
    return valset;
}

std::string metric_name(Metric metric) {
    switch (metric) {
        case Metric::Robustness: return "r";
        case Metric::Weakness: return "w";
        case Metric::Sensitivity: return "s";
        case Metric::InverseSensitivity: return "is";
        case Metric::NoiseInvariance: return "inv";
    }
    return "?";
}

Metric metric_from_name(const std::string& name) {
    for (Metric metric : kAllMetrics) {
        if (metric_name(metric) == name) return metric;
    }
    throw InvalidArgument("unknown metric '" + name + "' (expected r, w, s, is or inv)");
}

const std::vector<double>& FiveMetricProfile::operator[](Metric metric) const {
    switch (metric) {
        case Metric::Robustness: return r;
        case Metric::Weakness: return w;
        case Metric::Sensitivity: return s;
        case Metric::InverseSensitivity: return is;
        case Metric::NoiseInvariance: return inv;
    }
    return r;
}

std::vector<double>& FiveMetricProfile::operator[](Metric metric) {
    return const_cast<std::vector<double>&>(std::as_const(*this)[metric]);
}

nlohmann::json profile_to_json(const FiveMetricProfile& profile, const PoolConfig& pool) {
    return nlohmann::json{{"r", profile.r},     {"w", profile.w},   {"s", profile.s},
                          {"is", profile.is},   {"inv", profile.inv}, {"n", profile.n},
                          {"pool_hash", pool.hash()}};
}

FiveMetricProfile profile_from_json(const nlohmann::json& j) {
    FiveMetricProfile profile;
    for (Metric metric : kAllMetrics) {
        profile[metric] = j.at(metric_name(metric)).get<std::vector<double>>();
    }
    profile.n = j.at("n").get<std::size_t>();
    return profile;
}

namespace {

void check_shape(const ImageTensor& z, const ValidationSet& valset) {
    valset.validate();
    if (z.shape() != valset.shape()) {
        throw ShapeError("input shape " + to_string(z.shape()) + " does not match validation shape " +
                         to_string(valset.shape()));
    }
}

double fraction(std::size_t hits, std::size_t n) { return static_cast<double>(hits) / static_cast<double>(n); }

}  // namespace

double robustness(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset, const RegionSpec& region,
                  Classifier& classifier) {
    check_shape(z, valset);
    std::size_t hits = 0;
    for (const auto& x : valset.samples) {
        hits += classifier.classify(paste_region(z, x, region)) == zLabel;
    }
    return fraction(hits, valset.size());
}

double weakness(const ImageTensor& z, LabelId /*zLabel*/, const ValidationSet& valset, const RegionSpec& region,
                Classifier& classifier) {
    check_shape(z, valset);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < valset.size(); ++i) {
        hits += classifier.classify(paste_region(z, valset.samples[i], region)) == valset.labels[i];
    }
    return fraction(hits, valset.size());
}

double sensitivity(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset, const RegionSpec& region,
                   Classifier& classifier) {
    check_shape(z, valset);
    std::size_t hits = 0;
    for (const auto& x : valset.samples) {
        hits += classifier.classify(paste_region(x, z, region)) == zLabel;
    }
    return fraction(hits, valset.size());
}

double inverse_sensitivity(const ImageTensor& z, LabelId /*zLabel*/, const ValidationSet& valset,
                           const RegionSpec& region, Classifier& classifier) {
    check_shape(z, valset);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < valset.size(); ++i) {
        hits += classifier.classify(paste_region(valset.samples[i], z, region)) == valset.labels[i];
    }
    return fraction(hits, valset.size());
}

double noise_invariance(const ImageTensor& z, LabelId zLabel, std::size_t n, double variance,
                        Classifier& classifier, const NoiseKey& key, bool clip) {
    if (n == 0) {
        throw InvalidArgument("noise invariance needs at least one draw");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        NoiseStream rng(key.seed, key.sampleId, key.poolIndex, i);
        hits += classifier.classify(add_noise(z, variance, rng, clip)) == zLabel;
    }
    return fraction(hits, n);
}

namespace {

enum class TaskKind : std::uint8_t { IntoValidation, IntoInput, Noise };

struct QueryTask {
    TaskKind kind;
    std::size_t regionIndex;  // index into `regions` for paste tasks, pool index for noise
    std::size_t sample;
};

}  // namespace

FiveMetricProfile metric_cal(const ImageTensor& z, LabelId zLabel, const ValidationSet& valset,
                             const PoolConfig& pool, Classifier& classifier, const MetricOptions& options) {
    pool.validate();
    check_shape(z, valset);
    const std::size_t n = valset.size();
    const std::size_t m = pool.size();
    const std::size_t h = z.height();
    const std::size_t w = z.width();

    std::vector<RegionSpec> regions;
    regions.reserve(pool.extraCornerRegions ? 2 * m : m);
    for (double ratio : pool.ratios) regions.push_back(central_region(h, w, ratio));
    if (pool.extraCornerRegions) {
        for (double ratio : pool.ratios) regions.push_back(corner_region(h, w, ratio));
    }

    // Work-list: every query is independent and writes its own slot.
    std::vector<QueryTask> tasks;
    tasks.reserve((2 * regions.size() + m) * n);
    for (std::size_t j = 0; j < regions.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            tasks.push_back({TaskKind::IntoValidation, j, i});
            tasks.push_back({TaskKind::IntoInput, j, i});
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < n; ++i) tasks.push_back({TaskKind::Noise, j, i});
    }

    const std::uint64_t sampleId = content_hash(z);
    std::vector<LabelId> results(tasks.size());
    auto run = [&](std::size_t t) {
        const QueryTask& task = tasks[t];
        const ImageTensor& x = valset.samples[task.sample];
        switch (task.kind) {
            case TaskKind::IntoValidation:
                results[t] = classifier.classify(paste_region(z, x, regions[task.regionIndex]));
                break;
            case TaskKind::IntoInput:
                results[t] = classifier.classify(paste_region(x, z, regions[task.regionIndex]));
                break;
            case TaskKind::Noise: {
                NoiseStream rng(options.seed, sampleId, task.regionIndex, task.sample);
                results[t] = classifier.classify(add_noise(z, pool.variances[task.regionIndex], rng, options.clipNoise));
                break;
            }
        }
    };
    parallel_for(tasks.size(), classifier.concurrent() ? options.jobs : 1, run);

    FiveMetricProfile profile;
    profile.n = n;
    for (Metric metric : kAllMetrics) profile[metric].assign(metric == Metric::NoiseInvariance ? m : regions.size(), 0.0);

    std::vector<std::array<std::size_t, kMetricCount>> counts(regions.size(), std::array<std::size_t, kMetricCount>{});
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const QueryTask& task = tasks[t];
        const LabelId label = results[t];
        auto& c = counts[task.regionIndex];
        switch (task.kind) {
            case TaskKind::IntoValidation:
                c[0] += label == zLabel;
                c[1] += label == valset.labels[task.sample];
                break;
            case TaskKind::IntoInput:
                c[2] += label == zLabel;
                c[3] += label == valset.labels[task.sample];
                break;
            case TaskKind::Noise:
                c[4] += label == zLabel;
                break;
        }
    }
    for (std::size_t j = 0; j < regions.size(); ++j) {
        profile.r[j] = fraction(counts[j][0], n);
        profile.w[j] = fraction(counts[j][1], n);
        profile.s[j] = fraction(counts[j][2], n);
        profile.is[j] = fraction(counts[j][3], n);
    }
    for (std::size_t j = 0; j < m; ++j) profile.inv[j] = fraction(counts[j][4], n);
    return profile;
}

FiveMetricProfile metric_cal(const ImageTensor& z, const ValidationSet& valset, const PoolConfig& pool,
                             Classifier& classifier, const MetricOptions& options) {
    check_shape(z, valset);
    const LabelId zLabel = classifier.classify(z);
    return metric_cal(z, zLabel, valset, pool, classifier, options);
}

}  // namespace bdt
