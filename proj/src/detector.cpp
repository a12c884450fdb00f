#include "bdt/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "bdt/tensor_io.hpp"

namespace bdt {

namespace {

constexpr int kBundleVersion = 1;

std::size_t effective_jobs(const Classifier& classifier, std::size_t jobs) {
    return classifier.concurrent() ? std::max<std::size_t>(jobs, 1) : 1;
}

ValidationSet without_sample(const ValidationSet& valset, std::size_t skip) {
    ValidationSet out;
    for (std::size_t i = 0; i < valset.size(); ++i) {
        if (i == skip) continue;
        out.samples.push_back(valset.samples[i]);
        out.labels.push_back(valset.labels[i]);
    }
    return out;
}

nlohmann::json score_vector_json(const ScoreVector& scores) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : scores) {
        out.push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
    }
    return out;
}

ScoreVector score_vector_from_json(const nlohmann::json& j) {
    ScoreVector scores;
    if (!j.is_array() || j.size() != kMetricCount) {
        throw DataError("score vector must have " + std::to_string(kMetricCount) + " entries");
    }
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (!j[i].is_null()) scores[i] = j[i].get<double>();
    }
    return scores;
}

}  // namespace

DetectorBundle train_detector(const ValidationSet& valset, const PoolConfig& pool, Classifier& classifier,
                              const TrainOptions& options) {
    valset.validate();
    pool.validate();
    if (valset.size() < 2) {
        throw InvalidTrainingSet("training needs at least 2 clean validation samples");
    }
    if (options.excludeSelf && valset.size() < 3) {
        throw InvalidTrainingSet("exclude-self training needs at least 3 validation samples");
    }
    const std::size_t n = valset.size();
    MetricOptions metricOptions{options.seed, options.clipNoise, 1};

    std::vector<FiveMetricProfile> profiles(n);
    auto profile_one = [&](std::size_t l) {
        try {
            if (options.excludeSelf) {
                profiles[l] = metric_cal(valset.samples[l], valset.labels[l], without_sample(valset, l), pool,
                                         classifier, metricOptions);
            } else {
                profiles[l] = metric_cal(valset.samples[l], valset.labels[l], valset, pool, classifier, metricOptions);
            }
        } catch (const TimeoutError& e) {
            throw TimeoutError("training aborted at validation sample " + std::to_string(l) + ": " + e.what(),
                               e.payload());
        } catch (const TransportError& e) {
            throw TransportError("training aborted at validation sample " + std::to_string(l) + ": " + e.what(),
                                 e.payload());
        }
    };
    parallel_for(n, effective_jobs(classifier, options.jobs), profile_one);

    DetectorBundle bundle;
    bundle.valset = valset;
    bundle.pool = pool;
    bundle.options = options;
    bundle.metricDetectors = fit_metric_detectors(profiles, options.mask, options.kRequested);
    bundle.trainingScores.reserve(n);
    for (const auto& profile : profiles) {
        bundle.trainingScores.push_back(score_profile(bundle.metricDetectors, profile));
    }
    bundle.metaDetector = fit_meta_detector(bundle.trainingScores, options.kRequested);
    bundle.trainingProfiles = std::move(profiles);
    bundle.threshold = 0.0;
    return bundle;
}

std::vector<double> DetectorBundle::training_meta_confidences() const {
    std::vector<double> out;
    out.reserve(trainingScores.size());
    for (const auto& scores : trainingScores) out.push_back(metaDetector.score(meta_input(scores)));
    return out;
}

Decision decide(const DetectorBundle& bundle, FiveMetricProfile profile, LabelId label) {
    Decision decision;
    decision.perMetricConfidence = score_profile(bundle.metricDetectors, profile);
    decision.metaConfidence = bundle.metaDetector.score(meta_input(decision.perMetricConfidence));
    decision.flaggedPoisoned = decision.metaConfidence < bundle.threshold;
    decision.classifierLabel = label;
    decision.profile = std::move(profile);
    return decision;
}

Decision detect(const DetectorBundle& bundle, const ImageTensor& z, Classifier& classifier, std::size_t jobs) {
    if (z.shape() != bundle.valset.shape()) {
        throw ShapeError("input shape " + to_string(z.shape()) + " does not match bundle shape " +
                         to_string(bundle.valset.shape()));
    }
    return detect(bundle, z, classifier.classify(z), classifier, jobs);
}

Decision detect(const DetectorBundle& bundle, const ImageTensor& z, LabelId label, Classifier& classifier,
                std::size_t jobs) {
    if (z.shape() != bundle.valset.shape()) {
        throw ShapeError("input shape " + to_string(z.shape()) + " does not match bundle shape " +
                         to_string(bundle.valset.shape()));
    }
    MetricOptions metricOptions{bundle.options.seed, bundle.options.clipNoise, effective_jobs(classifier, jobs)};
    FiveMetricProfile profile = metric_cal(z, label, bundle.valset, bundle.pool, classifier, metricOptions);
    return decide(bundle, std::move(profile), label);
}

nlohmann::json decision_to_json(std::uint64_t id, const Decision& decision) {
    return nlohmann::json{{"id", id},
                          {"meta_confidence", decision.metaConfidence},
                          {"scores", score_vector_json(decision.perMetricConfidence)},
                          {"flag", decision.flaggedPoisoned},
                          {"label", decision.classifierLabel.value}};
}

nlohmann::json DetectorBundle::to_json(const std::filesystem::path& baseDir) const {
    nlohmann::json validation;
    const Shape& shape = valset.shape();
    validation["shape"] = {shape.height, shape.width, shape.channels};
    validation["items"] = nlohmann::json::array();
    for (std::size_t i = 0; i < valset.size(); ++i) {
        nlohmann::json item{{"label", valset.labels[i].value}, {"content_hash", to_hex(content_hash(valset.samples[i]))}};
        if (!validationFiles.empty()) {
            std::filesystem::path path = validationFiles[i];
            if (!baseDir.empty()) {
                path = std::filesystem::absolute(path).lexically_normal().lexically_relative(
                    std::filesystem::absolute(baseDir).lexically_normal());
            }
            item["path"] = path.generic_string();
        } else {
            const auto data = valset.samples[i].data();
            item["data"] = std::vector<float>(data.begin(), data.end());
        }
        validation["items"].push_back(std::move(item));
    }

    nlohmann::json detectors = nlohmann::json::object();
    for (Metric metric : kAllMetrics) {
        const auto& model = metricDetectors[static_cast<std::size_t>(metric)];
        if (model) detectors[metric_name(metric)] = model->to_json();
    }
    nlohmann::json profiles = nlohmann::json::array();
    for (const auto& profile : trainingProfiles) profiles.push_back(profile_to_json(profile, pool));
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& s : trainingScores) scores.push_back(score_vector_json(s));

    nlohmann::json j;
    j["format"] = "bdt-bundle";
    j["version"] = kBundleVersion;
    j["seed"] = options.seed.value;
    j["k_requested"] = options.kRequested;
    j["clip_noise"] = options.clipNoise;
    j["exclude_self"] = options.excludeSelf;
    j["metric_mask"] = mask_to_string(options.mask);
    j["pool"] = {{"ratios", pool.ratios},
                 {"variances", pool.variances},
                 {"extra_corner_regions", pool.extraCornerRegions},
                 {"hash", pool.hash()}};
    j["threshold"] = threshold;
    j["sweep_h"] = sweepH ? nlohmann::json(*sweepH) : nlohmann::json(nullptr);
    j["validation"] = std::move(validation);
    j["metric_detectors"] = std::move(detectors);
    j["meta_detector"] = metaDetector.to_json();
    j["training_profiles"] = std::move(profiles);
    j["training_scores"] = std::move(scores);
    return j;
}

DetectorBundle DetectorBundle::from_json(const nlohmann::json& j, const std::filesystem::path& baseDir) {
    try {
        if (j.at("format").get<std::string>() != "bdt-bundle" || j.at("version").get<int>() != kBundleVersion) {
            throw DataError("not a version " + std::to_string(kBundleVersion) + " detector bundle");
        }
        DetectorBundle bundle;
        bundle.options.seed = Seed{j.at("seed").get<std::uint64_t>()};
        bundle.options.kRequested = j.at("k_requested").get<std::size_t>();
        bundle.options.clipNoise = j.at("clip_noise").get<bool>();
        bundle.options.excludeSelf = j.at("exclude_self").get<bool>();
        bundle.options.mask = mask_from_string(j.at("metric_mask").get<std::string>());
        const auto& pool = j.at("pool");
        bundle.pool.ratios = pool.at("ratios").get<std::vector<double>>();
        bundle.pool.variances = pool.at("variances").get<std::vector<double>>();
        bundle.pool.extraCornerRegions = pool.at("extra_corner_regions").get<bool>();
        bundle.pool.validate();
        if (pool.at("hash").get<std::string>() != bundle.pool.hash()) {
            throw DataError("bundle pool hash does not match its pool");
        }
        bundle.threshold = j.at("threshold").get<double>();
        if (!std::isfinite(bundle.threshold)) {
            throw DataError("bundle threshold is not finite");
        }
        if (j.contains("sweep_h") && !j["sweep_h"].is_null()) bundle.sweepH = j["sweep_h"].get<double>();

        const auto& validation = j.at("validation");
        const auto dims = validation.at("shape").get<std::vector<std::uint32_t>>();
        if (dims.size() != 3) throw DataError("validation shape must have 3 entries");
        const Shape shape{dims[0], dims[1], dims[2]};
        for (const auto& item : validation.at("items")) {
            ImageTensor sample;
            if (item.contains("path")) {
                std::filesystem::path path = item["path"].get<std::string>();
                if (path.is_relative() && !baseDir.empty()) path = baseDir / path;
                sample = load_image(path);
                bundle.validationFiles.push_back(path);
            } else {
                sample = ImageTensor(shape, item.at("data").get<std::vector<float>>());
            }
            if (sample.shape() != shape) {
                throw DataError("validation sample shape " + to_string(sample.shape()) + " differs from bundle shape " +
                                to_string(shape));
            }
            if (to_hex(content_hash(sample)) != item.at("content_hash").get<std::string>()) {
                throw DataError("validation sample content changed since training");
            }
            bundle.valset.samples.push_back(std::move(sample));
            bundle.valset.labels.push_back(LabelId{item.at("label").get<std::uint32_t>()});
        }
        bundle.valset.validate();

        const auto& detectors = j.at("metric_detectors");
        for (Metric metric : kAllMetrics) {
            const auto slot = static_cast<std::size_t>(metric);
            const bool present = detectors.contains(metric_name(metric));
            if (present != bundle.options.mask[slot]) {
                throw DataError("metric detectors do not match the metric mask");
            }
            if (present) bundle.metricDetectors[slot] = LofModel::from_json(detectors[metric_name(metric)]);
        }
        bundle.metaDetector = LofModel::from_json(j.at("meta_detector"));
        if (bundle.metaDetector.dimension() != enabled_count(bundle.options.mask)) {
            throw DataError("meta detector dimension does not match the metric mask");
        }
        for (const auto& p : j.at("training_profiles")) bundle.trainingProfiles.push_back(profile_from_json(p));
        for (const auto& s : j.at("training_scores")) bundle.trainingScores.push_back(score_vector_from_json(s));
        return bundle;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed detector bundle: ") + e.what());
    }
}

void DetectorBundle::save(const std::filesystem::path& path) const {
    const nlohmann::json j = to_json(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write bundle " + path.string());
    }
    out << j.dump(1) << '\n';
}

DetectorBundle DetectorBundle::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open bundle " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::vector<double> default_sweep_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(0.25 * i);
    return grid;
}

nlohmann::json ThresholdSweep::to_json() const {
    nlohmann::json rowsJson = nlohmann::json::array();
    for (const auto& row : rows) {
        rowsJson.push_back({{"h", row.h},
                            {"threshold", row.threshold},
                            {"fpr", row.fpr},
                            {"tpr", row.tpr ? nlohmann::json(*row.tpr) : nlohmann::json(nullptr)}});
    }
    return nlohmann::json{{"mu", mu},
                          {"sigma", sigma},
                          {"rows", rowsJson},
                          {"chosen_h", chosenH},
                          {"chosen_threshold", chosenThreshold},
                          {"warning", warning ? nlohmann::json(*warning) : nlohmann::json(nullptr)}};
}

ThresholdSweep sweep_threshold(const DetectorBundle& bundle, std::span<const double> secondValidationConfidences,
                               std::span<const double> grid, double targetFpr,
                               std::span<const double> poisonedConfidences) {
    if (secondValidationConfidences.empty()) {
        throw InvalidArgument("second validation set is empty");
    }
    if (grid.empty()) {
        throw InvalidArgument("threshold grid is empty");
    }
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) {
            throw InvalidArgument("threshold grid must be strictly increasing");
        }
    }
    const std::vector<double> meta = bundle.training_meta_confidences();
    const double n = static_cast<double>(meta.size());
    ThresholdSweep sweep;
    sweep.mu = std::accumulate(meta.begin(), meta.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : meta) ss += (v - sweep.mu) * (v - sweep.mu);
    sweep.sigma = std::sqrt(ss / n);
    if (!(sweep.sigma > 0.0)) {
        throw DegenerateSpreadError("validation meta confidences have zero spread; every threshold equals mu = " +
                                    std::to_string(sweep.mu));
    }

    auto flagged_fraction = [](std::span<const double> confidences, double threshold) {
        const auto flagged = std::count_if(confidences.begin(), confidences.end(),
                                           [threshold](double c) { return c < threshold; });
        return static_cast<double>(flagged) / static_cast<double>(confidences.size());
    };

    std::optional<std::size_t> chosen;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        SweepRow row;
        row.h = grid[i];
        row.threshold = sweep.mu - grid[i] * sweep.sigma;
        row.fpr = flagged_fraction(secondValidationConfidences, row.threshold);
        if (!poisonedConfidences.empty()) row.tpr = flagged_fraction(poisonedConfidences, row.threshold);
        if (!chosen && row.fpr <= targetFpr) chosen = i;
        sweep.rows.push_back(row);
    }
    if (!chosen) {
        chosen = grid.size() - 1;
        sweep.warning = "no h in the grid reaches FPR <= " + std::to_string(targetFpr) + "; using the largest h";
    }
    sweep.chosenIndex = *chosen;
    sweep.chosenH = sweep.rows[*chosen].h;
    sweep.chosenThreshold = sweep.rows[*chosen].threshold;
    return sweep;
}

ThresholdSweep sweep_threshold(const DetectorBundle& bundle, std::span<const ImageTensor> secondValidation,
                               std::span<const double> grid, double targetFpr, Classifier& classifier,
                               std::span<const ImageTensor> poisoned, std::size_t jobs) {
    if (secondValidation.empty()) {
        throw InvalidArgument("second validation set is empty");
    }
    auto confidences = [&](std::span<const ImageTensor> images) {
        std::vector<double> out(images.size());
        parallel_for(images.size(), effective_jobs(classifier, jobs),
                     [&](std::size_t i) { out[i] = detect(bundle, images[i], classifier).metaConfidence; });
        return out;
    };
    const std::vector<double> clean = confidences(secondValidation);
    const std::vector<double> bad = confidences(poisoned);
    return sweep_threshold(bundle, clean, grid, targetFpr, bad);
}

}  // namespace bdt
