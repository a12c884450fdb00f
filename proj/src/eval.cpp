#include "bdt/eval.hpp"

#include <algorithm>
#include <charconv>
#include <map>

namespace bdt {

namespace {

struct ClassCounts {
    std::size_t poisoned = 0;
    std::size_t clean = 0;
};

ClassCounts count_classes(const std::vector<LabeledOutcome>& outcomes) {
    ClassCounts counts;
    for (const auto& o : outcomes) (o.isPoisoned ? counts.poisoned : counts.clean) += 1;
    return counts;
}

void require_both(const ClassCounts& counts, const char* what) {
    if (counts.poisoned == 0 || counts.clean == 0) {
        throw UndefinedRateError(std::string(what) + " needs at least one poisoned and one clean outcome");
    }
}

// Confidence groups in ascending order: (poisoned count, clean count) per distinct value.
std::vector<ClassCounts> confidence_groups(const std::vector<LabeledOutcome>& outcomes) {
    std::map<double, ClassCounts> groups;
    for (const auto& o : outcomes) (o.isPoisoned ? groups[o.metaConfidence].poisoned : groups[o.metaConfidence].clean) += 1;
    std::vector<ClassCounts> out;
    out.reserve(groups.size());
    for (const auto& [value, counts] : groups) out.push_back(counts);
    return out;
}

std::string format_number(double value) {
    char buffer[64];
    auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
    return std::string(buffer, result.ptr);
}

nlohmann::json curve_json(const std::vector<CurvePoint>& points) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : points) out.push_back({p.x, p.y});
    return out;
}

std::vector<CurvePoint> curve_from_json(const nlohmann::json& j) {
    std::vector<CurvePoint> points;
    for (const auto& p : j) points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return points;
}

}  // namespace

RatePair tpr_fpr(const std::vector<LabeledOutcome>& outcomes, double threshold) {
    const ClassCounts counts = count_classes(outcomes);
    require_both(counts, "TPR/FPR");
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& o : outcomes) {
        if (o.metaConfidence < threshold) (o.isPoisoned ? tp : fp) += 1;
    }
    return {static_cast<double>(tp) / static_cast<double>(counts.poisoned),
            static_cast<double>(fp) / static_cast<double>(counts.clean)};
}

double auroc(const std::vector<LabeledOutcome>& outcomes) {
    const ClassCounts counts = count_classes(outcomes);
    require_both(counts, "AUROC");
    double favorable = 0.0;
    std::size_t cleanAbove = counts.clean;
    for (const auto& group : confidence_groups(outcomes)) {
        cleanAbove -= group.clean;
        favorable += static_cast<double>(group.poisoned) *
                     (static_cast<double>(cleanAbove) + 0.5 * static_cast<double>(group.clean));
    }
    return favorable / (static_cast<double>(counts.poisoned) * static_cast<double>(counts.clean));
}

std::vector<CurvePoint> roc_curve(const std::vector<LabeledOutcome>& outcomes) {
    const ClassCounts counts = count_classes(outcomes);
    require_both(counts, "ROC");
    std::vector<CurvePoint> points{{0.0, 0.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& group : confidence_groups(outcomes)) {
        tp += group.poisoned;
        fp += group.clean;
        points.push_back({static_cast<double>(fp) / static_cast<double>(counts.clean),
                          static_cast<double>(tp) / static_cast<double>(counts.poisoned)});
    }
    return points;
}

double aupr(const std::vector<LabeledOutcome>& outcomes) {
    const ClassCounts counts = count_classes(outcomes);
    if (counts.poisoned == 0) {
        throw UndefinedRateError("AUPR needs at least one poisoned outcome");
    }
    double area = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& group : confidence_groups(outcomes)) {
        tp += group.poisoned;
        fp += group.clean;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += static_cast<double>(group.poisoned) / static_cast<double>(counts.poisoned) * precision;
    }
    return area;
}

std::vector<CurvePoint> pr_curve(const std::vector<LabeledOutcome>& outcomes) {
    const ClassCounts counts = count_classes(outcomes);
    if (counts.poisoned == 0) {
        throw UndefinedRateError("precision-recall curve needs at least one poisoned outcome");
    }
    std::vector<CurvePoint> points{{0.0, 1.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const auto& group : confidence_groups(outcomes)) {
        tp += group.poisoned;
        fp += group.clean;
        points.push_back({static_cast<double>(tp) / static_cast<double>(counts.poisoned),
                          static_cast<double>(tp) / static_cast<double>(tp + fp)});
    }
    return points;
}

double classification_accuracy(const std::vector<LabeledOutcome>& outcomes, bool withFiltering,
                               FilterConvention convention) {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        if (o.isPoisoned) continue;
        ++total;
        if (withFiltering && o.flagged) continue;
        ++kept;
        correct += o.classifierLabel == o.groundTruthLabel;
    }
    if (total == 0) {
        throw UndefinedRateError("CA needs at least one clean outcome");
    }
    if (withFiltering && convention == FilterConvention::ExcludeRejected) {
        return kept == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(kept);
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

double attack_success_rate(const std::vector<LabeledOutcome>& outcomes, bool withFiltering,
                           FilterConvention convention) {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t hits = 0;
    for (const auto& o : outcomes) {
        if (!o.isPoisoned) continue;
        if (!o.targetLabel) {
            throw InvalidArgument("poisoned outcome lacks a target label");
        }
        ++total;
        if (withFiltering && o.flagged) continue;
        ++kept;
        hits += o.classifierLabel == *o.targetLabel;
    }
    if (total == 0) {
        throw UndefinedRateError("ASR needs at least one poisoned outcome");
    }
    if (withFiltering && convention == FilterConvention::ExcludeRejected) {
        return kept == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(kept);
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

RatePair ca_asr(const std::vector<LabeledOutcome>& outcomes, bool withFiltering, FilterConvention convention) {
    return {classification_accuracy(outcomes, withFiltering, convention),
            attack_success_rate(outcomes, withFiltering, convention)};
}

AblationResult per_metric_ablation(const std::vector<LabeledOutcome>& outcomes) {
    const ClassCounts counts = count_classes(outcomes);
    require_both(counts, "ablation");
    AblationResult result;
    std::array<std::size_t, kMetricCount> flaggedPoisoned{};
    std::array<bool, kMetricCount> present{};
    std::size_t orTp = 0;
    std::size_t orFp = 0;
    for (const auto& o : outcomes) {
        bool any = false;
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const auto& score = o.perMetricConfidence[m];
            if (!score) continue;
            present[m] = true;
            const bool flag = *score < 0.0;
            any = any || flag;
            if (flag && o.isPoisoned) ++flaggedPoisoned[m];
        }
        if (any) (o.isPoisoned ? orTp : orFp) += 1;
    }
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        if (present[m]) {
            result.tpr[m] = static_cast<double>(flaggedPoisoned[m]) / static_cast<double>(counts.poisoned);
        }
    }
    result.orTpr = static_cast<double>(orTp) / static_cast<double>(counts.poisoned);
    result.orFpr = static_cast<double>(orFp) / static_cast<double>(counts.clean);
    return result;
}

EvalReport build_report(const std::vector<LabeledOutcome>& outcomes, double threshold, bool withAblation,
                        FilterConvention convention) {
    EvalReport report;
    const ClassCounts counts = count_classes(outcomes);
    require_both(counts, "evaluation");
    report.threshold = threshold;
    report.numClean = counts.clean;
    report.numPoisoned = counts.poisoned;
    const RatePair rates = tpr_fpr(outcomes, threshold);
    report.tpr = rates.first;
    report.fpr = rates.second;
    report.auroc = auroc(outcomes);
    report.aupr = aupr(outcomes);
    const RatePair before = ca_asr(outcomes, false, convention);
    const RatePair after = ca_asr(outcomes, true, convention);
    report.caBefore = before.first;
    report.asrBefore = before.second;
    report.caAfter = after.first;
    report.asrAfter = after.second;
    if (withAblation) report.ablation = per_metric_ablation(outcomes);
    report.rocPoints = roc_curve(outcomes);
    report.prPoints = pr_curve(outcomes);
    return report;
}

ReportFormat report_format_from_string(const std::string& name) {
    if (name == "json") return ReportFormat::Json;
    if (name == "csv" || name == "curves-csv") return ReportFormat::CurvesCsv;
    if (name == "scalars-csv") return ReportFormat::ScalarsCsv;
    throw InvalidArgument("unknown report format '" + name + "' (expected json, csv or scalars-csv)");
}

namespace {

std::vector<std::pair<std::string, double>> scalar_rows(const EvalReport& report) {
    std::vector<std::pair<std::string, double>> rows = {
        {"threshold", report.threshold},
        {"num_clean", static_cast<double>(report.numClean)},
        {"num_poisoned", static_cast<double>(report.numPoisoned)},
        {"tpr", report.tpr},
        {"fpr", report.fpr},
        {"auroc", report.auroc},
        {"aupr", report.aupr},
        {"ca_before", report.caBefore},
        {"ca_after", report.caAfter},
        {"asr_before", report.asrBefore},
        {"asr_after", report.asrAfter},
    };
    if (report.ablation) {
        for (Metric metric : kAllMetrics) {
            const auto& tpr = report.ablation->tpr[static_cast<std::size_t>(metric)];
            if (tpr) rows.emplace_back("tpr_" + metric_name(metric), *tpr);
        }
        rows.emplace_back("or_tpr", report.ablation->orTpr);
        rows.emplace_back("or_fpr", report.ablation->orFpr);
    }
    return rows;
}

}  // namespace

std::string emit_report(const EvalReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::Json: {
            nlohmann::ordered_json j;
            j["schema_version"] = 1;
            j["threshold"] = report.threshold;
            j["num_clean"] = report.numClean;
            j["num_poisoned"] = report.numPoisoned;
            j["tpr"] = report.tpr;
            j["fpr"] = report.fpr;
            j["auroc"] = report.auroc;
            j["aupr"] = report.aupr;
            j["ca_before"] = report.caBefore;
            j["ca_after"] = report.caAfter;
            j["asr_before"] = report.asrBefore;
            j["asr_after"] = report.asrAfter;
            if (report.ablation) {
                nlohmann::ordered_json perMetric;
                for (Metric metric : kAllMetrics) {
                    const auto& tpr = report.ablation->tpr[static_cast<std::size_t>(metric)];
                    perMetric[metric_name(metric)] = tpr ? nlohmann::ordered_json(*tpr) : nlohmann::ordered_json(nullptr);
                }
                j["per_metric_tpr"] = perMetric;
                j["or_tpr"] = report.ablation->orTpr;
                j["or_fpr"] = report.ablation->orFpr;
            } else {
                j["per_metric_tpr"] = nullptr;
            }
            j["roc"] = curve_json(report.rocPoints);
            j["pr"] = curve_json(report.prPoints);
            return j.dump(2) + "\n";
        }
        case ReportFormat::CurvesCsv: {
            std::string out = "kind,x,y\n";
            std::vector<CurvePoint> roc = report.rocPoints;
            if (roc.empty() || roc.front() != CurvePoint{0.0, 0.0}) roc.insert(roc.begin(), {0.0, 0.0});
            if (roc.back() != CurvePoint{1.0, 1.0}) roc.push_back({1.0, 1.0});
            std::stable_sort(roc.begin(), roc.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.x < b.x; });
            for (const auto& p : roc) out += "roc," + format_number(p.x) + "," + format_number(p.y) + "\n";
            for (const auto& p : report.prPoints) out += "pr," + format_number(p.x) + "," + format_number(p.y) + "\n";
            return out;
        }
        case ReportFormat::ScalarsCsv: {
            std::string out = "metric,value\n";
            for (const auto& [name, value] : scalar_rows(report)) out += name + "," + format_number(value) + "\n";
            return out;
        }
    }
    throw InvalidArgument("unknown report format");
}

EvalReport report_from_json(const nlohmann::json& j) {
    if (j.at("schema_version").get<int>() != 1) {
        throw DataError("unsupported report schema version");
    }
    EvalReport report;
    report.threshold = j.at("threshold").get<double>();
    report.numClean = j.at("num_clean").get<std::size_t>();
    report.numPoisoned = j.at("num_poisoned").get<std::size_t>();
    report.tpr = j.at("tpr").get<double>();
    report.fpr = j.at("fpr").get<double>();
    report.auroc = j.at("auroc").get<double>();
    report.aupr = j.at("aupr").get<double>();
    report.caBefore = j.at("ca_before").get<double>();
    report.caAfter = j.at("ca_after").get<double>();
    report.asrBefore = j.at("asr_before").get<double>();
    report.asrAfter = j.at("asr_after").get<double>();
    if (!j.at("per_metric_tpr").is_null()) {
        AblationResult ablation;
        for (Metric metric : kAllMetrics) {
            const auto& value = j["per_metric_tpr"].at(metric_name(metric));
            if (!value.is_null()) ablation.tpr[static_cast<std::size_t>(metric)] = value.get<double>();
        }
        ablation.orTpr = j.at("or_tpr").get<double>();
        ablation.orFpr = j.at("or_fpr").get<double>();
        report.ablation = ablation;
    }
    report.rocPoints = curve_from_json(j.at("roc"));
    report.prPoints = curve_from_json(j.at("pr"));
    return report;
}

}  // namespace bdt
