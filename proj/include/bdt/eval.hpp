#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bdt/core.hpp"
#include "bdt/novelty.hpp"

namespace bdt {

class UndefinedRateError : public Error {
public:
    using Error::Error;
};

/// Ground truth and detector output for one test input. Poisoned is the
/// positive class; a sample is flagged when its meta confidence is below the
/// threshold.
struct LabeledOutcome {
    bool isPoisoned = false;
    double metaConfidence = 0.0;
    bool flagged = false;
    LabelId classifierLabel;
    LabelId groundTruthLabel;
    std::optional<LabelId> targetLabel;
    ScoreVector perMetricConfidence;
};

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

/// How rejected clean inputs enter the post-filtering CA (and rejected
/// poisoned inputs the post-filtering ASR).
enum class FilterConvention {
    /// Rejected samples stay in the denominator and count as failures.
    RejectedCountAsErrors,
    /// Rejected samples are dropped from the denominator.
    ExcludeRejected,
};

struct RatePair {
    double first = 0.0;
    double second = 0.0;
};

struct AblationResult {
    std::array<std::optional<double>, kMetricCount> tpr;
    double orTpr = 0.0;
    double orFpr = 0.0;
    bool operator==(const AblationResult&) const = default;
};

struct EvalReport {
    double threshold = 0.0;
    std::size_t numClean = 0;
    std::size_t numPoisoned = 0;
    double tpr = 0.0;
    double fpr = 0.0;
    double auroc = 0.0;
    double aupr = 0.0;
    double caBefore = 0.0;
    double caAfter = 0.0;
    double asrBefore = 0.0;
    double asrAfter = 0.0;
    std::optional<AblationResult> ablation;
    std::vector<CurvePoint> rocPoints;  // (FPR, TPR)
    std::vector<CurvePoint> prPoints;   // (recall, precision)

    bool operator==(const EvalReport&) const = default;
};

/// (TPR, FPR) with the flag rule metaConfidence < threshold.
RatePair tpr_fpr(const std::vector<LabeledOutcome>& outcomes, double threshold);

/// P(poisoned confidence < clean confidence) with ties counted 1/2.
double auroc(const std::vector<LabeledOutcome>& outcomes);

/// ROC points from (0,0) to (1,1), one step per distinct confidence.
std::vector<CurvePoint> roc_curve(const std::vector<LabeledOutcome>& outcomes);

/// Step-wise area under the precision-recall curve (average precision).
double aupr(const std::vector<LabeledOutcome>& outcomes);

/// (recall, precision) points, starting at recall 0 with precision 1.
std::vector<CurvePoint> pr_curve(const std::vector<LabeledOutcome>& outcomes);

/// Clean inputs classified as their ground truth (unflagged ones only when filtering).
double classification_accuracy(const std::vector<LabeledOutcome>& outcomes, bool withFiltering,
                               FilterConvention convention = FilterConvention::RejectedCountAsErrors);
/// Poisoned inputs classified as their target label (unflagged ones only when filtering).
double attack_success_rate(const std::vector<LabeledOutcome>& outcomes, bool withFiltering,
                           FilterConvention convention = FilterConvention::RejectedCountAsErrors);

/// (CA, ASR), optionally after discarding flagged samples.
RatePair ca_asr(const std::vector<LabeledOutcome>& outcomes, bool withFiltering,
                FilterConvention convention = FilterConvention::RejectedCountAsErrors);

/// TPR of each enabled metric detector alone at threshold 0, and TPR/FPR of their OR.
AblationResult per_metric_ablation(const std::vector<LabeledOutcome>& outcomes);

EvalReport build_report(const std::vector<LabeledOutcome>& outcomes, double threshold, bool withAblation,
                        FilterConvention convention = FilterConvention::RejectedCountAsErrors);

enum class ReportFormat { Json, CurvesCsv, ScalarsCsv };

ReportFormat report_format_from_string(const std::string& name);
std::string emit_report(const EvalReport& report, ReportFormat format);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace bdt
