// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "bdt/cli.hpp"
#include "bdt/detector.hpp"
#include "bdt/eval.hpp"
#include "bdt/synth.hpp"
#include "oracles.hpp"

using namespace bdt;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sci(double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << v;
    return s.str();
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << std::fixed << v;
    return s.str();
}

std::vector<ImageTensor> images_of(const std::vector<SyntheticSample>& samples) {
    std::vector<ImageTensor> out;
    for (const auto& s : samples) out.push_back(s.image);
    return out;
}

DetectorBundle train_on(const SyntheticCampaign& c, Classifier& f, const MetricMask& mask = kAllMetricsMask) {
    CachedClassifier cached(f);
    const ValidationSet vs = make_validation_set(images_of(c.validation), cached);
    TrainOptions options;
    options.mask = mask;
    options.seed = Seed{1};
    return train_detector(vs, PoolConfig::defaults(), f, options);
}

std::vector<LabeledOutcome> screen(const DetectorBundle& bundle, const std::vector<SyntheticSample>& samples,
                                   Classifier& f) {
    std::vector<LabeledOutcome> out;
    for (const auto& s : samples) {
        const Decision d = detect(bundle, s.image, f);
        out.push_back({s.poisoned, d.metaConfidence, d.flaggedPoisoned, d.classifierLabel, s.label, s.targetLabel,
                       d.perMetricConfidence});
    }
    return out;
}

SynthConfig campaign_config(OracleKind kind) {
    SynthConfig config;
    config.kind = kind;
    config.numClasses = 10;
    config.validation = 30;
    config.secondValidation = 100;
    config.cleanPerClass = 20;
    config.poisonedPerClass = 20;
    config.seed = Seed{1};
    return config;
}

// ---------------------------------------------------------------------------

Verdict lof_oracle_equivalence() {
    const auto start = Clock::now();
    NoiseStream rng(1);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform(0, 49));
        const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform(0, 5));
        const std::size_t kMax = std::min<std::size_t>(20, n - 1);
        const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform(0, double(kMax)));
        const bool quantized = trial % 2 == 0;
        oracle::Points train(n, std::vector<double>(d));
        for (auto& p : train)
            for (auto& v : p) v = quantized ? std::round(rng.uniform(0, 5)) / 5 : rng.uniform(-1, 1);
        const LofModel model = LofModel::fit(train, k);
        for (int q = 0; q < 4; ++q) {
            std::vector<double> query(d);
            if (q == 0) {
                query = train[static_cast<std::size_t>(rng.uniform(0, double(n)))];
            } else {
                for (auto& v : query) v = quantized ? std::round(rng.uniform(-1, 6)) / 5 : rng.uniform(-2, 2);
            }
            worst = std::max(worst, std::abs(model.score(query) - oracle::lof_confidence(train, k, query)));
        }
    }
    const double secs = seconds_since(start);
    return {worst <= 1e-9 && secs < 10.0,
            "200 instances, max |diff| = " + sci(worst) + ", " + fmt(secs, 2) + " s"};
}

Verdict metric_quantization() {
    const auto start = Clock::now();
    NoiseStream rng(2);
    const std::array kinds = {OracleKind::Benign, OracleKind::CenterPixel, OracleKind::FourCorner,
                              OracleKind::Blended};
    std::size_t entries = 0, bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        SyntheticOracleSpec spec;
        spec.kind = kinds[static_cast<std::size_t>(trial) % kinds.size()];
        spec.numClasses = 10;
        spec.watermarkSeed = Seed{7};
        SyntheticOracle f(spec);
        const Shape shape = trial % 3 == 0 ? Shape{28, 28, 1} : Shape{12, 12, 1};
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0, 12));
        std::vector<ImageTensor> xs;
        for (std::size_t i = 0; i < n; ++i)
            xs.push_back(make_clean_image(LabelId{std::uint32_t(rng.uniform(0, 10))}, 10, shape, rng));
        ImageTensor z = make_clean_image(LabelId{std::uint32_t(rng.uniform(0, 10))}, 10, shape, rng);
        if (trial % 2 && spec.kind != OracleKind::Benign) z = apply_trigger(z, spec);
        const ValidationSet vs = make_validation_set(xs, f);
        const FiveMetricProfile p = metric_cal(z, vs, PoolConfig::defaults(), f, MetricOptions{Seed{std::uint64_t(trial)}});
        for (Metric m : kAllMetrics) {
            for (double v : p[m]) {
                ++entries;
                const double count = std::round(v * static_cast<double>(n));
                bad += v != count / static_cast<double>(n);
            }
        }
    }
    const double secs = seconds_since(start);
    return {bad == 0 && secs < 30.0, std::to_string(entries) + " entries, " + std::to_string(bad) +
                                         " off the 1/n grid, " + fmt(secs, 2) + " s"};
}

Verdict query_budget() {
    SyntheticOracleSpec spec;
    spec.kind = OracleKind::CenterPixel;
    SyntheticOracle f(spec);
    NoiseStream rng(3);
    std::vector<ImageTensor> xs;
    for (int i = 0; i < 30; ++i) xs.push_back(make_clean_image(LabelId{std::uint32_t(i % 10)}, 10, Shape{28, 28, 1}, rng));
    QueryCounter warmup;
    CountingClassifier labelCounter(f, warmup);
    CachedClassifier cached(labelCounter);
    const ValidationSet vs = make_validation_set(xs, cached);
    QueryCounter counter;
    CountingClassifier counting(f, counter);
    ImageTensor z = make_clean_image(LabelId{4}, 10, Shape{28, 28, 1}, rng);
    metric_cal(z, vs, PoolConfig::defaults(), counting, {});
    const std::uint64_t clean = counter.total();
    metric_cal(apply_trigger(z, spec), vs, PoolConfig::defaults(), counting, {});
    const std::uint64_t poisoned = counter.total() - clean;
    return {clean == 1441 && poisoned == 1441 && warmup.total() == 30,
            "n = 30: " + std::to_string(clean) + " and " + std::to_string(poisoned) + " calls (expected 1441)"};
}

Verdict brute_force_equivalence() {
    NoiseStream rng(4);
    const Shape small{4, 4, 1};
    const std::array kinds = {OracleKind::Benign, OracleKind::CenterPixel, OracleKind::FourCorner,
                              OracleKind::Blended};
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        SyntheticOracleSpec spec;
        spec.kind = kinds[static_cast<std::size_t>(trial) % kinds.size()];
        spec.numClasses = 4;
        spec.targetLabel = LabelId{1};
        spec.watermarkSeed = Seed{5};
        SyntheticOracle f(spec);
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0, 3));
        std::vector<ImageTensor> xs;
        for (std::size_t i = 0; i < n; ++i)
            xs.push_back(make_clean_image(LabelId{std::uint32_t(rng.uniform(0, 4))}, 4, small, rng));
        ImageTensor z = make_clean_image(LabelId{std::uint32_t(rng.uniform(0, 4))}, 4, small, rng);
        if (trial % 3 == 1 && spec.kind != OracleKind::Benign) z = apply_trigger(z, spec);
        const ValidationSet vs = make_validation_set(xs, f);
        const Seed seed{std::uint64_t(1000 + trial)};
        const bool clip = trial % 4 == 0;
        mismatches += !(metric_cal(z, vs, PoolConfig::defaults(), f, MetricOptions{seed, clip}) ==
                        oracle::brute_force_profile(z, xs, PoolConfig::defaults(), f, seed, clip));
    }
    return {mismatches == 0, "100 trials on 4x4 images, " + std::to_string(mismatches) + " mismatches"};
}

Verdict pattern_campaigns() {
    Verdict v;
    for (OracleKind kind : {OracleKind::CenterPixel, OracleKind::FourCorner, OracleKind::Blended}) {
        const auto start = Clock::now();
        const SyntheticCampaign c = generate_campaign(campaign_config(kind));
        SyntheticOracle f(c.oracle);
        const DetectorBundle bundle = train_on(c, f);
        const double a = auroc(screen(bundle, c.test, f));
        const double secs = seconds_since(start);
        v.pass = v.pass && a >= 0.90 && secs < 180.0;
        v.detail += (v.detail.empty() ? "" : ", ") + to_string(kind) + " AUROC=" + fmt(a) + " (" + fmt(secs, 1) + " s)";
    }
    return v;
}

Verdict fragile_watermark() {
    const SyntheticCampaign c = generate_campaign(campaign_config(OracleKind::FragileWatermark));
    SyntheticOracle f(c.oracle);
    const double all = auroc(screen(train_on(c, f), c.test, f));
    const double noInv = auroc(screen(train_on(c, f, mask_from_string("r,w,s,is")), c.test, f));
    const bool high = all >= 0.85;
    const bool drop = all - noInv >= 0.10;
    return {high && drop, "AUROC all five=" + fmt(all) + (high ? " (>= 0.85 ok)" : " (< 0.85)") +
                              ", without inv=" + fmt(noInv) + ", drop=" + fmt(all - noInv) +
                              (drop ? " (>= 0.10 ok)" : " (< 0.10)")};
}

Verdict adaptive_threshold() {
    const SyntheticCampaign c = generate_campaign(campaign_config(OracleKind::CenterPixel));
    SyntheticOracle f(c.oracle);
    DetectorBundle bundle = train_on(c, f);
    const auto second = images_of(c.secondValidation);
    const ThresholdSweep sweep = sweep_threshold(bundle, second, default_sweep_grid(), 0.05, f);
    bundle.threshold = sweep.chosenThreshold;
    const RatePair rates = tpr_fpr(screen(bundle, c.test, f), bundle.threshold);
    return {rates.second <= 0.05 && rates.first >= 0.85 && !sweep.warning,
            "chosen h=" + fmt(sweep.chosenH, 2) + ", second-set FPR=" + fmt(sweep.rows[sweep.chosenIndex].fpr, 3) +
                ", fresh clean FPR=" + fmt(rates.second, 3) + ", TPR=" + fmt(rates.first, 3)};
}

Verdict benign_safety() {
    SynthConfig config = campaign_config(OracleKind::CenterPixel);
    config.cleanPerClass = 50;
    config.poisonedPerClass = 1;
    const SyntheticCampaign c = generate_campaign(config);
    SyntheticOracleSpec benignSpec = c.oracle;
    benignSpec.kind = OracleKind::Benign;
    auto f = benign_oracle(benignSpec);
    DetectorBundle bundle = train_on(c, *f);
    bundle.threshold = sweep_threshold(bundle, images_of(c.secondValidation), default_sweep_grid(), 0.05, *f)
                           .chosenThreshold;
    std::vector<SyntheticSample> clean;
    for (const auto& s : c.test)
        if (!s.poisoned) clean.push_back(s);
    std::vector<LabeledOutcome> outcomes = screen(bundle, clean, *f);
    std::size_t flagged = 0;
    for (const auto& o : outcomes) flagged += o.flagged;
    const double fpr = static_cast<double>(flagged) / static_cast<double>(outcomes.size());
    const double pre = classification_accuracy(outcomes, false);
    const double post = classification_accuracy(outcomes, true);
    return {outcomes.size() == 500 && post >= pre - (fpr + 0.02),
            std::to_string(outcomes.size()) + " clean samples, CA " + fmt(pre, 3) + " -> " + fmt(post, 3) +
                " at swept threshold " + fmt(bundle.threshold, 3) + ", FPR " + fmt(fpr, 3)};
}

Verdict curve_correctness() {
    NoiseStream rng(9);
    double worst = 0.0;
    bool monotone = true;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<LabeledOutcome> outcomes;
        const int n = 2 + static_cast<int>(rng.uniform(0, 200));
        for (int i = 0; i < n; ++i) {
            LabeledOutcome o;
            o.isPoisoned = i == 0 ? true : i == 1 ? false : rng.uniform(0, 1) < 0.5;
            o.metaConfidence = trial % 3 == 0 ? std::round(rng.uniform(-4, 4)) : rng.uniform(-3, 3);
            outcomes.push_back(o);
        }
        worst = std::max(worst, std::abs(auroc(outcomes) - oracle::pairwise_auroc(outcomes)));
        RatePair last{0.0, 0.0};
        for (double t = -5.0; t <= 5.0; t += 0.125) {
            const RatePair r = tpr_fpr(outcomes, t);
            monotone = monotone && r.first >= last.first && r.second >= last.second;
            last = r;
        }
    }
    return {worst <= 1e-12 && monotone,
            "100 outcome sets, max |auroc - pairwise| = " + sci(worst) +
                (monotone ? ", TPR/FPR monotone" : ", monotonicity violated")};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "bdt_acceptance_determinism";
    fs::remove_all(root);
    std::array<std::array<std::string, 4>, 2> artifacts;
    for (int run = 0; run < 2; ++run) {
        const fs::path dir = root / std::to_string(run);
        const std::string data = (dir / "data").string();
        const std::string bundle = (dir / "bundle.json").string();
        const std::string oracleSpec = data + "/oracle.json";
        const std::vector<std::vector<std::string>> steps = {
            {"bdt", "synth-gen", "--out", data, "--seed", "11"},
            {"bdt", "train", "--validation", data + "/validation.json", "--oracle", oracleSpec, "--out", bundle,
             "--seed", "11"},
            {"bdt", "sweep", "--bundle", bundle, "--second-validation", data + "/second_validation.json", "--oracle",
             oracleSpec, "--report", (dir / "sweep.json").string()},
            {"bdt", "eval", "--bundle", bundle, "--manifest", data + "/test.json", "--oracle", oracleSpec, "--report",
             (dir / "report.json").string(), "--decisions", (dir / "decisions.jsonl").string(), "--curves-csv",
             (dir / "curves.csv").string(), "--ablation"},
        };
        for (const auto& step : steps) {
            std::ostringstream out, err;
            if (cli::run(step, out, err) != 0) return {false, step[1] + " failed: " + err.str()};
        }
        artifacts[static_cast<std::size_t>(run)] = {slurp(bundle), slurp(dir / "decisions.jsonl"),
                                                    slurp(dir / "report.json") + slurp(dir / "curves.csv"),
                                                    slurp(dir / "sweep.json")};
    }
    const bool same = artifacts[0] == artifacts[1];
    const bool nonEmpty = std::all_of(artifacts[0].begin(), artifacts[0].end(), [](const auto& s) { return !s.empty(); });
    return {same && nonEmpty, same ? "bundle, decisions, reports byte-identical across two runs"
                                   : "artifacts differ between runs"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"1 LOF oracle equivalence", lof_oracle_equivalence},
        {"2 metric quantization", metric_quantization},
        {"3 query budget", query_budget},
        {"4 brute-force metric equivalence", brute_force_equivalence},
        {"5 pattern-trigger campaigns", pattern_campaigns},
        {"6 fragile watermark and Inv ablation", fragile_watermark},
        {"7 adaptive threshold", adaptive_threshold},
        {"8 benign-model safety", benign_safety},
        {"9 curve correctness", curve_correctness},
        {"10 determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
