#include "bdt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bdt/blackbox.hpp"
#include "bdt/detector.hpp"
#include "bdt/eval.hpp"
#include "bdt/manifest.hpp"
#include "bdt/synth.hpp"
#include "bdt/tensor_io.hpp"

namespace bdt::cli {

namespace {

struct ClassifierSource {
    std::string oracle;
    std::string command;
    int timeoutMs = 10000;
    int retries = 0;

    void add_options(CLI::App& app) {
        app.add_option("--oracle", oracle, "Synthetic oracle spec file (JSON)");
        app.add_option("--classifier-cmd", command, "Command speaking the JSON-lines classifier protocol");
        app.add_option("--timeout-ms", timeoutMs, "Per-query timeout of the external classifier")->check(CLI::PositiveNumber);
        app.add_option("--retries", retries, "Restarts after an external classifier timeout")->check(CLI::NonNegativeNumber);
    }

    std::unique_ptr<Classifier> make() const {
        if (oracle.empty() == command.empty()) {
            throw InvalidArgument("specify exactly one of --oracle and --classifier-cmd");
        }
        if (!oracle.empty()) {
            return std::make_unique<SyntheticOracle>(load_oracle_spec(oracle));
        }
        return std::make_unique<ExternalClassifier>(
            command, ExternalClassifierOptions{std::chrono::milliseconds(timeoutMs), retries});
    }
};

/// Underlying classifier plus the counting and label-cache layers every command uses.
struct ClassifierStack {
    QueryCounter counter;
    std::unique_ptr<Classifier> base;
    std::unique_ptr<CountingClassifier> counting;
    std::unique_ptr<CachedClassifier> cached;

    explicit ClassifierStack(const ClassifierSource& source) : base(source.make()) {
        counting = std::make_unique<CountingClassifier>(*base, counter);
        cached = std::make_unique<CachedClassifier>(*counting);
    }
};

std::optional<std::uint64_t> env_seed() {
    const char* value = std::getenv("BDT_SEED");
    if (value == nullptr || *value == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long parsed = std::stoull(value, &used, 0);
        if (used != std::strlen(value)) throw std::invalid_argument("trailing characters");
        return parsed;
    } catch (const std::exception&) {
        throw InvalidArgument(std::string("BDT_SEED is not an unsigned integer: ") + value);
    }
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
    std::vector<double> values;
    const auto colon = std::count(text.begin(), text.end(), ':');
    try {
        if (colon == 2) {
            std::stringstream stream(text);
            std::string a, b, c;
            std::getline(stream, a, ':');
            std::getline(stream, b, ':');
            std::getline(stream, c, ':');
            const double start = std::stod(a);
            const double stop = std::stod(b);
            const double step = std::stod(c);
            if (!(step > 0.0)) throw InvalidArgument(what + " step must be positive");
            const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
            for (std::size_t i = 0; i <= count; ++i) values.push_back(start + step * static_cast<double>(i));
            return values;
        }
        std::stringstream stream(text);
        std::string item;
        while (std::getline(stream, item, ',')) {
            if (item.find_first_not_of(" \t") == std::string::npos) continue;
            values.push_back(std::stod(item));
        }
    } catch (const std::invalid_argument&) {
        throw InvalidArgument("cannot parse " + what + " '" + text + "'");
    } catch (const std::out_of_range&) {
        throw InvalidArgument("cannot parse " + what + " '" + text + "'");
    }
    if (values.empty()) throw InvalidArgument(what + " is empty");
    return values;
}

std::vector<ImageTensor> load_clean_images(const DatasetManifest& manifest, const std::string& role,
                                           std::vector<std::filesystem::path>* files = nullptr) {
    if (manifest.poisoned_count() != 0) {
        throw DataError(role + " manifest contains " + std::to_string(manifest.poisoned_count()) +
                        " poisoned item(s); it must be clean");
    }
    std::vector<ImageTensor> images;
    for (const auto& item : manifest.items) {
        images.push_back(load_item(manifest, item));
        if (files) files->push_back(manifest.resolve(item));
    }
    return images;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::size_t jobs_for(const Classifier& classifier, std::size_t jobs) {
    return classifier.concurrent() ? std::max<std::size_t>(jobs, 1) : 1;
}

std::string format_stat(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// synth-gen
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string kind = "centerPixel";
    std::uint32_t classes = 10;
    std::uint32_t target = 0;
    std::uint32_t height = 28;
    std::uint32_t width = 28;
    std::uint32_t channels = 1;
    std::size_t cleanPerClass = 20;
    std::size_t poisonedPerClass = 20;
    std::size_t validation = 30;
    std::size_t secondValidation = 100;
    bool balanced = false;
    double triggerThreshold = 0.95;
    double blendedThreshold = 0.5;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_synth(const SynthArgs& args, std::ostream& out) {
    SynthConfig config;
    config.kind = oracle_kind_from_string(args.kind);
    config.numClasses = args.classes;
    config.targetLabel = LabelId{args.target};
    config.shape = Shape{args.height, args.width, args.channels};
    config.cleanPerClass = args.cleanPerClass;
    config.poisonedPerClass = args.poisonedPerClass;
    config.validation = args.validation;
    config.secondValidation = args.secondValidation;
    config.balanced = args.balanced;
    config.triggerThreshold = args.triggerThreshold;
    config.blendedCorrelationThreshold = args.blendedThreshold;
    config.seed = Seed{env_seed().value_or(args.seed)};
    if (config.shape.height < 2 || config.shape.width < 2) {
        throw InvalidArgument("synthetic images must be at least 2x2");
    }
    const SyntheticCampaign campaign = generate_campaign(config);
    write_campaign(campaign, args.out);
    std::size_t poisoned = 0;
    for (const auto& s : campaign.test) poisoned += s.poisoned;
    out << "wrote " << campaign.validation.size() << " validation, " << campaign.secondValidation.size()
        << " second-validation and " << campaign.test.size() << " test images (" << poisoned << " poisoned) to "
        << args.out << "\n";
    out << "oracle " << to_string(campaign.oracle.kind) << " target=" << campaign.oracle.targetLabel.value
        << " correlation_threshold=" << campaign.oracle.correlationThreshold << "\n";
    return Ok;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string validation;
    std::string out;
    std::string metrics = "r,w,s,is,inv";
    std::size_t k = kDefaultNeighbors;
    bool extraCornerRegions = false;
    bool clipNoise = false;
    bool excludeSelf = false;
    std::string ratios;
    std::string variances;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    ClassifierSource source;
};

int cmd_train(const TrainArgs& args, std::ostream& out) {
    const DatasetManifest manifest = DatasetManifest::load(args.validation);
    std::vector<std::filesystem::path> files;
    std::vector<ImageTensor> images = load_clean_images(manifest, "validation", &files);
    if (images.size() < 2) {
        throw DataError("validation manifest needs at least 2 items, has " + std::to_string(images.size()));
    }

    PoolConfig pool = PoolConfig::defaults();
    if (!args.ratios.empty()) pool.ratios = parse_number_list(args.ratios, "ratios");
    if (!args.variances.empty()) pool.variances = parse_number_list(args.variances, "variances");
    pool.extraCornerRegions = args.extraCornerRegions;
    pool.validate();

    TrainOptions options;
    options.kRequested = args.k;
    options.mask = mask_from_string(args.metrics);
    options.seed = Seed{env_seed().value_or(args.seed)};
    options.clipNoise = args.clipNoise;
    options.excludeSelf = args.excludeSelf;

    ClassifierStack stack(args.source);
    options.jobs = jobs_for(*stack.base, args.jobs);
    stack.counting->set_phase("validation_labels");
    ValidationSet valset = make_validation_set(std::move(images), *stack.cached);
    stack.counting->set_phase("profiles");
    DetectorBundle bundle = train_detector(valset, pool, *stack.counting, options);
    bundle.validationFiles = files;
    bundle.save(args.out);

    out << "trained on " << valset.size() << " validation samples, pool " << pool.size()
        << (pool.extraCornerRegions ? " (+corner regions)" : "") << ", metrics " << mask_to_string(options.mask)
        << ", k=" << bundle.metaDetector.k() << "\n";
    out << "classifier queries: total=" << stack.counter.total();
    for (const auto& [phase, count] : stack.counter.per_phase()) out << " " << phase << "=" << count;
    out << "\n";
    for (Metric metric : kAllMetrics) {
        const auto slot = static_cast<std::size_t>(metric);
        if (!options.mask[slot]) continue;
        double lo = INFINITY, hi = -INFINITY, sum = 0.0;
        for (const auto& s : bundle.trainingScores) {
            lo = std::min(lo, *s[slot]);
            hi = std::max(hi, *s[slot]);
            sum += *s[slot];
        }
        out << "  " << metric_name(metric) << " training confidence mean=" << format_stat(sum / bundle.trainingScores.size())
            << " min=" << format_stat(lo) << " max=" << format_stat(hi) << "\n";
    }
    const auto meta = bundle.training_meta_confidences();
    double sum = 0.0;
    for (double v : meta) sum += v;
    out << "  meta training confidence mean=" << format_stat(sum / meta.size()) << "\n";
    out << "bundle written to " << args.out << "\n";
    return Ok;
}

// ---------------------------------------------------------------------------
// detect / eval shared per-item screening
// ---------------------------------------------------------------------------

struct ItemResult {
    std::optional<Decision> decision;
    std::string error;
    bool transport = false;
};

std::vector<ItemResult> screen_items(const DetectorBundle& bundle, const DatasetManifest& manifest,
                                     ClassifierStack& stack, std::size_t jobs) {
    std::vector<ItemResult> results(manifest.items.size());
    parallel_for(manifest.items.size(), jobs_for(*stack.base, jobs), [&](std::size_t i) {
        ItemResult& result = results[i];
        try {
            const ImageTensor z = load_item(manifest, manifest.items[i]);
            const LabelId label = stack.cached->classify(z);
            result.decision = detect(bundle, z, label, *stack.counting);
        } catch (const TransportError& e) {
            result.error = e.what();
            if (!e.payload().empty()) result.error += " (payload: " + e.payload() + ")";
            result.transport = true;
        } catch (const Error& e) {
            result.error = e.what();
        }
    });
    return results;
}

struct DetectArgs {
    std::string bundle;
    std::string manifest;
    std::string input;
    std::string out;
    std::size_t jobs = 1;
    ClassifierSource source;
};

int cmd_detect(const DetectArgs& args, std::ostream& out, std::ostream& err) {
    if (args.manifest.empty() == args.input.empty()) {
        throw InvalidArgument("specify exactly one of --manifest and --input");
    }
    const DetectorBundle bundle = DetectorBundle::load(args.bundle);
    DatasetManifest manifest;
    if (!args.manifest.empty()) {
        manifest = DatasetManifest::load(args.manifest);
    } else {
        manifest.shape = bundle.valset.shape();
        manifest.items.push_back({args.input, LabelId{0}, false, std::nullopt});
    }
    if (manifest.shape != bundle.valset.shape()) {
        throw DataError("manifest shape " + to_string(manifest.shape) + " does not match bundle shape " +
                        to_string(bundle.valset.shape()));
    }
    ClassifierStack stack(args.source);
    stack.counting->set_phase("detect");
    const auto results = screen_items(bundle, manifest, stack, args.jobs);

    std::ofstream file;
    std::ostream* stream = &out;
    if (!args.out.empty()) {
        file.open(args.out, std::ios::trunc);
        if (!file) throw DataError("cannot write " + args.out);
        stream = &file;
    }
    std::size_t flagged = 0, failed = 0;
    bool transportFailure = false;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.decision) {
            flagged += r.decision->flaggedPoisoned;
            *stream << decision_to_json(i, *r.decision).dump() << "\n";
        } else {
            ++failed;
            transportFailure = transportFailure || r.transport;
            *stream << nlohmann::json{{"id", i},
                                      {"path", manifest.items[i].path},
                                      {"error", r.error},
                                      {"kind", r.transport ? "transport" : "data"}}
                           .dump()
                    << "\n";
        }
    }
    err << "screened " << results.size() << " item(s): " << flagged << " flagged, " << results.size() - flagged - failed
        << " passed, " << failed << " failed; classifier queries=" << stack.counter.total() << "\n";
    if (failed == 0) return Ok;
    return transportFailure ? TransportFailure : DataFailure;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string bundle;
    std::string secondValidation;
    std::string poisoned;
    std::string grid;
    double targetFpr = 0.05;
    std::string report;
    std::string out;
    std::size_t jobs = 1;
    ClassifierSource source;
};

std::vector<double> meta_confidences(const DetectorBundle& bundle, const DatasetManifest& manifest,
                                     ClassifierStack& stack, std::size_t jobs, bool poisonedOnly) {
    DatasetManifest subset = manifest;
    subset.items.clear();
    for (const auto& item : manifest.items) {
        if (!poisonedOnly || item.poisoned) subset.items.push_back(item);
    }
    const auto results = screen_items(bundle, subset, stack, jobs);
    std::vector<double> confidences;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].decision) {
            const std::string message = subset.items[i].path + ": " + results[i].error;
            if (results[i].transport) throw TransportError(message);
            throw DataError(message);
        }
        confidences.push_back(results[i].decision->metaConfidence);
    }
    return confidences;
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
    DetectorBundle bundle = DetectorBundle::load(args.bundle);
    const DatasetManifest second = DatasetManifest::load(args.secondValidation);
    if (second.poisoned_count() != 0) {
        throw DataError("second validation manifest must be clean");
    }
    if (second.items.empty()) {
        throw InvalidArgument("second validation set is empty");
    }
    const std::vector<double> grid = args.grid.empty() ? default_sweep_grid() : parse_number_list(args.grid, "grid");

    ClassifierStack stack(args.source);
    stack.counting->set_phase("sweep");
    const std::vector<double> clean = meta_confidences(bundle, second, stack, args.jobs, false);
    std::vector<double> poisoned;
    if (!args.poisoned.empty()) {
        poisoned = meta_confidences(bundle, DatasetManifest::load(args.poisoned), stack, args.jobs, true);
    }
    const ThresholdSweep sweep = sweep_threshold(bundle, clean, grid, args.targetFpr, poisoned);

    out << "mu=" << format_stat(sweep.mu) << " sigma=" << format_stat(sweep.sigma) << "\n";
    out << "h\tthreshold\tfpr" << (poisoned.empty() ? "" : "\ttpr") << "\n";
    for (const auto& row : sweep.rows) {
        out << format_stat(row.h) << "\t" << format_stat(row.threshold) << "\t" << format_stat(row.fpr);
        if (row.tpr) out << "\t" << format_stat(*row.tpr);
        out << "\n";
    }
    out << "chosen h=" << format_stat(sweep.chosenH) << " threshold=" << format_stat(sweep.chosenThreshold) << "\n";
    if (sweep.warning) err << "warning: " << *sweep.warning << "\n";

    if (!args.report.empty()) {
        nlohmann::json report = sweep.to_json();
        report["target_fpr"] = args.targetFpr;
        write_text(args.report, report.dump(2) + "\n");
    }
    bundle.threshold = sweep.chosenThreshold;
    bundle.sweepH = sweep.chosenH;
    bundle.save(args.out.empty() ? args.bundle : args.out);
    return Ok;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string bundle;
    std::string manifest;
    std::string report;
    std::string curvesCsv;
    std::string scalarsCsv;
    std::string decisions;
    std::string caConvention = "errors";
    bool ablation = false;
    std::size_t jobs = 1;
    ClassifierSource source;
};

int cmd_eval(const EvalArgs& args, std::ostream& out) {
    const DetectorBundle bundle = DetectorBundle::load(args.bundle);
    const DatasetManifest manifest = DatasetManifest::load(args.manifest);
    if (manifest.poisoned_count() == 0 || manifest.poisoned_count() == manifest.items.size()) {
        throw UndefinedRateError("evaluation manifest needs both clean and poisoned items");
    }
    FilterConvention convention;
    if (args.caConvention == "errors") {
        convention = FilterConvention::RejectedCountAsErrors;
    } else if (args.caConvention == "exclude") {
        convention = FilterConvention::ExcludeRejected;
    } else {
        throw InvalidArgument("--ca-convention must be 'errors' or 'exclude'");
    }

    ClassifierStack stack(args.source);
    stack.counting->set_phase("eval");
    const auto results = screen_items(bundle, manifest, stack, args.jobs);

    std::vector<LabeledOutcome> outcomes;
    std::string decisionLines;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& item = manifest.items[i];
        if (!results[i].decision) {
            const std::string message = item.path + ": " + results[i].error;
            if (results[i].transport) throw TransportError(message);
            throw DataError(message);
        }
        const Decision& d = *results[i].decision;
        decisionLines += decision_to_json(i, d).dump() + "\n";
        outcomes.push_back({item.poisoned, d.metaConfidence, d.flaggedPoisoned, d.classifierLabel, item.label,
                            item.targetLabel, d.perMetricConfidence});
    }
    const EvalReport report = build_report(outcomes, bundle.threshold, args.ablation, convention);

    if (!args.report.empty()) write_text(args.report, emit_report(report, ReportFormat::Json));
    if (!args.curvesCsv.empty()) write_text(args.curvesCsv, emit_report(report, ReportFormat::CurvesCsv));
    if (!args.scalarsCsv.empty()) write_text(args.scalarsCsv, emit_report(report, ReportFormat::ScalarsCsv));
    if (!args.decisions.empty()) write_text(args.decisions, decisionLines);

    out << "items=" << outcomes.size() << " (clean " << report.numClean << ", poisoned " << report.numPoisoned
        << ") threshold=" << format_stat(report.threshold) << "\n";
    out << "TPR=" << format_stat(report.tpr) << " FPR=" << format_stat(report.fpr)
        << " AUROC=" << format_stat(report.auroc) << " AUPR=" << format_stat(report.aupr) << "\n";
    out << "CA " << format_stat(report.caBefore) << " -> " << format_stat(report.caAfter) << ", ASR "
        << format_stat(report.asrBefore) << " -> " << format_stat(report.asrAfter) << "\n";
    if (report.ablation) {
        out << "metric\tTPR@0\n";
        for (Metric metric : kAllMetrics) {
            const auto& tpr = report.ablation->tpr[static_cast<std::size_t>(metric)];
            out << metric_name(metric) << "\t" << (tpr ? format_stat(*tpr) : std::string("-")) << "\n";
        }
        out << "or\t" << format_stat(report.ablation->orTpr) << " (FPR " << format_stat(report.ablation->orFpr)
            << ")\n";
    }
    return Ok;
}

// ---------------------------------------------------------------------------
// config injection
// ---------------------------------------------------------------------------

bool truthy(const std::string& value) {
    std::string v = value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidArgument("config value '" + value + "' is not a boolean");
}

// Returns args with `--config FILE` removed and values from FILE inserted for
// options of `sub` the command line leaves unset.
std::vector<std::string> apply_config(const std::vector<std::string>& args, CLI::App& sub, std::size_t subIndex) {
    std::vector<std::string> stripped;
    std::optional<std::string> configPath;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw InvalidArgument("--config needs a file");
            configPath = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            configPath = args[i].substr(9);
        } else {
            stripped.push_back(args[i]);
        }
    }
    if (!configPath) return stripped;

    auto given = [&](const std::string& name) {
        for (const auto& a : stripped) {
            if (a == name || a.rfind(name + "=", 0) == 0) return true;
        }
        return false;
    };
    std::vector<std::string> injected;
    for (const auto& [key, value] : parse_flat_config(*configPath)) {
        const std::string name = "--" + key;
        CLI::Option* option = sub.get_option_no_throw(name);
        if (option == nullptr || given(name)) continue;
        if (option->get_expected_max() == 0) {
            if (truthy(value)) injected.push_back(name);
        } else {
            injected.push_back(name);
            injected.push_back(value);
        }
    }
    std::vector<std::string> out(stripped.begin(), stripped.begin() + static_cast<std::ptrdiff_t>(subIndex + 1));
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), stripped.begin() + static_cast<std::ptrdiff_t>(subIndex + 1), stripped.end());
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open config " + path.string());
    }
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t lineNo = 0;
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
    };
    while (std::getline(in, line)) {
        ++lineNo;
        std::string body = line;
        bool quoted = false;
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i] == '"') quoted = !quoted;
            if (body[i] == '#' && !quoted) {
                body.resize(i);
                break;
            }
        }
        body = trim(body);
        if (body.empty()) continue;
        if (body.front() == '[') {
            throw DataError(path.string() + ":" + std::to_string(lineNo) + ": sections are not supported");
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(lineNo) + ": expected key = value");
        }
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        std::replace(key.begin(), key.end(), '_', '-');
        if (key.empty()) {
            throw DataError(path.string() + ":" + std::to_string(lineNo) + ": empty key");
        }
        values[key] = value;
    }
    return values;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Black-box detector of trigger-bearing inputs to possibly backdoored classifiers", "bdt"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    app.add_option("--config", "Flat key = value file with option defaults")->expected(1);

    SynthArgs synth;
    auto* synthCmd = app.add_subcommand("synth-gen", "Generate a seeded synthetic campaign");
    synthCmd->add_option("--kind", synth.kind, "benign, centerPixel, fourCorner, blended or fragileWatermark");
    synthCmd->add_option("--classes", synth.classes)->check(CLI::Range(1u, 1000u));
    synthCmd->add_option("--target", synth.target, "Attacker-chosen label");
    synthCmd->add_option("--height", synth.height);
    synthCmd->add_option("--width", synth.width);
    synthCmd->add_option("--channels", synth.channels)->check(CLI::Range(1u, 16u));
    synthCmd->add_option("--clean-per-class", synth.cleanPerClass);
    synthCmd->add_option("--poisoned-per-class", synth.poisonedPerClass);
    synthCmd->add_option("--validation", synth.validation, "Size of the first clean validation set");
    synthCmd->add_option("--second-validation", synth.secondValidation, "Size of the second clean validation set");
    synthCmd->add_flag("--balanced", synth.balanced, "Cycle classes in the validation sets");
    synthCmd->add_option("--trigger-threshold", synth.triggerThreshold);
    synthCmd->add_option("--blended-threshold", synth.blendedThreshold);
    synthCmd->add_option("--seed", synth.seed);
    synthCmd->add_option("--out", synth.out, "Output directory")->required();

    TrainArgs train;
    auto* trainCmd = app.add_subcommand("train", "Fit the detector bundle on a clean validation manifest");
    trainCmd->add_option("--validation", train.validation, "Clean validation manifest")->required();
    trainCmd->add_option("--out", train.out, "Bundle file to write")->required();
    trainCmd->add_option("--metrics", train.metrics, "Comma-separated subset of r,w,s,is,inv");
    trainCmd->add_option("--k", train.k, "Requested LOF neighbors")->check(CLI::PositiveNumber);
    trainCmd->add_flag("--extra-corner-regions", train.extraCornerRegions);
    trainCmd->add_flag("--clip-noise", train.clipNoise);
    trainCmd->add_flag("--exclude-self", train.excludeSelf);
    trainCmd->add_option("--ratios", train.ratios, "Comma-separated region ratios");
    trainCmd->add_option("--variances", train.variances, "Comma-separated noise variances");
    trainCmd->add_option("--seed", train.seed);
    trainCmd->add_option("--jobs", train.jobs)->check(CLI::PositiveNumber);
    train.source.add_options(*trainCmd);

    DetectArgs detectArgs;
    auto* detectCmd = app.add_subcommand("detect", "Screen inputs with a trained bundle");
    detectCmd->add_option("--bundle", detectArgs.bundle)->required();
    detectCmd->add_option("--manifest", detectArgs.manifest);
    detectCmd->add_option("--input", detectArgs.input, "Single BDT1 or PNG file");
    detectCmd->add_option("--out", detectArgs.out, "Decision stream file (default stdout)");
    detectCmd->add_option("--jobs", detectArgs.jobs)->check(CLI::PositiveNumber);
    detectArgs.source.add_options(*detectCmd);

    SweepArgs sweepArgs;
    auto* sweepCmd = app.add_subcommand("sweep", "Pick thres = mu - h * sigma on a second clean set");
    sweepCmd->add_option("--bundle", sweepArgs.bundle)->required();
    sweepCmd->add_option("--second-validation", sweepArgs.secondValidation)->required();
    sweepCmd->add_option("--poisoned", sweepArgs.poisoned, "Manifest whose poisoned items give a TPR column");
    sweepCmd->add_option("--grid", sweepArgs.grid, "h values: a,b,c or start:stop:step (default 0:5:0.25)");
    sweepCmd->add_option("--target-fpr", sweepArgs.targetFpr)->check(CLI::Range(0.0, 1.0));
    sweepCmd->add_option("--report", sweepArgs.report, "Sweep table JSON");
    sweepCmd->add_option("--out", sweepArgs.out, "Updated bundle (default: overwrite --bundle)");
    sweepCmd->add_option("--jobs", sweepArgs.jobs)->check(CLI::PositiveNumber);
    sweepArgs.source.add_options(*sweepCmd);

    EvalArgs evalArgs;
    auto* evalCmd = app.add_subcommand("eval", "Evaluate a bundle on a labeled manifest");
    evalCmd->add_option("--bundle", evalArgs.bundle)->required();
    evalCmd->add_option("--manifest", evalArgs.manifest)->required();
    evalCmd->add_option("--report", evalArgs.report, "Report JSON");
    evalCmd->add_option("--curves-csv", evalArgs.curvesCsv, "ROC and PR points (kind,x,y)");
    evalCmd->add_option("--scalars-csv", evalArgs.scalarsCsv, "Scalar metrics (metric,value)");
    evalCmd->add_option("--decisions", evalArgs.decisions, "Decision stream file");
    evalCmd->add_option("--ca-convention", evalArgs.caConvention, "errors (default) or exclude");
    evalCmd->add_flag("--ablation", evalArgs.ablation, "Per-metric TPR table");
    evalCmd->add_option("--jobs", evalArgs.jobs)->check(CLI::PositiveNumber);
    evalArgs.source.add_options(*evalCmd);

    try {
        std::vector<std::string> effective = args;
        for (std::size_t i = 1; i < args.size(); ++i) {
            if (auto* sub = app.get_subcommand_no_throw(args[i]); sub != nullptr) {
                effective = apply_config(args, *sub, i);
                break;
            }
            if (args[i] == "--config") ++i;
        }
        std::vector<const char*> argv;
        for (const auto& a : effective) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? Ok : UsageError;
        }

        if (synthCmd->parsed()) return cmd_synth(synth, out);
        if (trainCmd->parsed()) return cmd_train(train, out);
        if (detectCmd->parsed()) return cmd_detect(detectArgs, out, err);
        if (sweepCmd->parsed()) return cmd_sweep(sweepArgs, out, err);
        if (evalCmd->parsed()) return cmd_eval(evalArgs, out);
        return UsageError;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return UsageError;
    } catch (const TransportError& e) {
        err << "classifier error: " << e.what();
        if (!e.payload().empty()) err << " (payload: " << e.payload() << ")";
        err << "\n";
        return TransportFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return DataFailure;
    }
}

}  // namespace bdt::cli
