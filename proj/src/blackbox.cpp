#include "bdt/blackbox.hpp"

#include <cstring>
#include <fstream>

namespace bdt {

void QueryCounter::record(const std::string& phase) {
    total_.fetch_add(1);
    std::lock_guard lock(mutex_);
    ++perPhase_[phase];
}

std::uint64_t QueryCounter::phase(const std::string& name) const {
    std::lock_guard lock(mutex_);
    auto it = perPhase_.find(name);
    return it == perPhase_.end() ? 0 : it->second;
}

std::map<std::string, std::uint64_t> QueryCounter::per_phase() const {
    std::lock_guard lock(mutex_);
    return perPhase_;
}

LabelId CountingClassifier::classify(const ImageTensor& image) {
    std::string phase;
    {
        std::lock_guard lock(phaseMutex_);
        phase = phase_;
    }
    LabelId label = inner_.classify(image);
    counter_.record(phase);
    return label;
}

void CountingClassifier::set_phase(std::string phase) {
    std::lock_guard lock(phaseMutex_);
    phase_ = std::move(phase);
}

namespace {

std::string cache_key(const ImageTensor& image) {
    const std::uint32_t dims[3] = {image.height(), image.width(), image.channels()};
    const auto pixels = std::as_bytes(image.data());
    std::string key(sizeof dims + pixels.size(), '\0');
    std::memcpy(key.data(), dims, sizeof dims);
    std::memcpy(key.data() + sizeof dims, pixels.data(), pixels.size());
    return key;
}

}  // namespace

LabelId CachedClassifier::classify(const ImageTensor& image) {
    std::string key = cache_key(image);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            hits_.fetch_add(1);
            return it->second;
        }
    }
    const LabelId label = inner_.classify(image);
    std::lock_guard lock(mutex_);
    cache_.emplace(std::move(key), label);
    return label;
}

std::size_t CachedClassifier::size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

std::string to_string(OracleKind kind) {
    switch (kind) {
        case OracleKind::Benign: return "benign";
        case OracleKind::CenterPixel: return "centerPixel";
        case OracleKind::FourCorner: return "fourCorner";
        case OracleKind::Blended: return "blended";
        case OracleKind::FragileWatermark: return "fragileWatermark";
    }
    return "unknown";
}

OracleKind oracle_kind_from_string(const std::string& name) {
    for (OracleKind kind : {OracleKind::Benign, OracleKind::CenterPixel, OracleKind::FourCorner,
                            OracleKind::Blended, OracleKind::FragileWatermark}) {
        if (to_string(kind) == name) return kind;
    }
    throw InvalidArgument("unknown oracle kind '" + name + "'");
}

void SyntheticOracleSpec::validate() const {
    if (numClasses == 0) {
        throw InvalidArgument("oracle needs at least one class");
    }
    if (targetLabel.value >= numClasses) {
        throw InvalidArgument("target label " + std::to_string(targetLabel.value) + " >= numClasses " +
                              std::to_string(numClasses));
    }
}

void to_json(nlohmann::json& j, const SyntheticOracleSpec& spec) {
    j = nlohmann::json{{"kind", to_string(spec.kind)},
                       {"target_label", spec.targetLabel.value},
                       {"num_classes", spec.numClasses},
                       {"trigger_threshold", spec.triggerThreshold},
                       {"watermark_seed", spec.watermarkSeed.value},
                       {"correlation_threshold", spec.correlationThreshold}};
}

void from_json(const nlohmann::json& j, SyntheticOracleSpec& spec) {
    spec.kind = oracle_kind_from_string(j.at("kind").get<std::string>());
    spec.targetLabel = LabelId{j.at("target_label").get<std::uint32_t>()};
    spec.numClasses = j.at("num_classes").get<std::uint32_t>();
    spec.triggerThreshold = j.value("trigger_threshold", 0.95);
    spec.watermarkSeed = Seed{j.value("watermark_seed", std::uint64_t{0})};
    spec.correlationThreshold = j.value("correlation_threshold", 0.5);
    spec.validate();
}

SyntheticOracleSpec load_oracle_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open oracle spec " + path.string());
    }
    try {
        return nlohmann::json::parse(in).get<SyntheticOracleSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_oracle_spec(const std::filesystem::path& path, const SyntheticOracleSpec& spec) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << nlohmann::json(spec).dump(2) << '\n';
}

}  // namespace bdt
