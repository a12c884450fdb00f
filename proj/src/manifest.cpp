#include "bdt/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "bdt/tensor_io.hpp"

namespace bdt {

std::filesystem::path DatasetManifest::resolve(const ManifestItem& item) const {
    std::filesystem::path path = item.path;
    if (path.is_relative() && !baseDir.empty()) path = baseDir / path;
    return path;
}

std::size_t DatasetManifest::poisoned_count() const {
    std::size_t count = 0;
    for (const auto& item : items) count += item.poisoned;
    return count;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open manifest " + path.string());
    }
    DatasetManifest manifest;
    manifest.baseDir = path.parent_path();
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        const auto dims = j.at("shape").get<std::vector<std::uint32_t>>();
        if (dims.size() != 3 || dims[0] == 0 || dims[1] == 0 || dims[2] == 0) {
            throw DataError("manifest shape must be three positive integers");
        }
        manifest.shape = Shape{dims[0], dims[1], dims[2]};
        for (const auto& entry : j.at("items")) {
            ManifestItem item;
            item.path = entry.at("path").get<std::string>();
            item.label = LabelId{entry.at("label").get<std::uint32_t>()};
            item.poisoned = entry.value("poisoned", false);
            if (entry.contains("target_label") && !entry["target_label"].is_null()) {
                item.targetLabel = LabelId{entry["target_label"].get<std::uint32_t>()};
            }
            if (item.poisoned && !item.targetLabel) {
                throw DataError("poisoned item " + item.path + " has no target_label");
            }
            manifest.items.push_back(std::move(item));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return manifest;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["shape"] = {shape.height, shape.width, shape.channels};
    j["items"] = nlohmann::ordered_json::array();
    for (const auto& item : items) {
        nlohmann::ordered_json entry;
        entry["path"] = item.path;
        entry["label"] = item.label.value;
        entry["poisoned"] = item.poisoned;
        if (item.targetLabel) entry["target_label"] = item.targetLabel->value;
        j["items"].push_back(std::move(entry));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write manifest " + path.string());
    }
    out << j.dump(1) << '\n';
}

ImageTensor load_item(const DatasetManifest& manifest, const ManifestItem& item) {
    ImageTensor image = load_image(manifest.resolve(item));
    if (image.shape() != manifest.shape) {
        throw DataError(item.path + ": shape " + to_string(image.shape()) + " differs from manifest shape " +
                        to_string(manifest.shape));
    }
    return image;
}

}  // namespace bdt
