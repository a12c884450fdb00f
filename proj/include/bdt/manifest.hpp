#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bdt/core.hpp"

namespace bdt {

struct ManifestItem {
    std::string path;
    LabelId label;
    bool poisoned = false;
    std::optional<LabelId> targetLabel;
};

/// JSON dataset listing: {"shape": [h, w, c], "items": [{"path", "label",
/// "poisoned", "target_label"?}]}. Item paths are relative to the manifest.
struct DatasetManifest {
    Shape shape;
    std::vector<ManifestItem> items;
    std::filesystem::path baseDir;

    std::filesystem::path resolve(const ManifestItem& item) const;
    std::size_t poisoned_count() const;

    static DatasetManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

/// Loads one item and checks it against the manifest shape.
ImageTensor load_item(const DatasetManifest& manifest, const ManifestItem& item);

}  // namespace bdt
