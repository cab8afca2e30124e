#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fsv/engine/episode.hpp"

namespace fsv::cli {

struct ManifestRecord {
    std::string relative_path;
    std::string class_name;
    std::string split_name;
    bool operator==(const ManifestRecord&) const = default;
};

/// CSV with the header `relative_path,class_name,split_name`. Throws
/// DataError on a missing header, bad row, unknown split, repeated path or
/// a class listed under more than one split.
std::vector<ManifestRecord> parse_manifest(std::string_view text);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// Video id used for feature files: the relative path without its extension.
std::string video_ref(const ManifestRecord& record);

/// Groups records by split and class. With `keep`, only those refs survive
/// and classes left empty are dropped.
engine::DatasetSplit to_dataset(const std::vector<ManifestRecord>& records, const std::set<std::string>* keep = nullptr);

/// Refs listed in `<features>/prepared.csv`, one per line after the header.
std::set<std::string> read_prepared(const std::filesystem::path& features_dir);

/// Manifest filtered by prepared.csv when the features directory has one.
engine::DatasetSplit load_dataset(const std::filesystem::path& manifest, const std::filesystem::path& features_dir);

}  // namespace fsv::cli
