#include "fsv/cli/manifest.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "fsv/error.hpp"

namespace fsv::cli {

namespace {

constexpr std::string_view kHeader = "relative_path,class_name,split_name";

// Splits one CSV line; fields may be double-quoted with "" escapes.
std::vector<std::string> csv_fields(std::string_view line, std::size_t lineno) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else {
            out.back() += c;
        }
    }
    if (quoted) throw DataError("manifest line " + std::to_string(lineno) + ": unterminated quote");
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace

std::vector<ManifestRecord> parse_manifest(std::string_view text) {
    std::vector<ManifestRecord> records;
    std::map<std::string, std::string> class_split;
    std::set<std::string> paths;
    std::size_t lineno = 0;
    bool header = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        if (!header) {
            if (line != kHeader) throw DataError("manifest must start with the header '" + std::string(kHeader) + "'");
            header = true;
            continue;
        }
        if (line.empty()) continue;
        auto f = csv_fields(line, lineno);
        const std::string where = "manifest line " + std::to_string(lineno) + ": ";
        if (f.size() != 3) throw DataError(where + "expected 3 fields, got " + std::to_string(f.size()));
        ManifestRecord r{f[0], f[1], f[2]};
        if (r.relative_path.empty() || r.class_name.empty()) throw DataError(where + "empty path or class");
        if (!engine::is_split_name(r.split_name)) throw DataError(where + "unknown split '" + r.split_name + "'");
        if (!paths.insert(r.relative_path).second) throw DataError(where + "repeated path " + r.relative_path);
        auto [it, fresh] = class_split.emplace(r.class_name, r.split_name);
        if (!fresh && it->second != r.split_name)
            throw DataError(where + "class '" + r.class_name + "' appears in both " + it->second + " and " +
                            r.split_name);
        records.push_back(std::move(r));
    }
    if (!header) throw DataError("manifest is empty");
    return records;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read manifest " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_manifest(ss.str());
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + tmp.string());
        os << kHeader << "\n";
        for (const auto& r : records)
            os << csv_field(r.relative_path) << "," << csv_field(r.class_name) << "," << csv_field(r.split_name)
               << "\n";
        if (!os) throw DataError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string video_ref(const ManifestRecord& record) {
    std::filesystem::path p(record.relative_path);
    return p.replace_extension().generic_string();
}

engine::DatasetSplit to_dataset(const std::vector<ManifestRecord>& records, const std::set<std::string>* keep) {
    engine::DatasetSplit data;
    for (const auto& r : records) {
        auto ref = video_ref(r);
        if (keep && !keep->contains(ref)) continue;
        data.splits[r.split_name][r.class_name].push_back(std::move(ref));
    }
    return data;
}

std::set<std::string> read_prepared(const std::filesystem::path& features_dir) {
    const auto path = features_dir / "prepared.csv";
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path.string() + "; run prepare first");
    std::set<std::string> refs;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            if (line == "ref") continue;
        }
        if (!line.empty()) refs.insert(line);
    }
    return refs;
}

engine::DatasetSplit load_dataset(const std::filesystem::path& manifest, const std::filesystem::path& features_dir) {
    const auto records = read_manifest(manifest);
    if (std::filesystem::exists(features_dir / "prepared.csv")) {
        const auto keep = read_prepared(features_dir);
        return to_dataset(records, &keep);
    }
    return to_dataset(records);
}

}  // namespace fsv::cli
