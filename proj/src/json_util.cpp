#include "mld/json_util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mld {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::shape: return "shape";
        case ErrorKind::range: return "range";
        case ErrorKind::parse: return "parse";
        case ErrorKind::file: return "file";
        case ErrorKind::config: return "config";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::unsupported_version: return "unsupported_version";
        case ErrorKind::consistency: return "consistency";
        case ErrorKind::empty_input: return "empty_input";
    }
    return "unknown";
}

const json& require_field(const json& obj, std::string_view key, std::string_view path) {
    if (!obj.is_object()) {
        throw ParseError(std::string(path) + ": expected an object");
    }
    auto it = obj.find(std::string(key));
    if (it == obj.end()) {
        throw ParseError(std::string(path) + "." + std::string(key) + ": missing field");
    }
    return *it;
}

void check_envelope(const json& doc, std::string_view kind) {
    const int version = require_as<int>(doc, "format_version", "$");
    if (version != kFormatVersion) {
        throw VersionError("unsupported format_version " + std::to_string(version) +
                           " (this build reads version " + std::to_string(kFormatVersion) + ")");
    }
    const auto found = require_as<std::string>(doc, "kind", "$");
    if (found != kind) {
        throw ParseError("$.kind: expected '" + std::string(kind) + "', found '" + found + "'");
    }
}

json make_envelope(std::string_view kind) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["kind"] = std::string(kind);
    return doc;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return json::parse(buffer.str());
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
    }
}

std::string dump_stable(const json& doc) { return doc.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write " + path.string());
    out << dump_stable(doc);
    if (!out) throw FileError("write failed for " + path.string());
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

} // namespace mld
