#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mld/error.hpp"

namespace mld {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Looks up `key` in `obj`, throwing ParseError naming the full field path.
const json& require_field(const json& obj, std::string_view key, std::string_view path);

template <class T>
T require_as(const json& obj, std::string_view key, std::string_view path) {
    const json& value = require_field(obj, key, path);
    try {
        return value.get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string(path) + "." + std::string(key) + ": " + e.what());
    }
}

/// Checks format_version and the artifact kind tag.
void check_envelope(const json& doc, std::string_view kind);
json make_envelope(std::string_view kind);

json read_json_file(const std::filesystem::path& path);
/// Pretty-printed, sorted keys, trailing newline; byte-stable for equal input.
void write_json_file(const std::filesystem::path& path, const json& doc);
std::string dump_stable(const json& doc);

/// FNV-1a 64-bit, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

} // namespace mld
