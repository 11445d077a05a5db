#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "mld/json_util.hpp"

using namespace mld;

TEST_CASE("envelopes carry version and kind") {
    json doc = make_envelope("thing");
    CHECK(doc["format_version"] == kFormatVersion);
    CHECK_NOTHROW(check_envelope(doc, "thing"));
    CHECK_THROWS_AS(check_envelope(doc, "other"), ParseError);
    doc["format_version"] = 0;
    CHECK_THROWS_AS(check_envelope(doc, "thing"), VersionError);
    CHECK_THROWS_AS(check_envelope(json::object(), "thing"), ParseError);
}

TEST_CASE("require_as names the field path") {
    const json doc = {{"a", "text"}};
    try {
        require_as<int>(doc, "a", "$.outer");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("$.outer.a") != std::string::npos);
    }
    CHECK_THROWS_AS(require_field(doc, "b", "$"), ParseError);
}

TEST_CASE("json files are stable and report byte offsets") {
    const auto dir = fixtures::scratch_dir("json");
    const json doc = {{"z", 1}, {"a", {1.5, 0.1}}};
    write_json_file(dir / "sub" / "x.json", doc);
    std::ifstream in(dir / "sub" / "x.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text == dump_stable(doc));
    CHECK(text.find("\"a\"") < text.find("\"z\""));
    CHECK(text.back() == '\n');
    CHECK(read_json_file(dir / "sub" / "x.json") == doc);

    std::ofstream(dir / "bad.json") << "{\"a\": [1, 2,";
    try {
        read_json_file(dir / "bad.json");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
    CHECK_THROWS_AS(read_json_file(dir / "missing.json"), FileError);
}

TEST_CASE("fnv1a hash matches reference vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("error kinds have names") {
    CHECK(std::string(error_kind_name(ErrorKind::unsupported_version)) == "unsupported_version");
    CHECK(std::string(error_kind_name(ErrorKind::conflict)) == "conflict");
}
