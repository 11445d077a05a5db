#include "mld/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "mld/rng.hpp"

namespace mld {

namespace {

std::vector<std::uint8_t> read_all_bytes(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FileError("file not found: " + path.string());
    // gzread passes uncompressed files through, so one code path serves both
    gzFile file = gzopen(path.string().c_str(), "rb");
    if (!file) throw FileError("cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::uint8_t buffer[1 << 16];
    int n;
    while ((n = gzread(file, buffer, sizeof buffer)) > 0) out.insert(out.end(), buffer, buffer + n);
    int err = 0;
    const char* msg = gzerror(file, &err);
    const bool failed = n < 0 || (err != Z_OK && err != Z_BUF_ERROR);
    const std::string message = msg ? msg : "";
    gzclose(file);
    if (failed) throw IdxTruncatedError(path.string() + ": decompression failed: " + message);
    return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void put_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    out.write(b, 4);
}

} // namespace

IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
    const auto bytes = read_all_bytes(path);
    if (bytes.size() < 4) throw IdxTruncatedError(path.string() + ": file shorter than the IDX header");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != expected_magic) {
        char buf[96];
        std::snprintf(buf, sizeof buf, ": magic 0x%08x, expected 0x%08x", magic, expected_magic);
        throw IdxMagicError(path.string() + buf);
    }
    const std::size_t rank = magic & 0xff;
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() < header) throw IdxTruncatedError(path.string() + ": truncated dimension header");
    IdxArray out;
    std::size_t payload = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        out.dims.push_back(read_be32(bytes, 4 + 4 * i));
        payload *= out.dims.back();
    }
    if (bytes.size() - header < payload) {
        throw IdxTruncatedError(path.string() + ": payload has " + std::to_string(bytes.size() - header) +
                                " bytes, header promises " + std::to_string(payload));
    }
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                    bytes.begin() + static_cast<std::ptrdiff_t>(header + payload));
    return out;
}

void write_idx(const std::filesystem::path& path, std::uint32_t magic, const IdxArray& array) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write " + path.string());
    put_be32(out, magic);
    for (auto d : array.dims) put_be32(out, d);
    out.write(reinterpret_cast<const char*>(array.data.data()), static_cast<std::streamsize>(array.data.size()));
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<double> threshold, std::optional<std::size_t> limit) {
    if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) {
        throw ConfigError("binarize threshold must lie in (0, 1)");
    }
    const IdxArray img = read_idx(images, kIdxImagesMagic);
    const IdxArray lab = read_idx(labels, kIdxLabelsMagic);
    if (img.dims.size() != 3) throw ParseError(images.string() + ": expected 3 image dimensions");
    if (lab.dims.size() != 1) throw ParseError(labels.string() + ": expected 1 label dimension");
    if (img.dims[0] != lab.dims[0]) {
        throw IdxCountMismatchError(std::to_string(img.dims[0]) + " images but " +
                                    std::to_string(lab.dims[0]) + " labels");
    }
    std::size_t n = img.dims[0];
    if (limit) n = std::min(n, *limit);
    const std::size_t d = std::size_t(img.dims[1]) * img.dims[2];
    Dataset data;
    data.name = images.filename().string();
    data.features = RealMatrix(n, d);
    data.labels.resize(n);
    int top = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double v = img.data[i * d + j] / 255.0;
            if (threshold) v = v >= *threshold ? 1.0 : 0.0;
            data.features(i, j) = v;
        }
        data.labels[i] = lab.data[i];
        top = std::max(top, data.labels[i]);
    }
    data.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(top) + 1);
    return data;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw EmptyInputError(path.string() + ": empty file");
    const auto header = split_line(line);
    std::map<std::string, std::size_t> column_of;
    for (std::size_t i = 0; i < header.size(); ++i) column_of[trim(header[i])] = i;
    auto lookup = [&](const std::string& name) {
        auto it = column_of.find(name);
        if (it == column_of.end()) throw ConfigError(path.string() + ": no column named '" + name + "'");
        return it->second;
    };
    const std::size_t label_col = lookup(schema.label_column);
    std::vector<std::size_t> feature_cols;
    if (schema.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i != label_col) feature_cols.push_back(i);
        }
    } else {
        for (const auto& name : schema.feature_columns) feature_cols.push_back(lookup(name));
    }

    Dataset data;
    data.name = path.filename().string();
    std::vector<double> values;
    std::map<std::string, int> label_ids;
    std::size_t row = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(header.size()));
        }
        for (std::size_t c : feature_cols) {
            const std::string cell = trim(cells[c]);
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() ||
                !std::isfinite(v)) {
                throw ParseError(path.string() + ": row " + std::to_string(row + 1) + ", column '" +
                                 trim(header[c]) + "': non-numeric cell '" + cell + "'");
            }
            if (schema.one_hot_passthrough && (v < 0.0 || v > 1.0)) {
                throw RangeError(path.string() + ": row " + std::to_string(row + 1) + ", column '" +
                                 trim(header[c]) + "': value " + cell + " outside [0, 1]");
            }
            values.push_back(v);
        }
        const std::string label = trim(cells[label_col]);
        auto [it, inserted] = label_ids.try_emplace(label, static_cast<int>(data.label_names.size()));
        if (inserted) data.label_names.push_back(label);
        data.labels.push_back(it->second);
        ++row;
    }
    if (row == 0) throw EmptyInputError(path.string() + ": no data rows");
    data.features = RealMatrix(row, feature_cols.size(), std::move(values));
    data.num_classes = data.label_names.size();
    return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::vector<std::string>& feature_names, const std::string& label_column) {
    if (!feature_names.empty() && feature_names.size() != data.dim()) {
        throw ShapeError("write_csv: feature name count does not match the data width");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write " + path.string());
    for (std::size_t j = 0; j < data.dim(); ++j) {
        out << (feature_names.empty() ? "f" + std::to_string(j) : feature_names[j]) << ',';
    }
    out << label_column << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dim(); ++j) out << shortest(data.features(i, j)) << ',';
        const int label = data.labels[i];
        if (!data.label_names.empty()) {
            out << data.label_names[static_cast<std::size_t>(label)];
        } else {
            out << label;
        }
        out << '\n';
    }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    const std::size_t n = data.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) {
        throw ConfigError("split of " + std::to_string(n) + " rows at fraction " +
                          std::to_string(train_fraction) + " leaves one side empty");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    const std::span<const std::size_t> all(order);
    Dataset train = data.subset(all.subspan(0, n_train));
    Dataset test = data.subset(all.subspan(n_train));
    train.name = data.name + ":train";
    test.name = data.name + ":test";
    return {std::move(train), std::move(test)};
}

json dataset_meta_to_json(const Dataset& data) {
    return {{"name", data.name},
            {"n_samples", data.size()},
            {"n_features", data.dim()},
            {"num_classes", data.num_classes},
            {"label_names", data.label_names}};
}

} // namespace mld
