#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mld/json_util.hpp"
#include "mld/nnmodel.hpp"

namespace mld {

/// Reads an IDX image/label pair, plain or gzip-compressed (zlib detects
/// the format from the stream). Pixels scale to byte/255 and, with a threshold,
/// binarize as value >= threshold. `limit` keeps only the first rows.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<double> threshold = std::nullopt,
                 std::optional<std::size_t> limit = std::nullopt);

/// Raw big-endian IDX payload: dims plus unsigned bytes.
struct IdxArray {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};
IdxArray read_idx(const std::filesystem::path& path, std::uint32_t expected_magic);
void write_idx(const std::filesystem::path& path, std::uint32_t magic, const IdxArray& array);

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct CsvSchema {
    std::string label_column = "label";
    /// Empty: every column except the label column, in file order.
    std::vector<std::string> feature_columns;
    /// Features are used exactly as written (already in [0, 1] / one-hot).
    bool one_hot_passthrough = true;
};

/// Labels map to contiguous ids by first occurrence; the mapping is kept
/// in Dataset::label_names. Feature cells must be numeric and in [0, 1].
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Writes header f0..f{d-1},label with shortest round-trip numbers.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::vector<std::string>& feature_names = {},
               const std::string& label_column = "label");

/// Seeded shuffle, then the first round(fraction * N) rows train.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

json dataset_meta_to_json(const Dataset& data);

} // namespace mld
