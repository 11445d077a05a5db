#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mld/mld.hpp"

namespace mld {

enum class ImportanceMethod { frequency, oob };

/// counts[class][feature]: samples whose class-tree rule asserts the
/// feature on (positive: `!= 0`, `>`) or off (negative: `= 0`, `<=`).
struct ClassBreakdown {
    std::vector<std::vector<std::size_t>> positive;
    std::vector<std::vector<std::size_t>> negative;
};

struct ImportanceReport {
    ImportanceMethod method = ImportanceMethod::frequency;
    std::vector<double> raw_scores;
    std::vector<double> scores;  // normalized when `normalized`
    bool normalized = false;
    bool all_zero = false;
    std::size_t sample_count = 0;
    std::optional<std::size_t> target_class;
    std::optional<ClassBreakdown> class_breakdown;
    // OOB only.
    std::optional<std::uint64_t> seed;
    std::optional<double> base_error;
    std::vector<std::size_t> clamped_features;
};

/// score_v = number of samples whose induced rule set uses feature v. With
/// `target_class`, only that class's binary tree is induced; otherwise the
/// union over all K class trees counts.
ImportanceReport frequency_importance(const MLDStructure& mld, const RealMatrix& features,
                                      std::optional<std::size_t> target_class = std::nullopt,
                                      bool with_breakdown = false);

/// Permutation importance on held-out rows, measured against the network's
/// labels. Column v is shuffled with seed `seed + v`; negative deltas clamp to 0.
ImportanceReport oob_importance(const MLDStructure& mld, std::span<const int> reference_labels,
                                const RealMatrix& heldout, std::uint64_t seed, unsigned threads = 1);

/// Divides by the total when it is positive; otherwise marks all_zero.
void normalize(ImportanceReport& report);

/// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

json importance_to_json(const ImportanceReport& report);
ImportanceReport importance_from_json(const json& doc);

/// Writes <stem>.csv (height rows of width values) and <stem>.pgm (binary
/// P5, scores scaled linearly so the maximum maps to 255).
void export_importance_grid(std::span<const double> scores, std::size_t width, std::size_t height,
                            const std::filesystem::path& stem);

} // namespace mld
