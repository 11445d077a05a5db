#include "mld/importance.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "mld/parallel.hpp"
#include "mld/rng.hpp"

namespace mld {

void normalize(ImportanceReport& report) {
    const double total = std::accumulate(report.raw_scores.begin(), report.raw_scores.end(), 0.0);
    report.scores = report.raw_scores;
    if (total > 0.0) {
        for (double& s : report.scores) s /= total;
        report.normalized = true;
        report.all_zero = false;
    } else {
        report.normalized = false;
        report.all_zero = true;
    }
}

ImportanceReport frequency_importance(const MLDStructure& mld, const RealMatrix& features,
                                      std::optional<std::size_t> target_class, bool with_breakdown) {
    if (features.rows() == 0) throw EmptyInputError("frequency_importance: empty dataset");
    if (features.cols() != mld.input_dim()) {
        throw ShapeError("frequency_importance: dataset width does not match the MLD input");
    }
    const std::size_t d = mld.input_dim();
    const std::size_t K = mld.num_classes();
    if (target_class && *target_class >= K) {
        throw RangeError("target class " + std::to_string(*target_class) + " out of range");
    }
    ImportanceReport report;
    report.method = ImportanceMethod::frequency;
    report.sample_count = features.rows();
    report.target_class = target_class;
    std::vector<std::size_t> counts(d, 0);
    if (with_breakdown) {
        report.class_breakdown = ClassBreakdown{std::vector(K, std::vector<std::size_t>(d, 0)),
                                                std::vector(K, std::vector<std::size_t>(d, 0))};
    }
    std::vector<std::uint8_t> used(d);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        std::fill(used.begin(), used.end(), 0);
        const auto explanations = explain_sample(mld, features.row(r));
        for (std::size_t k = 0; k < K; ++k) {
            const bool selected = !target_class || *target_class == k;
            if (!selected && !with_breakdown) continue;
            std::vector<std::uint8_t> seen_pos(with_breakdown ? d : 0), seen_neg(with_breakdown ? d : 0);
            for (const RuleItem& item : explanations[k].rules.items) {
                if (selected) used[item.feature] = 1;
                if (with_breakdown) {
                    const bool on = item.sign == Sign::gt ||
                                    (item.sign == Sign::ne && item.critical_value == 0.0) ||
                                    (item.sign == Sign::eq && item.critical_value != 0.0);
                    (on ? seen_pos : seen_neg)[item.feature] = 1;
                }
            }
            if (with_breakdown) {
                for (std::size_t v = 0; v < d; ++v) {
                    report.class_breakdown->positive[k][v] += seen_pos[v];
                    report.class_breakdown->negative[k][v] += seen_neg[v];
                }
            }
        }
        for (std::size_t v = 0; v < d; ++v) counts[v] += used[v];
    }
    report.raw_scores.assign(counts.begin(), counts.end());
    normalize(report);
    return report;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(perm));
    return perm;
}

namespace {

std::vector<std::uint8_t> features_used_by_input_layer(const MLDStructure& mld) {
    std::vector<std::uint8_t> used(mld.input_dim(), 0);
    for (const auto& t : mld.trees(2)) {
        for (auto f : t.referenced_features()) used[f] = 1;
    }
    if (mld.num_layers() == 2) {
        for (auto f : mld.multiclass.referenced_features()) used[f] = 1;
    }
    return used;
}

double error_rate(const MLDStructure& mld, const RealMatrix& rows, std::span<const int> reference) {
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        wrong += forward_decision(mld, rows.row(r)).final_label != reference[r];
    }
    return static_cast<double>(wrong) / static_cast<double>(rows.rows());
}

} // namespace

ImportanceReport oob_importance(const MLDStructure& mld, std::span<const int> reference_labels,
                                const RealMatrix& heldout, std::uint64_t seed, unsigned threads) {
    if (heldout.rows() == 0) throw EmptyInputError("oob_importance: empty held-out set");
    if (heldout.cols() != mld.input_dim()) {
        throw ShapeError("oob_importance: held-out width does not match the MLD input");
    }
    if (reference_labels.size() != heldout.rows()) {
        throw ShapeError("oob_importance: need one reference label per held-out row");
    }
    const std::size_t d = mld.input_dim();
    ImportanceReport report;
    report.method = ImportanceMethod::oob;
    report.sample_count = heldout.rows();
    report.seed = seed;
    const double base = error_rate(mld, heldout, reference_labels);
    report.base_error = base;
    report.raw_scores.assign(d, 0.0);

    // A feature no input-layer tree reads cannot change any decision, so
    // its permuted error equals the base error and its score is exactly 0.
    const auto used = features_used_by_input_layer(mld);
    std::vector<std::uint8_t> clamped(d, 0);
    parallel_for(d, threads, [&](std::size_t v) {
        if (!used[v]) return;
        const auto perm = seeded_permutation(heldout.rows(), seed + v);
        RealMatrix shuffled = heldout;
        for (std::size_t r = 0; r < heldout.rows(); ++r) shuffled(r, v) = heldout(perm[r], v);
        const double delta = error_rate(mld, shuffled, reference_labels) - base;
        if (delta < 0.0) {
            clamped[v] = 1;
            report.raw_scores[v] = 0.0;
        } else {
            report.raw_scores[v] = delta;
        }
    });
    for (std::size_t v = 0; v < d; ++v) {
        if (clamped[v]) report.clamped_features.push_back(v);
    }
    normalize(report);
    return report;
}

json importance_to_json(const ImportanceReport& report) {
    json doc = make_envelope("importance_report");
    doc["method"] = report.method == ImportanceMethod::frequency ? "frequency" : "oob";
    doc["raw_scores"] = report.raw_scores;
    doc["scores"] = report.scores;
    doc["normalized"] = report.normalized;
    doc["all_zero"] = report.all_zero;
    doc["sample_count"] = report.sample_count;
    doc["target_class"] = report.target_class ? json(*report.target_class) : json(nullptr);
    doc["seed"] = report.seed ? json(*report.seed) : json(nullptr);
    doc["base_error"] = report.base_error ? json(*report.base_error) : json(nullptr);
    doc["clamped_features"] = report.clamped_features;
    if (report.method == ImportanceMethod::oob) {
        doc["notes"] = "held-out split stands in for out-of-bag rows; columns permuted with seed + feature; "
                       "negative deltas clamped to 0";
    }
    if (report.class_breakdown) {
        doc["class_breakdown"] = {{"positive", report.class_breakdown->positive},
                                  {"negative", report.class_breakdown->negative}};
    }
    return doc;
}

ImportanceReport importance_from_json(const json& doc) {
    check_envelope(doc, "importance_report");
    ImportanceReport r;
    const auto method = require_as<std::string>(doc, "method", "$");
    if (method == "frequency") {
        r.method = ImportanceMethod::frequency;
    } else if (method == "oob") {
        r.method = ImportanceMethod::oob;
    } else {
        throw ParseError("$.method: unknown method '" + method + "'");
    }
    r.raw_scores = require_as<std::vector<double>>(doc, "raw_scores", "$");
    r.scores = require_as<std::vector<double>>(doc, "scores", "$");
    r.normalized = require_as<bool>(doc, "normalized", "$");
    r.all_zero = require_as<bool>(doc, "all_zero", "$");
    r.sample_count = require_as<std::size_t>(doc, "sample_count", "$");
    if (const json& t = require_field(doc, "target_class", "$"); !t.is_null()) r.target_class = t.get<std::size_t>();
    if (const json& s = require_field(doc, "seed", "$"); !s.is_null()) r.seed = s.get<std::uint64_t>();
    if (const json& b = require_field(doc, "base_error", "$"); !b.is_null()) r.base_error = b.get<double>();
    r.clamped_features = require_as<std::vector<std::size_t>>(doc, "clamped_features", "$");
    if (auto it = doc.find("class_breakdown"); it != doc.end()) {
        ClassBreakdown cb;
        cb.positive = require_as<std::vector<std::vector<std::size_t>>>(*it, "positive", "$.class_breakdown");
        cb.negative = require_as<std::vector<std::vector<std::size_t>>>(*it, "negative", "$.class_breakdown");
        r.class_breakdown = std::move(cb);
    }
    if (r.scores.size() != r.raw_scores.size()) throw ParseError("$.scores: length mismatch");
    return r;
}

void export_importance_grid(std::span<const double> scores, std::size_t width, std::size_t height,
                            const std::filesystem::path& stem) {
    if (width == 0 || height == 0 || width * height != scores.size()) {
        throw ShapeError("grid " + std::to_string(width) + "x" + std::to_string(height) +
                         " does not cover " + std::to_string(scores.size()) + " scores");
    }
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    auto csv_path = stem;
    csv_path += ".csv";
    std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw FileError("cannot write " + csv_path.string());
    csv.precision(17);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            if (c) csv << ',';
            csv << scores[r * width + c];
        }
        csv << '\n';
    }

    double top = 0.0;
    for (double s : scores) top = std::max(top, s);
    auto pgm_path = stem;
    pgm_path += ".pgm";
    std::ofstream pgm(pgm_path, std::ios::binary | std::ios::trunc);
    if (!pgm) throw FileError("cannot write " + pgm_path.string());
    pgm << "P5\n" << width << ' ' << height << "\n255\n";
    for (double s : scores) {
        const double scaled = top > 0.0 ? std::max(0.0, s) / top * 255.0 : 0.0;
        pgm.put(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
    }
    if (!csv || !pgm) throw FileError("grid export failed for " + stem.string());
}

} // namespace mld
