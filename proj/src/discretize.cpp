#include "mld/discretize.hpp"

#include <cmath>
#include <cstring>
#include <string_view>
#include <unordered_map>

#include "mld/parallel.hpp"

namespace mld {

namespace {

constexpr double kRangeSlack = 1e-9;

std::string_view row_bytes(const auto& m, std::size_t r) {
    auto row = m.row(r);
    return {reinterpret_cast<const char*>(row.data()), row.size_bytes()};
}

} // namespace

BitMatrix discretize_layer(const RealMatrix& activations, double threshold) {
    BitMatrix out(activations.rows(), activations.cols());
    for (std::size_t r = 0; r < activations.rows(); ++r) {
        for (std::size_t c = 0; c < activations.cols(); ++c) {
            const double v = activations(r, c);
            if (!(v >= -kRangeSlack && v <= 1.0 + kRangeSlack)) {
                throw RangeError("activation " + std::to_string(v) + " at (row " + std::to_string(r) +
                                 ", col " + std::to_string(c) + ") is outside [0, 1]");
            }
            out(r, c) = v >= threshold ? 1 : 0;
        }
    }
    return out;
}

void InputPolicy::validate() const {
    if (!(std::isfinite(threshold) && threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("input threshold must lie in (0, 1)");
    }
}

std::vector<double> InputPolicy::apply(std::span<const double> input) const {
    std::vector<double> out(input.begin(), input.end());
    for (double& v : out) v = mode == Mode::binarize ? (v >= threshold ? 1.0 : 0.0) : v + 0.0;
    return out;
}

RealMatrix InputPolicy::apply(const RealMatrix& inputs) const {
    RealMatrix out = inputs;
    if (mode == Mode::binarize) {
        for (double& v : out.data()) v = v >= threshold ? 1.0 : 0.0;
    } else {
        for (double& v : out.data()) {
            if (!std::isfinite(v)) throw RangeError("non-finite input feature");
            v += 0.0;  // -0.0 becomes 0.0 so row grouping by bytes sees equal rows
        }
    }
    return out;
}

json policy_to_json(const InputPolicy& policy) {
    json doc;
    doc["mode"] = policy.mode == InputPolicy::Mode::binarize ? "binarize" : "passthrough";
    doc["threshold"] = policy.threshold;
    return doc;
}

InputPolicy policy_from_json(const json& doc) {
    InputPolicy policy;
    const auto mode = require_as<std::string>(doc, "mode", "$.policy");
    if (mode == "binarize") {
        policy.mode = InputPolicy::Mode::binarize;
    } else if (mode == "passthrough") {
        policy.mode = InputPolicy::Mode::passthrough;
    } else {
        throw ParseError("$.policy.mode: unknown mode '" + mode + "'");
    }
    policy.threshold = require_as<double>(doc, "threshold", "$.policy");
    policy.validate();
    return policy;
}

template <class T>
RowGroups group_rows(const Matrix<T>& rows) {
    RowGroups groups;
    groups.group_of_row.resize(rows.rows());
    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(rows.rows() * 2);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        auto [it, inserted] = index.try_emplace(row_bytes(rows, r), groups.representative.size());
        if (inserted) groups.representative.push_back(r);
        groups.group_of_row[r] = it->second;
    }
    return groups;
}

template <class T>
Resolution resolve_with_groups(const Matrix<T>& inputs, const RowGroups& groups,
                               std::span<const int> outputs, std::size_t layer,
                               std::size_t neuron) {
    if (outputs.size() != inputs.rows() || groups.group_of_row.size() != inputs.rows()) {
        throw ShapeError("resolve_conflicts: " + std::to_string(inputs.rows()) + " input rows vs " +
                         std::to_string(outputs.size()) + " outputs");
    }
    int max_value = 0;
    for (int v : outputs) {
        if (v < 0) throw RangeError("resolve_conflicts: negative output value");
        max_value = std::max(max_value, v);
    }
    const std::size_t n_values = static_cast<std::size_t>(max_value) + 1;
    std::vector<std::size_t> votes(groups.count() * n_values, 0);
    for (std::size_t r = 0; r < outputs.size(); ++r) {
        ++votes[groups.group_of_row[r] * n_values + static_cast<std::size_t>(outputs[r])];
    }

    Resolution res;
    res.values.assign(outputs.begin(), outputs.end());
    std::vector<int> mode(groups.count());
    for (std::size_t g = 0; g < groups.count(); ++g) {
        const std::size_t* counts = votes.data() + g * n_values;
        std::size_t best = 0;
        std::size_t distinct = 0;
        for (std::size_t v = 0; v < n_values; ++v) {
            distinct += counts[v] > 0;
            if (counts[v] > counts[best]) best = v;
        }
        mode[g] = static_cast<int>(best);
        if (distinct > 1) {
            ConflictEntry entry;
            entry.layer = layer;
            entry.neuron = neuron;
            auto rep = inputs.row(groups.representative[g]);
            entry.pattern.assign(rep.begin(), rep.end());
            entry.kept_value = mode[g];
            entry.votes.assign(counts, counts + n_values);
            res.conflicts.push_back(std::move(entry));
        }
    }
    for (std::size_t r = 0; r < outputs.size(); ++r) res.values[r] = mode[groups.group_of_row[r]];
    return res;
}

template <class T>
Resolution resolve_conflicts(const Matrix<T>& inputs, std::span<const int> outputs,
                             std::size_t layer, std::size_t neuron) {
    if (outputs.size() != inputs.rows()) {
        throw ShapeError("resolve_conflicts: " + std::to_string(inputs.rows()) + " input rows vs " +
                         std::to_string(outputs.size()) + " outputs");
    }
    return resolve_with_groups(inputs, group_rows(inputs), outputs, layer, neuron);
}

template RowGroups group_rows(const Matrix<double>&);
template RowGroups group_rows(const Matrix<std::uint8_t>&);
template Resolution resolve_with_groups(const Matrix<double>&, const RowGroups&,
                                        std::span<const int>, std::size_t, std::size_t);
template Resolution resolve_with_groups(const Matrix<std::uint8_t>&, const RowGroups&,
                                        std::span<const int>, std::size_t, std::size_t);
template Resolution resolve_conflicts(const Matrix<double>&, std::span<const int>, std::size_t,
                                      std::size_t);
template Resolution resolve_conflicts(const Matrix<std::uint8_t>&, std::span<const int>,
                                      std::size_t, std::size_t);

namespace {

template <class T>
BitMatrix resolve_layer(const Matrix<T>& inputs, const BitMatrix& raw, std::size_t layer,
                        unsigned threads, std::vector<ConflictEntry>& log) {
    const RowGroups groups = group_rows(inputs);
    BitMatrix resolved(raw.rows(), raw.cols());
    std::vector<std::vector<ConflictEntry>> per_neuron(raw.cols());
    parallel_for(raw.cols(), threads, [&](std::size_t k) {
        std::vector<int> column(raw.rows());
        for (std::size_t r = 0; r < raw.rows(); ++r) column[r] = raw(r, k);
        Resolution res = resolve_with_groups(inputs, groups, column, layer, k);
        for (std::size_t r = 0; r < raw.rows(); ++r) {
            resolved(r, k) = static_cast<std::uint8_t>(res.values[r]);
        }
        per_neuron[k] = std::move(res.conflicts);
    });
    for (auto& entries : per_neuron) {
        for (auto& e : entries) log.push_back(std::move(e));
    }
    return resolved;
}

} // namespace

DiscretizedTrace build_boolean_targets(const ActivationRecord& record, const InputPolicy& policy,
                                       unsigned threads) {
    policy.validate();
    if (record.layers.size() < 2) throw ShapeError("activation record needs at least 2 layers");
    const std::size_t rows = record.layers.front().rows();
    DiscretizedTrace trace;
    for (const auto& layer : record.layers) {
        if (layer.rows() != rows) throw ShapeError("activation record layers disagree on row count");
        trace.layer_sizes.push_back(layer.cols());
    }
    trace.input = policy.apply(record.layers.front());
    for (std::size_t l = 1; l < record.layers.size(); ++l) {
        const BitMatrix raw = discretize_layer(record.layers[l]);
        const std::size_t one_based = l + 1;
        BitMatrix resolved = l == 1
            ? resolve_layer(trace.input, raw, one_based, threads, trace.conflict_log)
            : resolve_layer(trace.layers.back(), raw, one_based, threads, trace.conflict_log);
        trace.layers.push_back(std::move(resolved));
    }
    return trace;
}

json trace_to_json(const DiscretizedTrace& trace) {
    json doc = make_envelope("discretized_trace");
    doc["layer_sizes"] = trace.layer_sizes;
    json layers = json::array();
    {
        json rows = json::array();
        for (std::size_t r = 0; r < trace.input.rows(); ++r) {
            auto row = trace.input.row(r);
            rows.push_back(std::vector<double>(row.begin(), row.end()));
        }
        layers.push_back(std::move(rows));
    }
    for (const auto& bits : trace.layers) {
        json rows = json::array();
        for (std::size_t r = 0; r < bits.rows(); ++r) {
            auto row = bits.row(r);
            rows.push_back(std::vector<int>(row.begin(), row.end()));
        }
        layers.push_back(std::move(rows));
    }
    doc["layers"] = std::move(layers);
    json log = json::array();
    for (const auto& e : trace.conflict_log) {
        log.push_back({{"layer", e.layer},
                       {"neuron", e.neuron},
                       {"pattern", e.pattern},
                       {"kept_value", e.kept_value},
                       {"votes", e.votes}});
    }
    doc["conflict_log"] = std::move(log);
    return doc;
}

} // namespace mld
