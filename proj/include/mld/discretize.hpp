#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mld/json_util.hpp"
#include "mld/matrix.hpp"
#include "mld/nnmodel.hpp"

namespace mld {

inline constexpr double kActivationThreshold = 0.5;

/// bit = 1 iff value >= threshold. Values must lie in [0, 1] up to 1e-9.
BitMatrix discretize_layer(const RealMatrix& activations, double threshold = kActivationThreshold);

/// How layer-1 (raw input) features enter the MLD.
struct InputPolicy {
    enum class Mode { binarize, passthrough };
    Mode mode = Mode::binarize;
    double threshold = kActivationThreshold;

    static InputPolicy binarize(double t = kActivationThreshold) { return {Mode::binarize, t}; }
    static InputPolicy passthrough() { return {Mode::passthrough, kActivationThreshold}; }

    void validate() const;
    /// Applies the policy to one raw input vector.
    std::vector<double> apply(std::span<const double> input) const;
    RealMatrix apply(const RealMatrix& inputs) const;

    bool operator==(const InputPolicy&) const = default;
};

json policy_to_json(const InputPolicy& policy);
InputPolicy policy_from_json(const json& doc);

/// Rows with byte-identical content share a group. Ids follow first occurrence.
struct RowGroups {
    std::vector<std::size_t> group_of_row;
    /// First row of each group (its representative pattern).
    std::vector<std::size_t> representative;

    std::size_t count() const { return representative.size(); }
};

template <class T>
RowGroups group_rows(const Matrix<T>& rows);

struct ConflictEntry {
    std::size_t layer = 0;   // layer of the resolved neuron (1-based)
    std::size_t neuron = 0;  // 0-based within its layer
    std::vector<double> pattern;
    int kept_value = 0;
    /// votes[v] = number of rows in the group whose raw output was v.
    std::vector<std::size_t> votes;

    bool operator==(const ConflictEntry&) const = default;
};

struct Resolution {
    std::vector<int> values;
    std::vector<ConflictEntry> conflicts;
};

/// Replaces every output within a group of identical input rows by the
/// group's mode (ties resolve to the smallest value). Groups whose outputs
/// already agree are untouched; every altered group is logged.
template <class T>
Resolution resolve_conflicts(const Matrix<T>& inputs, std::span<const int> outputs,
                             std::size_t layer = 0, std::size_t neuron = 0);

/// Same, reusing a precomputed grouping of `inputs`.
template <class T>
Resolution resolve_with_groups(const Matrix<T>& inputs, const RowGroups& groups,
                               std::span<const int> outputs, std::size_t layer,
                               std::size_t neuron);

/// Boolean functions for every neuron, after mode resolution.
struct DiscretizedTrace {
    std::vector<std::size_t> layer_sizes;
    /// Layer 1 after the input policy (0/1 values when binarized).
    RealMatrix input;
    /// hidden[i] holds layer i+2 (1-based), i.e. layers 2..L, resolved.
    std::vector<BitMatrix> layers;
    std::vector<ConflictEntry> conflict_log;

    std::size_t rows() const { return input.rows(); }
    /// Resolved bits of 1-based layer l >= 2.
    const BitMatrix& layer(std::size_t l) const { return layers.at(l - 2); }
};

/// Discretizes and resolves layers front to back so that resolution at
/// layer l+1 groups rows by the already-resolved layer-l bits.
DiscretizedTrace build_boolean_targets(const ActivationRecord& record, const InputPolicy& policy,
                                       unsigned threads = 1);

json trace_to_json(const DiscretizedTrace& trace);

} // namespace mld
