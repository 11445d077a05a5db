#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mld/discretize.hpp"
#include "mld/dtree.hpp"
#include "mld/nnmodel.hpp"

namespace mld {

/// Names one tree of an MLD. Layers are 1-based (layer 1 is the input, so
/// trees live in layers 2..L). In the output layer, `index` selects a
/// per-class binary tree unless `multiclass` is set.
struct TreeRef {
    std::size_t layer = 2;
    std::size_t index = 0;
    bool multiclass = false;

    static TreeRef node(std::size_t layer, std::size_t index) { return {layer, index, false}; }
    static TreeRef multiclass_output(std::size_t output_layer) { return {output_layer, 0, true}; }

    auto operator<=>(const TreeRef&) const = default;
};

struct Provenance {
    std::string model_hash;
    TreeFitConfig fit_config;
    std::string dataset_name;
    std::size_t fit_samples = 0;

    bool operator==(const Provenance&) const = default;
};

/// The distilled model: one tree per neuron in layers 2..L. Trees in layer
/// l read the outputs of layer l-1's trees (layer 2 reads the input after
/// the policy). The output layer carries K one-vs-rest binary trees plus a
/// multiclass tree, which alone decides the final label.
struct MLDStructure {
    std::vector<std::size_t> layer_sizes;
    /// layers[i] holds the trees of 1-based layer i + 2.
    std::vector<std::vector<DecisionTree>> layers;
    DecisionTree multiclass;
    InputPolicy policy;
    Provenance provenance;

    std::size_t num_layers() const { return layer_sizes.size(); }
    std::size_t output_layer() const { return layer_sizes.size(); }
    std::size_t num_classes() const { return layer_sizes.back(); }
    std::size_t input_dim() const { return layer_sizes.front(); }

    const std::vector<DecisionTree>& trees(std::size_t layer) const { return layers.at(layer - 2); }
    const DecisionTree& tree(const TreeRef& ref) const;
    /// Throws RangeError when the reference names no tree.
    void check_ref(const TreeRef& ref) const;
    /// Throws ShapeError/ConsistencyError when any tree reads past its input layer.
    void validate() const;

    bool operator==(const MLDStructure&) const = default;
};

struct BuildOptions {
    InputPolicy policy;
    TreeFitConfig fit;
    unsigned threads = 1;
};

/// Records activations, discretizes + resolves them, and fits every tree.
/// The multiclass tree learns the network's argmax label (mode-resolved
/// over identical layer-(L-1) patterns).
MLDStructure build_mld(const MLPModel& model, const Dataset& data, const BuildOptions& options);

/// Same, from an already-built trace plus the network's labels for its rows.
MLDStructure build_mld_from_trace(const DiscretizedTrace& trace, std::span<const int> network_labels,
                                  const BuildOptions& options);

struct MLDDecision {
    /// per_tree_outputs[i] holds layer i + 2; the output layer entry holds
    /// the K binary trees' outputs.
    std::vector<std::vector<int>> per_tree_outputs;
    int final_label = 0;
    std::vector<int> binary_votes;

    const std::vector<int>& layer(std::size_t l) const { return per_tree_outputs.at(l - 2); }
    bool operator==(const MLDDecision&) const = default;
};

/// Applies the MLD's input policy, then evaluates every tree layer by layer.
MLDDecision forward_decision(const MLDStructure& mld, std::span<const double> input);
std::vector<int> predict_labels(const MLDStructure& mld, const RealMatrix& features);

/// Intermediate per-tree rule, kept for visualization.
struct TraceStep {
    TreeRef tree;
    int value = 0;
    std::vector<RuleItem> items;  // direct path items over the tree's input layer
};

/// Conjunction of conditions over the input features implying
/// `tree` outputs `asserted_value`.
struct RuleSet {
    std::vector<RuleItem> items;
    TreeRef target;
    int asserted_value = 0;
    bool has_contradiction = false;
    std::vector<TraceStep> depth_trace;

    /// Whether every item holds for the (policy-applied) input.
    bool satisfied_by(std::span<const double> input) const;
};

/// Sorts, removes repeated items, and tightens continuous bounds per feature
/// (the smallest `<=` and the largest `>` survive). Flags contradictions.
void normalize_items(std::vector<RuleItem>& items, bool& has_contradiction);

/// Walks the target tree over the previous layer's tree outputs, then
/// recursively replaces each hidden-feature item by the rule set of the
/// tree producing that feature, down to the input layer.
RuleSet backward_rule_induction(const MLDStructure& mld, std::span<const double> input,
                                const TreeRef& target, bool keep_trace = false);

struct ClassExplanation {
    RuleSet rules;
    bool positive = false;  // the class tree output 1 on this sample
};

/// One induced rule set per binary output tree.
std::vector<ClassExplanation> explain_sample(const MLDStructure& mld, std::span<const double> input,
                                             bool keep_trace = false);

/// "(x_1=1) ∧ (x_3=1) ∧ (x_5=0) ⇒ (y_1=0)". Subscripts (feature and class
/// positions) are 1-based, values are literal; boolean `!= 0` items print
/// as `=1`. The multiclass tree prints as "(y=<label>)".
std::string format_rule(const RuleSet& rules, std::size_t output_layer);
std::string format_item(const RuleItem& item);

json mld_to_json(const MLDStructure& mld);
MLDStructure mld_from_json(const json& doc);
void save_mld(const MLDStructure& mld, const std::filesystem::path& path);
MLDStructure load_mld(const std::filesystem::path& path);

json tree_ref_to_json(const TreeRef& ref);
TreeRef tree_ref_from_json(const json& doc, const std::string& path);
json rule_item_to_json(const RuleItem& item);
RuleItem rule_item_from_json(const json& doc, const std::string& path);
json ruleset_to_json(const RuleSet& rules, std::optional<std::size_t> sample_id, bool positive);
RuleSet ruleset_from_json(const json& doc);

/// Per-tree fit summary rows (layer, index, height, size, training accuracy).
json fit_summary_to_json(const MLDStructure& mld);

} // namespace mld
