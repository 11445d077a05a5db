#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mld/json_util.hpp"
#include "mld/matrix.hpp"

namespace mld {

enum class FeatureKind : std::uint8_t { discrete, continuous };

/// Branch conditions. Discrete splits send `x == c` left (eq) and everything
/// else right (ne); continuous splits send `x <= c` left (le), `x > c` right (gt).
enum class Sign : std::uint8_t { eq, ne, le, gt };

const char* sign_symbol(Sign s);  // "=", "!=", "<=", ">"
Sign parse_sign(const std::string& s);
const char* feature_kind_name(FeatureKind k);

/// One atomic condition taken on a root-to-leaf path.
struct RuleItem {
    std::size_t layer = 1;  // layer of the referenced feature; 1 = raw input
    std::size_t feature = 0;
    double critical_value = 0.0;
    Sign sign = Sign::eq;

    bool holds(double x) const;
    bool is_discrete() const { return sign == Sign::eq || sign == Sign::ne; }

    auto operator<=>(const RuleItem&) const = default;
};

struct TreeNode {
    bool is_leaf = true;
    int value = 0;  // leaf output
    std::size_t feature = 0;
    double critical_value = 0.0;
    FeatureKind kind = FeatureKind::discrete;
    std::int32_t left = -1;
    std::int32_t right = -1;

    bool operator==(const TreeNode&) const = default;
};

struct TreeMetadata {
    std::size_t layer = 0;        // layer of the neuron this tree stands for (0 = standalone)
    std::size_t neuron = 0;
    std::size_t input_layer = 1;  // layer whose values the tree reads
    std::size_t height = 0;       // edges on the longest root-to-leaf path
    std::size_t node_count = 1;
    double training_accuracy = 1.0;
    std::size_t max_height = 0;
    std::size_t max_size = 0;

    bool operator==(const TreeMetadata&) const = default;
};

struct TreeRule {
    int value = 0;
    std::vector<RuleItem> items;
};

class DecisionTree {
public:
    DecisionTree() : nodes_{TreeNode{}} {}
    /// Validates structure: acyclic, every internal node has two children.
    DecisionTree(std::vector<TreeNode> nodes, std::size_t root, TreeMetadata meta);

    static DecisionTree leaf(int value);

    int decide(std::span<const double> features) const;
    /// Output value plus the branch conditions along the path taken.
    TreeRule rule(std::span<const double> features) const;

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::size_t root() const { return root_; }
    const TreeMetadata& metadata() const { return meta_; }
    TreeMetadata& metadata() { return meta_; }
    std::size_t height() const { return meta_.height; }
    std::size_t node_count() const { return nodes_.size(); }
    bool is_single_leaf() const { return nodes_[root_].is_leaf; }

    /// Sorted distinct feature indices used by any split.
    std::vector<std::size_t> referenced_features() const;
    std::vector<int> leaf_values() const;

    bool operator==(const DecisionTree&) const = default;

private:
    std::vector<TreeNode> nodes_;
    std::size_t root_ = 0;
    TreeMetadata meta_;
};

struct TreeFitConfig {
    std::size_t max_height = 20;
    std::size_t max_size = 100;  // total nodes, internal plus leaves
    std::size_t min_samples_split = 2;
    bool prune = true;

    static TreeFitConfig unlimited() {
        return {std::numeric_limits<std::size_t>::max() / 4,
                std::numeric_limits<std::size_t>::max() / 4, 2, true};
    }
    void validate() const;
    bool operator==(const TreeFitConfig&) const = default;
};

json fit_config_to_json(const TreeFitConfig& config);
TreeFitConfig fit_config_from_json(const json& doc);

/// 1 - sum p_i^2. Throws RangeError when every count is zero.
double gini(std::span<const std::size_t> counts);

/// Greedy CART with Gini impurity.
///
/// Splits minimize the weighted child impurity; equal scores go to the lowest
/// feature index, then the lowest critical value. Nodes are expanded
/// best-first (largest impurity decrease) until every leaf is pure or
/// unsplittable, or the height/size limits stop growth. Leaves hold the
/// majority target (ties to the smallest value). With `prune`, internal
/// nodes whose majority leaf classifies the training rows at least as well
/// as their subtree are collapsed, bottom-up.
///
/// Throws EmptyInputError on no rows and ConflictError when identical input
/// rows carry different targets.
DecisionTree fit_tree(const RealMatrix& inputs, std::span<const int> targets,
                      std::span<const FeatureKind> kinds, const TreeFitConfig& config);

/// Fraction of rows whose decision equals the target.
double tree_accuracy(const DecisionTree& tree, const RealMatrix& inputs, std::span<const int> targets);

json tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const json& doc, const std::string& path = "$");

} // namespace mld
