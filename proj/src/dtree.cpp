#include "mld/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>

#include "mld/discretize.hpp"

namespace mld {

const char* sign_symbol(Sign s) {
    switch (s) {
        case Sign::eq: return "=";
        case Sign::ne: return "!=";
        case Sign::le: return "<=";
        case Sign::gt: return ">";
    }
    return "?";
}

Sign parse_sign(const std::string& s) {
    if (s == "=") return Sign::eq;
    if (s == "!=") return Sign::ne;
    if (s == "<=") return Sign::le;
    if (s == ">") return Sign::gt;
    throw ParseError("unknown rule sign '" + s + "'");
}

const char* feature_kind_name(FeatureKind k) {
    return k == FeatureKind::discrete ? "discrete" : "continuous";
}

bool RuleItem::holds(double x) const {
    switch (sign) {
        case Sign::eq: return x == critical_value;
        case Sign::ne: return x != critical_value;
        case Sign::le: return x <= critical_value;
        case Sign::gt: return x > critical_value;
    }
    return false;
}

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t root, TreeMetadata meta)
    : nodes_(std::move(nodes)), root_(root), meta_(meta) {
    if (nodes_.empty() || root_ >= nodes_.size()) throw ShapeError("tree has no root node");
    // Reachability walk doubles as the cycle/sharing check.
    std::vector<std::uint8_t> seen(nodes_.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root_, 0}};
    std::size_t height = 0;
    while (!stack.empty()) {
        auto [id, depth] = stack.back();
        stack.pop_back();
        if (seen[id]) throw ConsistencyError("tree node " + std::to_string(id) + " reached twice");
        seen[id] = 1;
        height = std::max(height, depth);
        const TreeNode& n = nodes_[id];
        if (n.is_leaf) continue;
        for (auto child : {n.left, n.right}) {
            if (child < 0 || static_cast<std::size_t>(child) >= nodes_.size()) {
                throw ConsistencyError("tree node " + std::to_string(id) + " has a missing child");
            }
            stack.emplace_back(static_cast<std::size_t>(child), depth + 1);
        }
    }
    meta_.height = height;
    meta_.node_count = nodes_.size();
}

DecisionTree DecisionTree::leaf(int value) {
    TreeNode n;
    n.value = value;
    return DecisionTree({n}, 0, TreeMetadata{});
}

namespace {

double feature_at(std::span<const double> features, std::size_t index) {
    if (index >= features.size()) {
        throw ShapeError("tree references feature " + std::to_string(index) + " but input has " +
                         std::to_string(features.size()));
    }
    return features[index];
}

bool goes_left(const TreeNode& n, double x) {
    return n.kind == FeatureKind::discrete ? x == n.critical_value : x <= n.critical_value;
}

} // namespace

int DecisionTree::decide(std::span<const double> features) const {
    const TreeNode* n = &nodes_[root_];
    while (!n->is_leaf) {
        const double x = feature_at(features, n->feature);
        n = &nodes_[static_cast<std::size_t>(goes_left(*n, x) ? n->left : n->right)];
    }
    return n->value;
}

TreeRule DecisionTree::rule(std::span<const double> features) const {
    TreeRule out;
    const TreeNode* n = &nodes_[root_];
    while (!n->is_leaf) {
        const double x = feature_at(features, n->feature);
        const bool left = goes_left(*n, x);
        RuleItem item;
        item.layer = meta_.input_layer;
        item.feature = n->feature;
        item.critical_value = n->critical_value;
        if (n->kind == FeatureKind::discrete) {
            item.sign = left ? Sign::eq : Sign::ne;
        } else {
            item.sign = left ? Sign::le : Sign::gt;
        }
        out.items.push_back(item);
        n = &nodes_[static_cast<std::size_t>(left ? n->left : n->right)];
    }
    out.value = n->value;
    return out;
}

std::vector<std::size_t> DecisionTree::referenced_features() const {
    std::vector<std::size_t> out;
    for (const auto& n : nodes_) {
        if (!n.is_leaf) out.push_back(n.feature);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int> DecisionTree::leaf_values() const {
    std::vector<int> out;
    for (const auto& n : nodes_) {
        if (n.is_leaf) out.push_back(n.value);
    }
    return out;
}

void TreeFitConfig::validate() const {
    if (max_height < 1) throw ConfigError("max_height must be at least 1");
    if (max_size < 3) throw ConfigError("max_size must be at least 3");
    if (min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
}

json fit_config_to_json(const TreeFitConfig& config) {
    return {{"max_height", config.max_height},
            {"max_size", config.max_size},
            {"min_samples_split", config.min_samples_split},
            {"prune", config.prune}};
}

TreeFitConfig fit_config_from_json(const json& doc) {
    TreeFitConfig c;
    c.max_height = require_as<std::size_t>(doc, "max_height", "$.fit_config");
    c.max_size = require_as<std::size_t>(doc, "max_size", "$.fit_config");
    c.min_samples_split = require_as<std::size_t>(doc, "min_samples_split", "$.fit_config");
    c.prune = require_as<bool>(doc, "prune", "$.fit_config");
    c.validate();
    return c;
}

double gini(std::span<const std::size_t> counts) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw RangeError("gini of an empty node");
    double sum_sq = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

namespace {

using u128 = unsigned __int128;

// sum_k c_k^2 / n for both children as an exact fraction. Larger is purer:
// weighted child Gini = 1 - score / n_parent.
struct SplitScore {
    u128 num = 0;
    std::uint64_t den = 1;

    bool better_than(const SplitScore& o) const { return num * o.den > o.num * den; }
};

std::uint64_t sum_squares(const std::size_t* counts, std::size_t k) {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k; ++i) s += static_cast<std::uint64_t>(counts[i]) * counts[i];
    return s;
}

SplitScore make_score(const std::size_t* left, const std::size_t* right, std::size_t k,
                      std::uint64_t n_left, std::uint64_t n_right) {
    const u128 a = sum_squares(left, k);
    const u128 b = sum_squares(right, k);
    return {a * n_right + b * n_left, n_left * n_right};
}

struct Split {
    bool valid = false;
    std::size_t feature = 0;
    double critical_value = 0.0;
    FeatureKind kind = FeatureKind::discrete;
    SplitScore score;
};

struct GrowNode {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> counts;
    std::size_t depth = 0;
    Split split;
    std::int32_t left = -1;
    std::int32_t right = -1;
};

int majority(const std::vector<std::size_t>& counts) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < counts.size(); ++v) {
        if (counts[v] > counts[best]) best = v;
    }
    return static_cast<int>(best);
}

bool pure(const std::vector<std::size_t>& counts) {
    std::size_t nonzero = 0;
    for (auto c : counts) nonzero += c > 0;
    return nonzero <= 1;
}

class Fitter {
public:
    Fitter(const RealMatrix& inputs, std::span<const int> targets, std::span<const FeatureKind> kinds)
        : n_rows_(inputs.rows()), n_features_(inputs.cols()), targets_(targets), kinds_(kinds) {
        int top = 0;
        for (int t : targets) {
            if (t < 0) throw RangeError("fit_tree: targets must be nonnegative");
            top = std::max(top, t);
        }
        n_classes_ = static_cast<std::size_t>(top) + 1;
        binary_.assign(n_features_, 0);
        columns_.resize(n_features_);
        for (std::size_t f = 0; f < n_features_; ++f) {
            auto& col = columns_[f];
            col.resize(n_rows_);
            bool is_binary = kinds_[f] == FeatureKind::discrete;
            for (std::size_t r = 0; r < n_rows_; ++r) {
                const double v = inputs(r, f);
                if (!std::isfinite(v)) throw RangeError("fit_tree: non-finite input value");
                col[r] = v;
                is_binary = is_binary && (v == 0.0 || v == 1.0);
            }
            binary_[f] = is_binary;
            if (is_binary) {
                bits_.resize(n_features_);
                bits_[f].resize(n_rows_);
                for (std::size_t r = 0; r < n_rows_; ++r) bits_[f][r] = col[r] != 0.0;
            }
        }
    }

    std::size_t n_classes() const { return n_classes_; }
    int target(std::size_t r) const { return targets_[r]; }

    std::vector<std::size_t> count(const std::vector<std::size_t>& rows) const {
        std::vector<std::size_t> c(n_classes_, 0);
        for (auto r : rows) ++c[static_cast<std::size_t>(targets_[r])];
        return c;
    }

    Split best_split(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& counts) const {
        Split best;
        std::vector<std::size_t> left(n_classes_), right(n_classes_);
        const std::size_t k = n_classes_;
        const std::uint64_t n = rows.size();
        auto consider = [&](std::size_t f, double c, FeatureKind kind, std::uint64_t n_left) {
            const std::uint64_t n_right = n - n_left;
            if (n_left == 0 || n_right == 0) return;
            const SplitScore s = make_score(left.data(), right.data(), k, n_left, n_right);
            if (!best.valid || s.better_than(best.score)) {
                best = Split{true, f, c, kind, s};
            }
        };
        std::vector<std::size_t> sorted;
        for (std::size_t f = 0; f < n_features_; ++f) {
            if (binary_[f]) {
                // x == 0 goes left; c = 1 would give the mirrored partition and
                // lose the tie to the lower critical value.
                std::fill(right.begin(), right.end(), 0);
                const auto& bits = bits_[f];
                std::uint64_t n_right = 0;
                for (auto r : rows) {
                    if (bits[r]) {
                        ++right[static_cast<std::size_t>(targets_[r])];
                        ++n_right;
                    }
                }
                for (std::size_t i = 0; i < k; ++i) left[i] = counts[i] - right[i];
                consider(f, 0.0, FeatureKind::discrete, n - n_right);
                continue;
            }
            const auto& col = columns_[f];
            if (kinds_[f] == FeatureKind::discrete) {
                std::map<double, std::vector<std::size_t>> by_value;
                for (auto r : rows) {
                    auto& c = by_value[col[r]];
                    if (c.empty()) c.assign(k, 0);
                    ++c[static_cast<std::size_t>(targets_[r])];
                }
                if (by_value.size() < 2) continue;
                for (const auto& [value, c] : by_value) {
                    std::uint64_t n_left = 0;
                    for (std::size_t i = 0; i < k; ++i) {
                        left[i] = c[i];
                        right[i] = counts[i] - c[i];
                        n_left += c[i];
                    }
                    consider(f, value, FeatureKind::discrete, n_left);
                }
                continue;
            }
            sorted = rows;
            std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                return col[a] < col[b] || (col[a] == col[b] && a < b);
            });
            std::fill(left.begin(), left.end(), 0);
            right = counts;
            for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
                const auto t = static_cast<std::size_t>(targets_[sorted[i]]);
                ++left[t];
                --right[t];
                const double lo = col[sorted[i]];
                const double hi = col[sorted[i + 1]];
                if (lo == hi) continue;
                double mid = lo + (hi - lo) / 2.0;
                if (!(mid >= lo && mid < hi)) mid = lo;
                consider(f, mid, FeatureKind::continuous, i + 1);
            }
            right.assign(k, 0);
        }
        return best;
    }

    bool goes_left(const Split& s, std::size_t r) const {
        const double x = columns_[s.feature][r];
        return s.kind == FeatureKind::discrete ? x == s.critical_value : x <= s.critical_value;
    }

private:
    std::size_t n_rows_;
    std::size_t n_features_;
    std::size_t n_classes_ = 1;
    std::span<const int> targets_;
    std::span<const FeatureKind> kinds_;
    std::vector<std::vector<double>> columns_;
    std::vector<std::uint8_t> binary_;
    std::vector<std::vector<std::uint8_t>> bits_;
};

void check_conflict_free(const RealMatrix& inputs, std::span<const int> targets) {
    const RowGroups groups = group_rows(inputs);
    std::vector<int> seen(groups.count(), -1);
    for (std::size_t r = 0; r < inputs.rows(); ++r) {
        int& s = seen[groups.group_of_row[r]];
        if (s == -1) {
            s = targets[r];
        } else if (s != targets[r]) {
            throw ConflictError("fit_tree: rows " + std::to_string(groups.representative[groups.group_of_row[r]]) +
                                " and " + std::to_string(r) +
                                " have identical inputs but different targets");
        }
    }
}

// Impurity decrease of a split, in units of training rows.
double split_gain(const Split& s, const GrowNode& node) {
    const double n = static_cast<double>(node.rows.size());
    double parent = 0.0;
    for (auto c : node.counts) parent += static_cast<double>(c) * static_cast<double>(c);
    const double score = static_cast<double>(s.score.num) / static_cast<double>(s.score.den);
    return score - parent / n;
}

} // namespace

DecisionTree fit_tree(const RealMatrix& inputs, std::span<const int> targets,
                      std::span<const FeatureKind> kinds, const TreeFitConfig& config) {
    config.validate();
    if (inputs.rows() == 0) throw EmptyInputError("fit_tree: no training rows");
    if (targets.size() != inputs.rows()) {
        throw ShapeError("fit_tree: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(inputs.rows()) + " rows");
    }
    if (kinds.size() != inputs.cols()) {
        throw ShapeError("fit_tree: " + std::to_string(kinds.size()) + " feature kinds for " +
                         std::to_string(inputs.cols()) + " columns");
    }
    check_conflict_free(inputs, targets);
    Fitter fitter(inputs, targets, kinds);

    std::vector<GrowNode> grow;
    grow.reserve(64);
    {
        GrowNode root;
        root.rows.resize(inputs.rows());
        std::iota(root.rows.begin(), root.rows.end(), 0);
        root.counts = fitter.count(root.rows);
        grow.push_back(std::move(root));
    }

    auto expandable = [&](const GrowNode& node) {
        return !pure(node.counts) && node.rows.size() >= config.min_samples_split &&
               node.depth < config.max_height;
    };

    // (gain, -id): larger gain first, then earlier-created node.
    using Entry = std::pair<double, std::int64_t>;
    std::priority_queue<Entry> frontier;
    auto enqueue = [&](std::size_t id) {
        GrowNode& node = grow[id];
        if (!expandable(node)) return;
        node.split = fitter.best_split(node.rows, node.counts);
        if (!node.split.valid) {
            throw ConflictError("fit_tree: impure node cannot be split (identical inputs)");
        }
        frontier.emplace(split_gain(node.split, node), -static_cast<std::int64_t>(id));
    };
    enqueue(0);

    std::size_t node_count = 1;
    while (!frontier.empty() && node_count + 2 <= config.max_size) {
        const auto id = static_cast<std::size_t>(-frontier.top().second);
        frontier.pop();
        GrowNode left, right;
        for (auto r : grow[id].rows) {
            (fitter.goes_left(grow[id].split, r) ? left.rows : right.rows).push_back(r);
        }
        left.counts = fitter.count(left.rows);
        right.counts = fitter.count(right.rows);
        left.depth = right.depth = grow[id].depth + 1;
        grow[id].rows.clear();
        grow[id].rows.shrink_to_fit();
        const auto left_id = static_cast<std::int32_t>(grow.size());
        grow.push_back(std::move(left));
        grow.push_back(std::move(right));
        grow[id].left = left_id;
        grow[id].right = left_id + 1;
        node_count += 2;
        enqueue(static_cast<std::size_t>(left_id));
        enqueue(static_cast<std::size_t>(left_id + 1));
    }

    // Post-order pass: correct[i] = training rows classified correctly by the
    // (possibly pruned) subtree at i.
    std::vector<std::size_t> correct(grow.size(), 0);
    std::vector<std::uint8_t> collapsed(grow.size(), 0);
    {
        std::vector<std::pair<std::size_t, bool>> stack{{0, false}};
        while (!stack.empty()) {
            auto [id, done] = stack.back();
            stack.pop_back();
            GrowNode& node = grow[id];
            const std::size_t as_leaf = *std::max_element(node.counts.begin(), node.counts.end());
            if (node.left < 0) {
                correct[id] = as_leaf;
                continue;
            }
            if (!done) {
                stack.emplace_back(id, true);
                stack.emplace_back(static_cast<std::size_t>(node.right), false);
                stack.emplace_back(static_cast<std::size_t>(node.left), false);
                continue;
            }
            const std::size_t subtree = correct[static_cast<std::size_t>(node.left)] +
                                        correct[static_cast<std::size_t>(node.right)];
            if (config.prune && as_leaf >= subtree) {
                collapsed[id] = 1;
                correct[id] = as_leaf;
            } else {
                correct[id] = subtree;
            }
        }
    }

    // Emit in preorder.
    std::vector<TreeNode> nodes;
    {
        struct Pending {
            std::size_t id;
            std::int64_t parent;
            bool right;
        };
        std::vector<Pending> work{{0, -1, false}};
        while (!work.empty()) {
            Pending p = work.back();
            work.pop_back();
            const GrowNode& g = grow[p.id];
            const auto slot = static_cast<std::int32_t>(nodes.size());
            TreeNode out;
            if (g.left < 0 || collapsed[p.id]) {
                out.is_leaf = true;
                out.value = majority(g.counts);
            } else {
                out.is_leaf = false;
                out.feature = g.split.feature;
                out.critical_value = g.split.critical_value;
                out.kind = g.split.kind;
            }
            nodes.push_back(out);
            if (p.parent >= 0) {
                auto& parent = nodes[static_cast<std::size_t>(p.parent)];
                (p.right ? parent.right : parent.left) = slot;
            }
            if (!out.is_leaf) {
                work.push_back({static_cast<std::size_t>(g.right), slot, true});
                work.push_back({static_cast<std::size_t>(g.left), slot, false});
            }
        }
    }

    TreeMetadata meta;
    meta.max_height = config.max_height;
    meta.max_size = config.max_size;
    meta.training_accuracy = static_cast<double>(correct[0]) / static_cast<double>(inputs.rows());
    return DecisionTree(std::move(nodes), 0, meta);
}

double tree_accuracy(const DecisionTree& tree, const RealMatrix& inputs, std::span<const int> targets) {
    if (inputs.rows() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < inputs.rows(); ++r) hits += tree.decide(inputs.row(r)) == targets[r];
    return static_cast<double>(hits) / static_cast<double>(inputs.rows());
}

json tree_to_json(const DecisionTree& tree) {
    json doc;
    const auto& meta = tree.metadata();
    doc["layer"] = meta.layer;
    doc["neuron"] = meta.neuron;
    doc["root"] = tree.root();
    json nodes = json::array();
    for (const auto& n : tree.nodes()) {
        if (n.is_leaf) {
            nodes.push_back({{"kind", "leaf"}, {"value", n.value}});
        } else {
            nodes.push_back({{"kind", "split"},
                             {"v", n.feature},
                             {"c_v", n.critical_value},
                             {"feature_kind", feature_kind_name(n.kind)},
                             {"left", n.left},
                             {"right", n.right}});
        }
    }
    doc["nodes"] = std::move(nodes);
    doc["metadata"] = {{"input_layer", meta.input_layer},
                       {"height", meta.height},
                       {"node_count", meta.node_count},
                       {"training_accuracy", meta.training_accuracy},
                       {"max_height", meta.max_height},
                       {"max_size", meta.max_size}};
    return doc;
}

DecisionTree tree_from_json(const json& doc, const std::string& path) {
    const json& nodes_doc = require_field(doc, "nodes", path);
    if (!nodes_doc.is_array()) throw ParseError(path + ".nodes: expected an array");
    std::vector<TreeNode> nodes;
    nodes.reserve(nodes_doc.size());
    for (std::size_t i = 0; i < nodes_doc.size(); ++i) {
        const std::string np = path + ".nodes[" + std::to_string(i) + "]";
        const json& nd = nodes_doc[i];
        TreeNode n;
        const auto kind = require_as<std::string>(nd, "kind", np);
        if (kind == "leaf") {
            n.is_leaf = true;
            n.value = require_as<int>(nd, "value", np);
        } else if (kind == "split") {
            n.is_leaf = false;
            n.feature = require_as<std::size_t>(nd, "v", np);
            n.critical_value = require_as<double>(nd, "c_v", np);
            const auto fk = require_as<std::string>(nd, "feature_kind", np);
            if (fk == "discrete") {
                n.kind = FeatureKind::discrete;
            } else if (fk == "continuous") {
                n.kind = FeatureKind::continuous;
            } else {
                throw ParseError(np + ".feature_kind: unknown kind '" + fk + "'");
            }
            n.left = require_as<std::int32_t>(nd, "left", np);
            n.right = require_as<std::int32_t>(nd, "right", np);
        } else {
            throw ParseError(np + ".kind: unknown node kind '" + kind + "'");
        }
        nodes.push_back(n);
    }
    TreeMetadata meta;
    meta.layer = require_as<std::size_t>(doc, "layer", path);
    meta.neuron = require_as<std::size_t>(doc, "neuron", path);
    const json& md = require_field(doc, "metadata", path);
    const std::string mp = path + ".metadata";
    meta.input_layer = require_as<std::size_t>(md, "input_layer", mp);
    meta.training_accuracy = require_as<double>(md, "training_accuracy", mp);
    meta.max_height = require_as<std::size_t>(md, "max_height", mp);
    meta.max_size = require_as<std::size_t>(md, "max_size", mp);
    DecisionTree tree(std::move(nodes), require_as<std::size_t>(doc, "root", path), meta);
    if (tree.metadata().height != require_as<std::size_t>(md, "height", mp) ||
        tree.metadata().node_count != require_as<std::size_t>(md, "node_count", mp)) {
        throw ParseError(mp + ": height/node_count disagree with the node list");
    }
    return tree;
}

} // namespace mld
