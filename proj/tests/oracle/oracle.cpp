#include "oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace mld::oracle {

TruthTable::TruthTable(std::size_t n, std::vector<int> v) : arity(n), values(std::move(v)) {
    if (n > 20) throw std::invalid_argument("truth table arity above 20");
    if (values.size() != (std::size_t{1} << n)) throw std::invalid_argument("truth table is incomplete");
}

std::vector<double> bits_of(std::uint64_t index, std::size_t width) {
    std::vector<double> x(width);
    for (std::size_t j = 0; j < width; ++j) x[j] = static_cast<double>((index >> j) & 1u);
    return x;
}

std::vector<double> TruthTable::point(std::size_t index) const { return bits_of(index, arity); }

RealMatrix TruthTable::inputs() const {
    RealMatrix m(size(), arity);
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = 0; j < arity; ++j) m(i, j) = static_cast<double>((i >> j) & 1u);
    }
    return m;
}

int walk_tree(const DecisionTree& tree, const std::vector<double>& x) {
    const auto& nodes = tree.nodes();
    std::size_t at = tree.root();
    for (std::size_t steps = 0; steps <= nodes.size(); ++steps) {
        const TreeNode& n = nodes.at(at);
        if (n.is_leaf) return n.value;
        const double v = x.at(n.feature);
        bool go_left;
        if (n.kind == FeatureKind::discrete) {
            go_left = v == n.critical_value;
        } else {
            go_left = v <= n.critical_value;
        }
        at = static_cast<std::size_t>(go_left ? n.left : n.right);
    }
    throw std::logic_error("tree walk did not terminate");
}

std::vector<Mismatch> exhaustive_tree_check(const DecisionTree& tree, const TruthTable& table) {
    std::vector<Mismatch> out;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const int got = walk_tree(tree, table.point(i));
        if (got != table.values[i]) out.push_back({i, table.values[i], got});
    }
    return out;
}

MLDDecision naive_mld_eval(const MLDStructure& mld, const std::vector<double>& input) {
    std::vector<double> current(input.size());
    for (std::size_t j = 0; j < input.size(); ++j) {
        if (mld.policy.mode == InputPolicy::Mode::binarize) {
            current[j] = input[j] >= mld.policy.threshold ? 1.0 : 0.0;
        } else {
            current[j] = input[j];
        }
    }
    MLDDecision d;
    for (const auto& layer : mld.layers) {
        std::vector<int> outs;
        for (const auto& t : layer) outs.push_back(walk_tree(t, current));
        d.per_tree_outputs.push_back(outs);
        if (&layer == &mld.layers.back()) {
            d.binary_votes = outs;
            d.final_label = walk_tree(mld.multiclass, current);
        }
        current.assign(outs.begin(), outs.end());
    }
    return d;
}

bool item_holds(const RuleItem& item, double x) {
    switch (item.sign) {
    case Sign::eq: return x == item.critical_value;
    case Sign::ne: return x != item.critical_value;
    case Sign::le: return x <= item.critical_value;
    case Sign::gt: return x > item.critical_value;
    }
    return false;
}

bool items_satisfied(const std::vector<RuleItem>& items, const std::vector<double>& x) {
    for (const auto& it : items) {
        if (!item_holds(it, x.at(it.feature))) return false;
    }
    return true;
}

CoverResult rule_cover_enumeration(const MLDStructure& mld, const RuleSet& rules, const TreeRef& target) {
    const std::size_t d = mld.input_dim();
    if (d > 16) throw std::invalid_argument("rule cover enumeration is capped at 16 inputs");
    CoverResult out;
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << d); ++i) {
        const auto x = bits_of(i, d);
        if (!items_satisfied(rules.items, x)) continue;
        out.satisfying.push_back(i);
        const MLDDecision dec = naive_mld_eval(mld, x);
        int value;
        if (target.multiclass) {
            value = dec.final_label;
        } else {
            value = dec.per_tree_outputs.at(target.layer - 2).at(target.index);
        }
        ++out.decisions[value];
    }
    out.contradictory = out.satisfying.empty();
    return out;
}

std::vector<std::vector<double>> naive_activations(const MLPModel& model, const std::vector<double>& x) {
    std::vector<std::vector<double>> layers{x};
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const auto& prev = layers.back();
        std::vector<double> z(model.layer_sizes[l + 1]);
        for (std::size_t k = 0; k < z.size(); ++k) {
            double s = model.biases[l][k];
            for (std::size_t j = 0; j < prev.size(); ++j) s += model.weights[l](k, j) * prev[j];
            z[k] = s;
        }
        if (l + 2 == model.layer_sizes.size()) {
            double top = z[0];
            for (double v : z) top = std::max(top, v);
            double sum = 0.0;
            for (double& v : z) sum += (v = std::exp(v - top));
            for (double& v : z) v /= sum;
        } else {
            for (double& v : z) {
                v = model.activation == Activation::sigmoid ? 1.0 / (1.0 + std::exp(-v))
                                                            : (std::tanh(v) + 1.0) / 2.0;
            }
        }
        layers.push_back(std::move(z));
    }
    return layers;
}

} // namespace mld::oracle
