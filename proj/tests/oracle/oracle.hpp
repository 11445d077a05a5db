#pragma once

// Brute-force reference implementations for tests. Nothing here calls the
// decision, rule or fitting code of the library; only its data types are
// shared.

#include <cstdint>
#include <map>
#include <vector>

#include "mld/dtree.hpp"
#include "mld/mld.hpp"

namespace mld::oracle {

/// Complete boolean function of `arity` inputs. Input pattern `i` has
/// x_j = bit j of i.
struct TruthTable {
    std::size_t arity = 0;
    std::vector<int> values;  // 2^arity entries

    TruthTable() : values(1, 0) {}
    TruthTable(std::size_t n, std::vector<int> v);

    std::size_t size() const { return values.size(); }
    std::vector<double> point(std::size_t index) const;
    /// Every pattern as a row of 0/1 doubles.
    RealMatrix inputs() const;
};

std::vector<double> bits_of(std::uint64_t index, std::size_t width);

struct Mismatch {
    std::size_t index = 0;
    int expected = 0;
    int actual = 0;
};

int walk_tree(const DecisionTree& tree, const std::vector<double>& x);

/// Evaluates the tree on all 2^n points; empty iff it equals the table.
std::vector<Mismatch> exhaustive_tree_check(const DecisionTree& tree, const TruthTable& table);

/// Layer-by-layer composition written out directly over the node arrays.
MLDDecision naive_mld_eval(const MLDStructure& mld, const std::vector<double>& input);

bool item_holds(const RuleItem& item, double x);
bool items_satisfied(const std::vector<RuleItem>& items, const std::vector<double>& x);

struct CoverResult {
    std::vector<std::uint64_t> satisfying;
    std::map<int, std::size_t> decisions;  // decision value -> count among satisfying inputs
    bool contradictory = false;            // no input satisfies the rule set

    bool single_decision() const { return decisions.size() == 1; }
};

/// Enumerates all 2^d boolean inputs (d <= 16), keeps those satisfying the
/// rule set and records what the target tree decides on each of them.
CoverResult rule_cover_enumeration(const MLDStructure& mld, const RuleSet& rules, const TreeRef& target);

/// Per-layer activations of one input (softmax last), computed directly.
std::vector<std::vector<double>> naive_activations(const MLPModel& model, const std::vector<double>& x);

} // namespace mld::oracle
