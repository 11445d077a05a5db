#pragma once

#include <span>
#include <string>
#include <vector>

#include "mld/dtree.hpp"
#include "mld/mld.hpp"
#include "mld/nnmodel.hpp"

namespace mld {

/// Rows are the reference label, columns the prediction.
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

struct ScoreSet {
    double accuracy = 0.0;
    /// Macro average over classes that occur as reference or prediction;
    /// a class with no predictions (or no references) contributes F1 = 0.
    double f1 = 0.0;
    std::vector<double> per_class_f1;
    ConfusionMatrix confusion;
};

ScoreSet score(std::span<const int> reference, std::span<const int> predicted, std::size_t num_classes);

struct EvalReport {
    std::string split;
    std::string method;  // "mld" or "cart"
    ScoreSet predictivity;  // vs true labels
    ScoreSet fidelity;      // vs network labels
    std::size_t n_samples = 0;
};

/// Predictivity: MLD final labels vs true labels. Fidelity: vs the
/// network's argmax on the same policy-applied inputs.
EvalReport evaluate(const MLDStructure& mld, const MLPModel& model, const Dataset& data,
                    const std::string& split);

/// Single multiclass CART tree fitted on the policy-applied raw inputs,
/// either against true labels or against the network's labels.
enum class BaselineTarget { true_labels, network_labels };

struct Baseline {
    DecisionTree tree;
    InputPolicy policy;
    BaselineTarget target = BaselineTarget::true_labels;
};

/// Conflicting duplicate rows are first reduced to their mode label.
Baseline baseline_cart(const Dataset& train, const MLPModel& model, const InputPolicy& policy,
                       const TreeFitConfig& config, BaselineTarget target = BaselineTarget::true_labels);
EvalReport evaluate_baseline(const Baseline& baseline, const MLPModel& model, const Dataset& data,
                             const std::string& split);

json eval_to_json(const EvalReport& report);
EvalReport eval_from_json(const json& doc);

/// Header plus one row per method, columns ordered
/// predictivity(acc,f1 train, acc,f1 test), fidelity(same).
std::string summary_table_csv(const std::vector<std::pair<EvalReport, EvalReport>>& train_test_rows);

} // namespace mld
