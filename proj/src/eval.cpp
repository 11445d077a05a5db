#include "mld/eval.hpp"

#include <sstream>

namespace mld {

ScoreSet score(std::span<const int> reference, std::span<const int> predicted, std::size_t num_classes) {
    if (reference.empty()) throw EmptyInputError("score: no samples");
    if (reference.size() != predicted.size()) throw ShapeError("score: length mismatch");
    ScoreSet s;
    s.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const int r = reference[i];
        const int p = predicted[i];
        if (r < 0 || p < 0 || static_cast<std::size_t>(r) >= num_classes ||
            static_cast<std::size_t>(p) >= num_classes) {
            throw RangeError("score: label outside [0, " + std::to_string(num_classes) + ")");
        }
        ++s.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(p)];
        hits += r == p;
    }
    s.accuracy = static_cast<double>(hits) / static_cast<double>(reference.size());

    s.per_class_f1.assign(num_classes, 0.0);
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        std::size_t tp = s.confusion[k][k], support = 0, predicted_k = 0;
        for (std::size_t j = 0; j < num_classes; ++j) {
            support += s.confusion[k][j];
            predicted_k += s.confusion[j][k];
        }
        if (support == 0 && predicted_k == 0) continue;
        // F1 = 2 tp / (support + predicted)
        s.per_class_f1[k] = 2.0 * static_cast<double>(tp) / static_cast<double>(support + predicted_k);
        total += s.per_class_f1[k];
        ++counted;
    }
    s.f1 = counted ? total / static_cast<double>(counted) : 0.0;
    return s;
}

EvalReport evaluate(const MLDStructure& mld, const MLPModel& model, const Dataset& data,
                    const std::string& split) {
    data.validate();
    if (data.dim() != mld.input_dim() || data.dim() != model.input_dim()) {
        throw ShapeError("evaluate: dataset, model and MLD widths disagree");
    }
    if (model.num_classes() != mld.num_classes()) throw ShapeError("evaluate: class counts disagree");
    const RealMatrix prepared = mld.policy.apply(data.features);
    const auto network = predict_labels(model, prepared);
    const auto decided = predict_labels(mld, prepared);
    EvalReport report;
    report.split = split;
    report.method = "mld";
    report.n_samples = data.size();
    report.predictivity = score(data.labels, decided, mld.num_classes());
    report.fidelity = score(network, decided, mld.num_classes());
    return report;
}

Baseline baseline_cart(const Dataset& train, const MLPModel& model, const InputPolicy& policy,
                       const TreeFitConfig& config, BaselineTarget target) {
    train.validate();
    const RealMatrix prepared = policy.apply(train.features);
    const std::vector<int> labels =
        target == BaselineTarget::true_labels ? train.labels : predict_labels(model, prepared);
    const Resolution resolved = resolve_conflicts(prepared, labels, 1, 0);
    const FeatureKind kind =
        policy.mode == InputPolicy::Mode::binarize ? FeatureKind::discrete : FeatureKind::continuous;
    const std::vector<FeatureKind> kinds(prepared.cols(), kind);
    Baseline b{fit_tree(prepared, resolved.values, kinds, config), policy, target};
    return b;
}

EvalReport evaluate_baseline(const Baseline& baseline, const MLPModel& model, const Dataset& data,
                             const std::string& split) {
    data.validate();
    const RealMatrix prepared = baseline.policy.apply(data.features);
    const auto network = predict_labels(model, prepared);
    std::vector<int> decided(prepared.rows());
    for (std::size_t r = 0; r < prepared.rows(); ++r) decided[r] = baseline.tree.decide(prepared.row(r));
    const std::size_t K = model.num_classes();
    EvalReport report;
    report.split = split;
    report.method = baseline.target == BaselineTarget::true_labels ? "cart" : "cart_network_labels";
    report.n_samples = data.size();
    report.predictivity = score(data.labels, decided, K);
    report.fidelity = score(network, decided, K);
    return report;
}

namespace {

json scores_to_json(const ScoreSet& s) {
    return {{"accuracy", s.accuracy},
            {"f1", s.f1},
            {"per_class_f1", s.per_class_f1},
            {"confusion", s.confusion}};
}

ScoreSet scores_from_json(const json& doc, const std::string& path) {
    ScoreSet s;
    s.accuracy = require_as<double>(doc, "accuracy", path);
    s.f1 = require_as<double>(doc, "f1", path);
    s.per_class_f1 = require_as<std::vector<double>>(doc, "per_class_f1", path);
    s.confusion = require_as<ConfusionMatrix>(doc, "confusion", path);
    return s;
}

} // namespace

json eval_to_json(const EvalReport& report) {
    json doc = make_envelope("eval_report");
    doc["split"] = report.split;
    doc["method"] = report.method;
    doc["n_samples"] = report.n_samples;
    doc["f1_average"] = "macro";
    doc["predictivity"] = scores_to_json(report.predictivity);
    doc["fidelity"] = scores_to_json(report.fidelity);
    return doc;
}

EvalReport eval_from_json(const json& doc) {
    check_envelope(doc, "eval_report");
    EvalReport r;
    r.split = require_as<std::string>(doc, "split", "$");
    r.method = require_as<std::string>(doc, "method", "$");
    r.n_samples = require_as<std::size_t>(doc, "n_samples", "$");
    r.predictivity = scores_from_json(require_field(doc, "predictivity", "$"), "$.predictivity");
    r.fidelity = scores_from_json(require_field(doc, "fidelity", "$"), "$.fidelity");
    return r;
}

std::string summary_table_csv(const std::vector<std::pair<EvalReport, EvalReport>>& train_test_rows) {
    std::ostringstream out;
    out.precision(4);
    out << std::fixed;
    out << "method,pred_acc_train,pred_f1_train,pred_acc_test,pred_f1_test,"
           "fid_acc_train,fid_f1_train,fid_acc_test,fid_f1_test\n";
    for (const auto& [train, test] : train_test_rows) {
        out << train.method << ',' << train.predictivity.accuracy << ',' << train.predictivity.f1 << ','
            << test.predictivity.accuracy << ',' << test.predictivity.f1 << ','
            << train.fidelity.accuracy << ',' << train.fidelity.f1 << ',' << test.fidelity.accuracy
            << ',' << test.fidelity.f1 << '\n';
    }
    return out.str();
}

} // namespace mld
