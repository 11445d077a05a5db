#include "mld/mld.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "mld/parallel.hpp"

namespace mld {

const DecisionTree& MLDStructure::tree(const TreeRef& ref) const {
    check_ref(ref);
    if (ref.multiclass) return multiclass;
    return layers[ref.layer - 2][ref.index];
}

void MLDStructure::check_ref(const TreeRef& ref) const {
    const std::size_t L = num_layers();
    if (ref.multiclass) {
        if (ref.layer != L) {
            throw RangeError("multiclass tree lives in layer " + std::to_string(L) + ", not " +
                             std::to_string(ref.layer));
        }
        return;
    }
    if (ref.layer < 2 || ref.layer > L) {
        throw RangeError("layer " + std::to_string(ref.layer) + " has no trees (valid: 2.." +
                         std::to_string(L) + ")");
    }
    if (ref.index >= layer_sizes[ref.layer - 1]) {
        throw RangeError("layer " + std::to_string(ref.layer) + " has " +
                         std::to_string(layer_sizes[ref.layer - 1]) + " trees, index " +
                         std::to_string(ref.index) + " is out of range");
    }
}

void MLDStructure::validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("MLD needs at least 2 layers");
    if (layers.size() != layer_sizes.size() - 1) throw ShapeError("MLD layer count mismatch");
    auto check_tree = [&](const DecisionTree& t, std::size_t layer, const std::string& what) {
        const std::size_t width = layer_sizes[layer - 2];
        for (auto f : t.referenced_features()) {
            if (f >= width) {
                throw ConsistencyError(what + " reads feature " + std::to_string(f) +
                                       " but layer " + std::to_string(layer - 1) + " has " +
                                       std::to_string(width));
            }
        }
    };
    for (std::size_t l = 2; l <= layer_sizes.size(); ++l) {
        const auto& trees = layers[l - 2];
        if (trees.size() != layer_sizes[l - 1]) {
            throw ShapeError("layer " + std::to_string(l) + " has " + std::to_string(trees.size()) +
                             " trees for " + std::to_string(layer_sizes[l - 1]) + " neurons");
        }
        for (std::size_t k = 0; k < trees.size(); ++k) {
            check_tree(trees[k], l, "tree (" + std::to_string(l) + "," + std::to_string(k) + ")");
        }
    }
    check_tree(multiclass, layer_sizes.size(), "multiclass tree");
    for (int v : multiclass.leaf_values()) {
        if (v < 0 || static_cast<std::size_t>(v) >= num_classes()) {
            throw ConsistencyError("multiclass tree has leaf label " + std::to_string(v));
        }
    }
}

namespace {

RealMatrix bits_to_real(const BitMatrix& bits) {
    RealMatrix out(bits.rows(), bits.cols());
    for (std::size_t i = 0; i < bits.data().size(); ++i) out.data()[i] = bits.data()[i];
    return out;
}

} // namespace

MLDStructure build_mld_from_trace(const DiscretizedTrace& trace, std::span<const int> network_labels,
                                  const BuildOptions& options) {
    options.fit.validate();
    options.policy.validate();
    const std::size_t L = trace.layer_sizes.size();
    if (L < 2) throw ShapeError("trace needs at least 2 layers");
    if (network_labels.size() != trace.rows()) {
        throw ShapeError("need one network label per trace row");
    }

    MLDStructure mld;
    mld.layer_sizes = trace.layer_sizes;
    mld.policy = options.policy;
    mld.provenance.fit_config = options.fit;
    mld.provenance.fit_samples = trace.rows();
    mld.layers.resize(L - 1);

    const FeatureKind input_kind = options.policy.mode == InputPolicy::Mode::binarize
        ? FeatureKind::discrete
        : FeatureKind::continuous;

    RealMatrix inputs = trace.input;
    for (std::size_t l = 2; l <= L; ++l) {
        const std::vector<FeatureKind> kinds(inputs.cols(),
                                             l == 2 ? input_kind : FeatureKind::discrete);
        const BitMatrix& targets = trace.layer(l);
        auto& trees = mld.layers[l - 2];
        trees.resize(targets.cols());
        parallel_for(targets.cols(), options.threads, [&](std::size_t k) {
            std::vector<int> column(targets.rows());
            for (std::size_t r = 0; r < targets.rows(); ++r) column[r] = targets(r, k);
            DecisionTree t = fit_tree(inputs, column, kinds, options.fit);
            t.metadata().layer = l;
            t.metadata().neuron = k;
            t.metadata().input_layer = l - 1;
            trees[k] = std::move(t);
        });
        if (l == L) {
            const Resolution resolved = resolve_conflicts(inputs, network_labels, L, targets.cols());
            mld.multiclass = fit_tree(inputs, resolved.values, kinds, options.fit);
            mld.multiclass.metadata().layer = L;
            mld.multiclass.metadata().neuron = targets.cols();
            mld.multiclass.metadata().input_layer = L - 1;
        } else {
            inputs = bits_to_real(targets);
        }
    }
    mld.validate();
    return mld;
}

MLDStructure build_mld(const MLPModel& model, const Dataset& data, const BuildOptions& options) {
    model.validate();
    data.validate();
    if (data.dim() != model.input_dim()) {
        throw ShapeError("dataset has " + std::to_string(data.dim()) + " features, model expects " +
                         std::to_string(model.input_dim()));
    }
    // The network is judged on the same policy-applied inputs the MLD sees.
    const RealMatrix prepared = options.policy.apply(data.features);
    const ActivationRecord record = collect_activations(model, prepared);
    const DiscretizedTrace trace = build_boolean_targets(record, options.policy, options.threads);
    const std::vector<int> labels = predict_labels(model, prepared);
    MLDStructure mld = build_mld_from_trace(trace, labels, options);
    mld.provenance.model_hash = model_hash(model);
    mld.provenance.dataset_name = data.name;
    return mld;
}

namespace {

// Values each layer's trees read: inputs[l] feeds the trees of layer l + 2.
std::vector<std::vector<double>> layer_inputs(const MLDStructure& mld, std::span<const double> input,
                                              MLDDecision& decision) {
    if (input.size() != mld.input_dim()) {
        throw ShapeError("input has " + std::to_string(input.size()) + " features, MLD expects " +
                         std::to_string(mld.input_dim()));
    }
    const std::size_t L = mld.num_layers();
    std::vector<std::vector<double>> feeds;
    feeds.reserve(L - 1);
    feeds.push_back(mld.policy.apply(input));
    decision.per_tree_outputs.assign(L - 1, {});
    for (std::size_t l = 2; l <= L; ++l) {
        const auto& trees = mld.trees(l);
        auto& out = decision.per_tree_outputs[l - 2];
        out.resize(trees.size());
        for (std::size_t k = 0; k < trees.size(); ++k) out[k] = trees[k].decide(feeds.back());
        if (l < L) feeds.emplace_back(out.begin(), out.end());
    }
    decision.final_label = mld.multiclass.decide(feeds.back());
    decision.binary_votes = decision.per_tree_outputs.back();
    return feeds;
}

} // namespace

MLDDecision forward_decision(const MLDStructure& mld, std::span<const double> input) {
    MLDDecision decision;
    layer_inputs(mld, input, decision);
    return decision;
}

std::vector<int> predict_labels(const MLDStructure& mld, const RealMatrix& features) {
    std::vector<int> out(features.rows());
    for (std::size_t r = 0; r < features.rows(); ++r) {
        out[r] = forward_decision(mld, features.row(r)).final_label;
    }
    return out;
}

bool RuleSet::satisfied_by(std::span<const double> input) const {
    for (const auto& item : items) {
        if (item.layer != 1 || item.feature >= input.size()) return false;
        if (!item.holds(input[item.feature])) return false;
    }
    return true;
}

void normalize_items(std::vector<RuleItem>& items, bool& has_contradiction) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());

    std::vector<RuleItem> out;
    out.reserve(items.size());
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].layer == items[i].layer &&
               items[j].feature == items[i].feature) {
            ++j;
        }
        // Items for one feature: [i, j).
        const RuleItem* upper = nullptr;  // tightest <=
        const RuleItem* lower = nullptr;  // tightest >
        const RuleItem* equal = nullptr;
        for (std::size_t t = i; t < j; ++t) {
            const RuleItem& it = items[t];
            switch (it.sign) {
                case Sign::le:
                    if (!upper || it.critical_value < upper->critical_value) upper = &it;
                    break;
                case Sign::gt:
                    if (!lower || it.critical_value > lower->critical_value) lower = &it;
                    break;
                case Sign::eq:
                    if (equal && equal->critical_value != it.critical_value) has_contradiction = true;
                    equal = &it;
                    out.push_back(it);
                    break;
                case Sign::ne:
                    out.push_back(it);
                    break;
            }
        }
        for (std::size_t t = i; t < j; ++t) {
            if (items[t].sign == Sign::ne) {
                for (std::size_t u = i; u < j; ++u) {
                    if (items[u].sign == Sign::eq && items[u].critical_value == items[t].critical_value) {
                        has_contradiction = true;
                    }
                }
            }
        }
        if (upper && lower && lower->critical_value >= upper->critical_value) has_contradiction = true;
        if (lower) out.push_back(*lower);
        if (upper) out.push_back(*upper);
        i = j;
    }
    std::sort(out.begin(), out.end());
    items = std::move(out);
}

namespace {

class Inducer {
public:
    Inducer(const MLDStructure& mld, std::vector<std::vector<double>> feeds, bool keep_trace)
        : mld_(mld), feeds_(std::move(feeds)), keep_trace_(keep_trace) {}

    // Items over the input layer implying the tree's current output.
    const std::vector<RuleItem>& induce(const TreeRef& ref) {
        const auto key = std::make_tuple(ref.layer, ref.index, ref.multiclass);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;

        const DecisionTree& tree = mld_.tree(ref);
        TreeRule direct = tree.rule(feeds_[ref.layer - 2]);
        if (keep_trace_) trace_.push_back({ref, direct.value, direct.items});
        std::vector<RuleItem> items;
        if (ref.layer == 2) {
            items = direct.items;
        } else {
            for (const RuleItem& r : direct.items) {
                const auto& sub = induce(TreeRef::node(ref.layer - 1, r.feature));
                items.insert(items.end(), sub.begin(), sub.end());
            }
        }
        bool contradiction = false;
        normalize_items(items, contradiction);
        return memo_.emplace(key, std::move(items)).first->second;
    }

    int value_of(const TreeRef& ref) const { return mld_.tree(ref).decide(feeds_[ref.layer - 2]); }
    std::vector<TraceStep> take_trace() { return std::move(trace_); }
    const std::vector<double>& input() const { return feeds_.front(); }

private:
    const MLDStructure& mld_;
    std::vector<std::vector<double>> feeds_;
    bool keep_trace_;
    std::map<std::tuple<std::size_t, std::size_t, bool>, std::vector<RuleItem>> memo_;
    std::vector<TraceStep> trace_;
};

RuleSet induce_with(Inducer& inducer, const TreeRef& target) {
    RuleSet rules;
    rules.target = target;
    rules.items = inducer.induce(target);
    normalize_items(rules.items, rules.has_contradiction);
    rules.asserted_value = inducer.value_of(target);
    rules.depth_trace = inducer.take_trace();
    if (rules.has_contradiction || !rules.satisfied_by(inducer.input())) {
        throw ConsistencyError("induced rule set for tree (" + std::to_string(target.layer) + "," +
                               std::to_string(target.index) + ") is not satisfied by its own sample");
    }
    return rules;
}

} // namespace

RuleSet backward_rule_induction(const MLDStructure& mld, std::span<const double> input,
                                const TreeRef& target, bool keep_trace) {
    mld.check_ref(target);
    MLDDecision decision;
    Inducer inducer(mld, layer_inputs(mld, input, decision), keep_trace);
    return induce_with(inducer, target);
}

std::vector<ClassExplanation> explain_sample(const MLDStructure& mld, std::span<const double> input,
                                             bool keep_trace) {
    MLDDecision decision;
    const auto feeds = layer_inputs(mld, input, decision);
    // The memo is shared across classes; a trace needs every step per class,
    // so tracing runs use a fresh inducer each time.
    Inducer shared(mld, feeds, false);
    std::vector<ClassExplanation> out;
    const std::size_t L = mld.num_layers();
    for (std::size_t k = 0; k < mld.num_classes(); ++k) {
        ClassExplanation e;
        if (keep_trace) {
            Inducer own(mld, feeds, true);
            e.rules = induce_with(own, TreeRef::node(L, k));
        } else {
            e.rules = induce_with(shared, TreeRef::node(L, k));
        }
        e.positive = e.rules.asserted_value == 1;
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

std::string number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string feature_name(std::size_t layer, std::size_t feature) {
    if (layer == 1) return "x_" + std::to_string(feature + 1);
    return "x^(" + std::to_string(layer) + ")_" + std::to_string(feature + 1);
}

} // namespace

std::string format_item(const RuleItem& item) {
    const std::string name = feature_name(item.layer, item.feature);
    const std::string c = number(item.critical_value);
    switch (item.sign) {
        case Sign::eq: return "(" + name + "=" + c + ")";
        case Sign::ne:
            // Boolean features: "differs from 0" reads as "= 1".
            if (item.critical_value == 0.0) return "(" + name + "=1)";
            return "(" + name + "≠" + c + ")";
        case Sign::le: return "(" + name + "≤" + c + ")";
        case Sign::gt: return "(" + name + ">" + c + ")";
    }
    return "";
}

std::string format_rule(const RuleSet& rules, std::size_t output_layer) {
    std::string out;
    for (std::size_t i = 0; i < rules.items.size(); ++i) {
        if (i) out += " ∧ ";
        out += format_item(rules.items[i]);
    }
    if (rules.items.empty()) out = "(true)";
    out += " ⇒ ";
    const std::string value = std::to_string(rules.asserted_value);
    if (rules.target.multiclass) {
        out += "(y=" + value + ")";
    } else if (rules.target.layer == output_layer) {
        out += "(y_" + std::to_string(rules.target.index + 1) + "=" + value + ")";
    } else {
        out += "(" + feature_name(rules.target.layer, rules.target.index) + "=" + value + ")";
    }
    return out;
}

json tree_ref_to_json(const TreeRef& ref) {
    return {{"layer", ref.layer}, {"index", ref.index}, {"multiclass", ref.multiclass}};
}

TreeRef tree_ref_from_json(const json& doc, const std::string& path) {
    TreeRef ref;
    ref.layer = require_as<std::size_t>(doc, "layer", path);
    ref.index = require_as<std::size_t>(doc, "index", path);
    ref.multiclass = require_as<bool>(doc, "multiclass", path);
    return ref;
}

json rule_item_to_json(const RuleItem& item) {
    return {{"layer", item.layer},
            {"v", item.feature},
            {"c_v", item.critical_value},
            {"sign", sign_symbol(item.sign)}};
}

RuleItem rule_item_from_json(const json& doc, const std::string& path) {
    RuleItem item;
    item.layer = require_as<std::size_t>(doc, "layer", path);
    item.feature = require_as<std::size_t>(doc, "v", path);
    item.critical_value = require_as<double>(doc, "c_v", path);
    item.sign = parse_sign(require_as<std::string>(doc, "sign", path));
    return item;
}

namespace {

json items_to_json(const std::vector<RuleItem>& items) {
    json out = json::array();
    for (const auto& item : items) out.push_back(rule_item_to_json(item));
    return out;
}

std::vector<RuleItem> items_from_json(const json& doc, const std::string& path) {
    if (!doc.is_array()) throw ParseError(path + ": expected an array");
    std::vector<RuleItem> items;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        items.push_back(rule_item_from_json(doc[i], path + "[" + std::to_string(i) + "]"));
    }
    return items;
}

} // namespace

json ruleset_to_json(const RuleSet& rules, std::optional<std::size_t> sample_id, bool positive) {
    json doc = make_envelope("ruleset");
    doc["sample_id"] = sample_id ? json(*sample_id) : json(nullptr);
    doc["target"] = tree_ref_to_json(rules.target);
    doc["items"] = items_to_json(rules.items);
    doc["asserted_value"] = rules.asserted_value;
    doc["positive"] = positive;
    doc["has_contradiction"] = rules.has_contradiction;
    if (!rules.depth_trace.empty()) {
        json steps = json::array();
        for (const auto& step : rules.depth_trace) {
            steps.push_back({{"tree", tree_ref_to_json(step.tree)},
                             {"value", step.value},
                             {"items", items_to_json(step.items)}});
        }
        doc["depth_trace"] = std::move(steps);
    }
    return doc;
}

RuleSet ruleset_from_json(const json& doc) {
    check_envelope(doc, "ruleset");
    RuleSet rules;
    rules.target = tree_ref_from_json(require_field(doc, "target", "$"), "$.target");
    rules.items = items_from_json(require_field(doc, "items", "$"), "$.items");
    rules.asserted_value = require_as<int>(doc, "asserted_value", "$");
    rules.has_contradiction = require_as<bool>(doc, "has_contradiction", "$");
    if (auto it = doc.find("depth_trace"); it != doc.end()) {
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string p = "$.depth_trace[" + std::to_string(i) + "]";
            const json& s = (*it)[i];
            TraceStep step;
            step.tree = tree_ref_from_json(require_field(s, "tree", p), p + ".tree");
            step.value = require_as<int>(s, "value", p);
            step.items = items_from_json(require_field(s, "items", p), p + ".items");
            rules.depth_trace.push_back(std::move(step));
        }
    }
    return rules;
}

json mld_to_json(const MLDStructure& mld) {
    json doc = make_envelope("mld");
    doc["layer_sizes"] = mld.layer_sizes;
    doc["policy"] = policy_to_json(mld.policy);
    doc["provenance"] = {{"model_hash", mld.provenance.model_hash},
                         {"fit_config", fit_config_to_json(mld.provenance.fit_config)},
                         {"dataset_name", mld.provenance.dataset_name},
                         {"fit_samples", mld.provenance.fit_samples}};
    json hidden = json::array();
    for (std::size_t l = 2; l < mld.num_layers(); ++l) {
        json trees = json::array();
        for (const auto& t : mld.trees(l)) trees.push_back(tree_to_json(t));
        hidden.push_back(std::move(trees));
    }
    doc["layers"] = std::move(hidden);
    json binary = json::array();
    for (const auto& t : mld.trees(mld.output_layer())) binary.push_back(tree_to_json(t));
    doc["output_scheme"] = {{"binary_per_class", std::move(binary)},
                            {"multiclass", tree_to_json(mld.multiclass)}};
    return doc;
}

MLDStructure mld_from_json(const json& doc) {
    check_envelope(doc, "mld");
    MLDStructure mld;
    mld.layer_sizes = require_as<std::vector<std::size_t>>(doc, "layer_sizes", "$");
    if (mld.layer_sizes.size() < 2) throw ParseError("$.layer_sizes: need at least 2 layers");
    mld.policy = policy_from_json(require_field(doc, "policy", "$"));
    const json& prov = require_field(doc, "provenance", "$");
    mld.provenance.model_hash = require_as<std::string>(prov, "model_hash", "$.provenance");
    mld.provenance.fit_config = fit_config_from_json(require_field(prov, "fit_config", "$.provenance"));
    mld.provenance.dataset_name = require_as<std::string>(prov, "dataset_name", "$.provenance");
    mld.provenance.fit_samples = require_as<std::size_t>(prov, "fit_samples", "$.provenance");
    const json& hidden = require_field(doc, "layers", "$");
    if (!hidden.is_array() || hidden.size() + 2 != mld.layer_sizes.size()) {
        throw ParseError("$.layers: expected " + std::to_string(mld.layer_sizes.size() - 2) +
                         " hidden layers");
    }
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        std::vector<DecisionTree> trees;
        for (std::size_t k = 0; k < hidden[i].size(); ++k) {
            trees.push_back(tree_from_json(hidden[i][k], "$.layers[" + std::to_string(i) + "][" +
                                                             std::to_string(k) + "]"));
        }
        mld.layers.push_back(std::move(trees));
    }
    const json& scheme = require_field(doc, "output_scheme", "$");
    const json& binary = require_field(scheme, "binary_per_class", "$.output_scheme");
    std::vector<DecisionTree> out;
    for (std::size_t k = 0; k < binary.size(); ++k) {
        out.push_back(tree_from_json(binary[k], "$.output_scheme.binary_per_class[" +
                                                    std::to_string(k) + "]"));
    }
    mld.layers.push_back(std::move(out));
    mld.multiclass = tree_from_json(require_field(scheme, "multiclass", "$.output_scheme"),
                                    "$.output_scheme.multiclass");
    mld.validate();
    return mld;
}

void save_mld(const MLDStructure& mld, const std::filesystem::path& path) {
    write_json_file(path, mld_to_json(mld));
}

MLDStructure load_mld(const std::filesystem::path& path) { return mld_from_json(read_json_file(path)); }

json fit_summary_to_json(const MLDStructure& mld) {
    json doc = make_envelope("fit_summary");
    json rows = json::array();
    auto row = [](const DecisionTree& t, const std::string& role) {
        const auto& m = t.metadata();
        return json{{"layer", m.layer},
                    {"index", m.neuron},
                    {"role", role},
                    {"height", m.height},
                    {"node_count", m.node_count},
                    {"training_accuracy", m.training_accuracy}};
    };
    for (std::size_t l = 2; l <= mld.num_layers(); ++l) {
        for (const auto& t : mld.trees(l)) {
            rows.push_back(row(t, l == mld.output_layer() ? "binary_output" : "hidden"));
        }
    }
    rows.push_back(row(mld.multiclass, "multiclass_output"));
    doc["trees"] = std::move(rows);
    doc["provenance"] = {{"model_hash", mld.provenance.model_hash},
                         {"dataset_name", mld.provenance.dataset_name},
                         {"fit_samples", mld.provenance.fit_samples},
                         {"fit_config", fit_config_to_json(mld.provenance.fit_config)}};
    return doc;
}

} // namespace mld
