// mld: train, distill, explain and evaluate multi-level decision structures.
//
// Every command reads an optional JSON run config (flags override its
// fields), writes its outputs plus the resolved config and a manifest into
// one run directory, and keeps wall-clock timestamps in run_meta.json so the
// remaining files are byte-stable across reruns.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mld/eval.hpp"
#include "mld/importance.hpp"
#include "mld/io.hpp"
#include "mld/mld.hpp"

using namespace mld;
namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,
    kConfig = 3,
    kFile = 4,
    kDimension = 5,
    kConsistency = 6,
    kVersion = 7,
    kDivergence = 8,
    kEmpty = 9,
};

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::parse:
    case ErrorKind::config:
        return kConfig;
    case ErrorKind::file:
        return kFile;
    case ErrorKind::shape:
    case ErrorKind::range:
        return kDimension;
    case ErrorKind::conflict:
    case ErrorKind::consistency:
        return kConsistency;
    case ErrorKind::unsupported_version:
        return kVersion;
    case ErrorKind::divergence:
        return kDivergence;
    case ErrorKind::empty_input:
        return kEmpty;
    }
    return kInternal;
}

int report_error(const std::string& kind, const std::string& message, int code) {
    const json err = {{"error", kind}, {"message", message}, {"exit_code", code}};
    std::cerr << err.dump() << std::endl;
    return code;
}

json default_config() {
    json c = make_envelope("run_config");
    c["data"] = {{"format", nullptr},     {"train", nullptr},      {"train_labels", nullptr},
                 {"test", nullptr},       {"test_labels", nullptr}, {"label_column", "label"},
                 {"binarize", nullptr},   {"limit", nullptr},      {"test_fraction", nullptr},
                 {"split_seed", 1}};
    c["model"] = {{"hidden", {30, 10}}, {"activation", "sigmoid"}, {"optimizer", "adam"},
                  {"epochs", 10},       {"learning_rate", 1e-3},   {"batch_size", 32},
                  {"dropout", 0.0},     {"seed", 1},               {"init_stddev", 0.1}};
    c["fit"] = fit_config_to_json(TreeFitConfig{});
    c["policy"] = policy_to_json(InputPolicy{});
    c["importance"] = {{"method", "frequency"}, {"seed", 5}, {"grid", nullptr}, {"target_class", nullptr},
                       {"split", "test"}};
    c["explain"] = {{"sample", 0}, {"split", "test"}, {"trace", false}};
    c["threads"] = 1;
    c["output_dir"] = nullptr;
    return c;
}

// Flag values that override config fields when given.
struct Overrides {
    std::optional<std::string> config_path, out, format, train, train_labels, test, test_labels, label_column;
    std::optional<double> binarize, test_fraction;
    std::optional<std::size_t> limit, threads;
    std::optional<std::string> hidden, activation, optimizer;
    std::optional<std::size_t> epochs, batch_size;
    std::optional<double> learning_rate, dropout, init_stddev;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> max_height, max_size, min_samples_split;
    bool no_prune = false;
    std::optional<std::string> policy_mode;
    std::optional<double> policy_threshold;
    std::optional<std::string> model_path, mld_path, importance_path;
    std::optional<std::string> method, grid, split;
    std::optional<std::uint64_t> importance_seed;
    std::optional<std::size_t> target_class, sample;
    bool trace = false;
};

template <class T>
void put(json& obj, const char* key, const std::optional<T>& v) {
    if (v) obj[key] = *v;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(part, &used);
            if (used != part.size() || v == 0) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::logic_error&) {
            throw ConfigError("hidden sizes must be positive integers separated by commas, got '" + text + "'");
        }
    }
    return out;
}

json resolve_config(const Overrides& o) {
    json c = default_config();
    if (o.config_path) {
        const json file = read_json_file(*o.config_path);
        check_envelope(file, "run_config");
        c.merge_patch(file);
    }
    json& d = c["data"];
    put(d, "format", o.format);
    put(d, "train", o.train);
    put(d, "train_labels", o.train_labels);
    put(d, "test", o.test);
    put(d, "test_labels", o.test_labels);
    put(d, "label_column", o.label_column);
    put(d, "binarize", o.binarize);
    put(d, "test_fraction", o.test_fraction);
    put(d, "limit", o.limit);
    json& m = c["model"];
    if (o.hidden) m["hidden"] = parse_sizes(*o.hidden);
    put(m, "activation", o.activation);
    put(m, "optimizer", o.optimizer);
    put(m, "epochs", o.epochs);
    put(m, "batch_size", o.batch_size);
    put(m, "learning_rate", o.learning_rate);
    put(m, "dropout", o.dropout);
    put(m, "init_stddev", o.init_stddev);
    put(m, "seed", o.seed);
    json& f = c["fit"];
    put(f, "max_height", o.max_height);
    put(f, "max_size", o.max_size);
    put(f, "min_samples_split", o.min_samples_split);
    if (o.no_prune) f["prune"] = false;
    put(c["policy"], "mode", o.policy_mode);
    put(c["policy"], "threshold", o.policy_threshold);
    json& imp = c["importance"];
    put(imp, "method", o.method);
    put(imp, "seed", o.importance_seed);
    put(imp, "grid", o.grid);
    put(imp, "target_class", o.target_class);
    json& ex = c["explain"];
    put(ex, "sample", o.sample);
    if (o.trace) ex["trace"] = true;
    if (o.split) {
        imp["split"] = *o.split;
        ex["split"] = *o.split;
    }
    put(c, "threads", o.threads);
    put(c, "output_dir", o.out);
    return c;
}

template <class T>
std::optional<T> optional_field(const json& obj, const char* key, const std::string& path) {
    const json& v = require_field(obj, key, path);
    if (v.is_null()) return std::nullopt;
    return require_as<T>(obj, key, path);
}

struct Data {
    Dataset train;
    std::optional<Dataset> test;
};

Dataset binarized(Dataset d, std::optional<double> threshold) {
    if (threshold) d.features = InputPolicy::binarize(*threshold).apply(d.features);
    return d;
}

// Maps a separately loaded CSV split onto the training split's label ids.
void align_labels(Dataset& test, const Dataset& train) {
    if (train.label_names.empty()) return;
    std::vector<int> remap(test.label_names.size());
    for (std::size_t i = 0; i < test.label_names.size(); ++i) {
        auto it = std::find(train.label_names.begin(), train.label_names.end(), test.label_names[i]);
        if (it == train.label_names.end()) {
            throw RangeError("test label '" + test.label_names[i] + "' never occurs in the training data");
        }
        remap[i] = static_cast<int>(it - train.label_names.begin());
    }
    for (int& l : test.labels) l = remap[static_cast<std::size_t>(l)];
    test.label_names = train.label_names;
    test.num_classes = train.num_classes;
}

Data load_data(const json& cfg) {
    const json& d = cfg["data"];
    const auto train = optional_field<std::string>(d, "train", "$.data");
    if (!train) throw ConfigError("$.data.train: no training data configured (use --train)");
    const auto train_labels = optional_field<std::string>(d, "train_labels", "$.data");
    const auto test = optional_field<std::string>(d, "test", "$.data");
    const auto test_labels = optional_field<std::string>(d, "test_labels", "$.data");
    const auto threshold = optional_field<double>(d, "binarize", "$.data");
    const auto limit = optional_field<std::size_t>(d, "limit", "$.data");
    const auto fraction = optional_field<double>(d, "test_fraction", "$.data");
    std::string format = optional_field<std::string>(d, "format", "$.data").value_or(train_labels ? "idx" : "csv");

    Data out;
    if (format == "idx") {
        if (!train_labels) throw ConfigError("$.data.train_labels: IDX data needs a label file");
        out.train = load_idx(*train, *train_labels, threshold, limit);
        if (test) {
            if (!test_labels) throw ConfigError("$.data.test_labels: IDX data needs a label file");
            out.test = load_idx(*test, *test_labels, threshold);
        }
    } else if (format == "csv") {
        CsvSchema schema;
        schema.label_column = require_as<std::string>(d, "label_column", "$.data");
        out.train = binarized(load_csv(*train, schema), threshold);
        if (limit && *limit < out.train.size()) {
            std::vector<std::size_t> rows(*limit);
            std::iota(rows.begin(), rows.end(), 0);
            auto names = out.train.label_names;
            out.train = out.train.subset(rows);
            out.train.label_names = names;
        }
        if (test) {
            out.test = binarized(load_csv(*test, schema), threshold);
            align_labels(*out.test, out.train);
        }
    } else {
        throw ConfigError("$.data.format: expected 'idx' or 'csv', got '" + format + "'");
    }
    if (fraction) {
        if (out.test) throw ConfigError("$.data.test_fraction: a test file is already configured");
        auto names = out.train.label_names;
        auto [tr, te] = split_dataset(out.train, *fraction, require_as<std::uint64_t>(d, "split_seed", "$.data"));
        tr.label_names = te.label_names = names;
        out.train = std::move(tr);
        out.test = std::move(te);
    }
    return out;
}

const Dataset& pick_split(const Data& data, const std::string& split) {
    if (split == "train") return data.train;
    if (split != "test") throw ConfigError("split must be 'train' or 'test', got '" + split + "'");
    if (!data.test) throw ConfigError("no test data configured (use --test or --test-fraction)");
    return *data.test;
}

TrainConfig train_config(const json& m) {
    TrainConfig t;
    t.epochs = require_as<std::size_t>(m, "epochs", "$.model");
    t.learning_rate = require_as<double>(m, "learning_rate", "$.model");
    t.batch_size = require_as<std::size_t>(m, "batch_size", "$.model");
    t.dropout = require_as<double>(m, "dropout", "$.model");
    t.seed = require_as<std::uint64_t>(m, "seed", "$.model");
    t.init_stddev = require_as<double>(m, "init_stddev", "$.model");
    const auto opt = require_as<std::string>(m, "optimizer", "$.model");
    if (opt == "adam") {
        t.optimizer = Optimizer::adam;
    } else if (opt == "sgd") {
        t.optimizer = Optimizer::sgd;
    } else {
        throw ConfigError("$.model.optimizer: expected 'adam' or 'sgd', got '" + opt + "'");
    }
    return t;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
    } catch (const std::logic_error&) {
        throw ConfigError("grid must look like WIDTHxHEIGHT, got '" + text + "'");
    }
}

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Output directory plus a record of every file written into it.
class RunDir {
public:
    RunDir(const std::string& command, const json& cfg) : command_(command), started_(iso_now()) {
        if (auto out = optional_field<std::string>(cfg, "output_dir", "$")) {
            root_ = *out;
        } else if (const char* env = std::getenv("MLD_OUTPUT_DIR")) {
            root_ = fs::path(env) / command;
        } else {
            root_ = fs::path("runs") / command;
        }
        fs::create_directories(root_);
        write_json("config.json", cfg);
    }

    const fs::path& root() const { return root_; }

    void write_json(const std::string& name, const json& doc) {
        write_json_file(root_ / name, doc);
        files_.push_back(name);
    }
    void write_text(const std::string& name, const std::string& text) {
        std::ofstream out(root_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw FileError("cannot write " + (root_ / name).string());
        out << text;
        files_.push_back(name);
    }
    void add_existing(const std::string& name) { files_.push_back(name); }

    void finish() {
        std::sort(files_.begin(), files_.end());
        json manifest = make_envelope("run_manifest");
        manifest["command"] = command_;
        manifest["files"] = json::array();
        for (const auto& name : files_) {
            std::ifstream in(root_ / name, std::ios::binary);
            const std::string bytes((std::istreambuf_iterator<char>(in)), {});
            manifest["files"].push_back({{"name", name}, {"bytes", bytes.size()}, {"fnv1a", fnv1a_hex(bytes)}});
        }
        write_json_file(root_ / "manifest.json", manifest);
        json meta = make_envelope("run_meta");
        meta["command"] = command_;
        meta["started"] = started_;
        meta["finished"] = iso_now();
        write_json_file(root_ / "run_meta.json", meta);
    }

private:
    std::string command_;
    std::string started_;
    fs::path root_;
    std::vector<std::string> files_;
};

unsigned threads_of(const json& cfg) {
    return static_cast<unsigned>(std::max<std::size_t>(1, require_as<std::size_t>(cfg, "threads", "$")));
}

std::string required_path(const std::optional<std::string>& v, const char* flag) {
    if (!v) throw ConfigError(std::string("missing ") + flag);
    return *v;
}

int cmd_train(const Overrides& o) {
    const json cfg = resolve_config(o);
    const Data data = load_data(cfg);
    const json& m = cfg["model"];
    std::vector<std::size_t> sizes{data.train.dim()};
    for (auto h : require_as<std::vector<std::size_t>>(m, "hidden", "$.model")) sizes.push_back(h);
    sizes.push_back(data.train.num_classes);
    const Activation act = parse_activation(require_as<std::string>(m, "activation", "$.model"));
    const TrainResult result = train_mlp(data.train, data.test ? &*data.test : nullptr, sizes, act, train_config(m));
    RunDir run("train", cfg);
    save_model(result.model, run.root() / "model.json");
    run.add_existing("model.json");
    run.write_json("train_report.json", train_report_to_json(result.report));
    run.finish();
    std::printf("train accuracy %.4f", result.report.final_train_acc);
    if (result.report.final_test_acc) std::printf(", test accuracy %.4f", *result.report.final_test_acc);
    std::printf("\nwrote %s\n", (run.root() / "model.json").string().c_str());
    return kOk;
}

int cmd_distill(const Overrides& o) {
    const json cfg = resolve_config(o);
    const MLPModel model = load_model(required_path(o.model_path, "--model"));
    const Data data = load_data(cfg);
    BuildOptions bo;
    bo.fit = fit_config_from_json(cfg["fit"]);
    bo.policy = policy_from_json(cfg["policy"]);
    bo.threads = threads_of(cfg);
    const MLDStructure mld = build_mld(model, data.train, bo);
    RunDir run("distill", cfg);
    save_mld(mld, run.root() / "mld.json");
    run.add_existing("mld.json");
    run.write_json("fit_summary.json", fit_summary_to_json(mld));
    run.finish();
    std::size_t trees = 1;  // the multiclass tree
    for (const auto& layer : mld.layers) trees += layer.size();
    std::printf("fitted %zu trees\nwrote %s\n", trees, (run.root() / "mld.json").string().c_str());
    return kOk;
}

int cmd_predict(const Overrides& o) {
    const json cfg = resolve_config(o);
    const MLDStructure mld = load_mld(required_path(o.mld_path, "--mld"));
    const Data data = load_data(cfg);
    const std::string split = o.split.value_or(data.test ? "test" : "train");
    const Dataset& rows = pick_split(data, split);
    json doc = make_envelope("predictions");
    doc["split"] = split;
    doc["n_samples"] = rows.size();
    doc["mld_labels"] = predict_labels(mld, rows.features);
    if (o.model_path) {
        const MLPModel model = load_model(*o.model_path);
        doc["network_labels"] = predict_labels(model, mld.policy.apply(rows.features));
    }
    RunDir run("predict", cfg);
    run.write_json("predictions.json", doc);
    run.finish();
    std::printf("predicted %zu samples\n", rows.size());
    return kOk;
}

int cmd_explain(const Overrides& o) {
    const json cfg = resolve_config(o);
    const MLDStructure mld = load_mld(required_path(o.mld_path, "--mld"));
    const Data data = load_data(cfg);
    const json& ex = cfg["explain"];
    const Dataset& rows = pick_split(data, require_as<std::string>(ex, "split", "$.explain"));
    const auto sample = require_as<std::size_t>(ex, "sample", "$.explain");
    const bool trace = require_as<bool>(ex, "trace", "$.explain");
    if (sample >= rows.size()) {
        throw RangeError("sample " + std::to_string(sample) + " out of range for " + std::to_string(rows.size()) +
                         " rows");
    }
    const auto x = rows.features.row(sample);
    const MLDDecision decision = forward_decision(mld, x);
    const RuleSet final_rule = backward_rule_induction(mld, x, TreeRef::multiclass_output(mld.output_layer()), trace);
    const auto classes = explain_sample(mld, x, trace);

    json doc = make_envelope("explanation");
    doc["sample"] = sample;
    doc["final_label"] = decision.final_label;
    doc["true_label"] = rows.labels[sample];
    doc["final_rule"] = ruleset_to_json(final_rule, sample, true);
    doc["classes"] = json::array();
    std::string text = format_rule(final_rule, mld.output_layer()) + "\n";
    for (const auto& c : classes) {
        doc["classes"].push_back(ruleset_to_json(c.rules, sample, c.positive));
        text += format_rule(c.rules, mld.output_layer()) + "\n";
    }
    doc["text"] = text;
    RunDir run("explain", cfg);
    run.write_json("explanation.json", doc);
    run.write_text("explanation.txt", text);
    run.finish();
    std::fputs(text.c_str(), stdout);
    return kOk;
}

int cmd_importance(const Overrides& o) {
    const json cfg = resolve_config(o);
    const MLDStructure mld = load_mld(required_path(o.mld_path, "--mld"));
    const Data data = load_data(cfg);
    const json& imp = cfg["importance"];
    const std::string split = require_as<std::string>(imp, "split", "$.importance");
    const Dataset& rows = split == "test" && !data.test ? data.train : pick_split(data, split);
    const auto method = require_as<std::string>(imp, "method", "$.importance");
    ImportanceReport report;
    if (method == "frequency") {
        report = frequency_importance(mld, rows.features, optional_field<std::size_t>(imp, "target_class", "$.importance"),
                                      true);
    } else if (method == "oob") {
        // Reference labels: the network's when a model is given, otherwise the data's.
        const std::vector<int> reference =
            o.model_path ? predict_labels(load_model(*o.model_path), mld.policy.apply(rows.features)) : rows.labels;
        report = oob_importance(mld, reference, rows.features, require_as<std::uint64_t>(imp, "seed", "$.importance"),
                                threads_of(cfg));
    } else {
        throw ConfigError("$.importance.method: expected 'frequency' or 'oob', got '" + method + "'");
    }
    RunDir run("importance", cfg);
    run.write_json("importance.json", importance_to_json(report));
    if (auto grid = optional_field<std::string>(imp, "grid", "$.importance")) {
        const auto [w, h] = parse_grid(*grid);
        export_importance_grid(report.scores, w, h, run.root() / "importance");
        run.add_existing("importance.csv");
        run.add_existing("importance.pgm");
    }
    run.finish();
    if (report.all_zero) {
        std::printf("%s importance over %zu samples: every score is zero\n", method.c_str(), rows.size());
        return kOk;
    }
    std::size_t top = 0;
    for (std::size_t v = 1; v < report.scores.size(); ++v) {
        if (report.scores[v] > report.scores[top]) top = v;
    }
    std::printf("%s importance over %zu samples; top feature x_%zu (%.4f)\n", method.c_str(), rows.size(), top + 1,
                report.scores.empty() ? 0.0 : report.scores[top]);
    return kOk;
}

int cmd_evaluate(const Overrides& o) {
    const json cfg = resolve_config(o);
    const MLDStructure mld = load_mld(required_path(o.mld_path, "--mld"));
    const MLPModel model = load_model(required_path(o.model_path, "--model"));
    const Data data = load_data(cfg);
    const Dataset& test = pick_split(data, "test");
    const EvalReport mld_train = evaluate(mld, model, data.train, "train");
    const EvalReport mld_test = evaluate(mld, model, test, "test");
    const Baseline cart = baseline_cart(data.train, model, mld.policy, mld.provenance.fit_config);
    const EvalReport cart_train = evaluate_baseline(cart, model, data.train, "train");
    const EvalReport cart_test = evaluate_baseline(cart, model, test, "test");

    RunDir run("evaluate", cfg);
    run.write_json("eval_train.json", eval_to_json(mld_train));
    run.write_json("eval_test.json", eval_to_json(mld_test));
    run.write_json("eval_cart_train.json", eval_to_json(cart_train));
    run.write_json("eval_cart_test.json", eval_to_json(cart_test));
    const std::string table = summary_table_csv({{mld_train, mld_test}, {cart_train, cart_test}});
    run.write_text("table.csv", table);
    run.finish();
    std::fputs(table.c_str(), stdout);
    return kOk;
}

int cmd_export_heatmap(const Overrides& o) {
    const json cfg = resolve_config(o);
    const ImportanceReport report = importance_from_json(read_json_file(required_path(o.importance_path, "--importance")));
    const auto grid = optional_field<std::string>(cfg["importance"], "grid", "$.importance");
    if (!grid) throw ConfigError("missing --grid");
    const auto [w, h] = parse_grid(*grid);
    RunDir run("export-heatmap", cfg);
    export_importance_grid(report.scores, w, h, run.root() / "heatmap");
    run.add_existing("heatmap.csv");
    run.add_existing("heatmap.pgm");
    run.finish();
    std::printf("wrote %s\n", (run.root() / "heatmap.pgm").string().c_str());
    return kOk;
}

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON run config; flags override its fields");
    cmd->add_option("--out", o.out, "run directory (default $MLD_OUTPUT_DIR/<command> or runs/<command>)");
    cmd->add_option("--threads", o.threads, "worker cap; results do not depend on it");
    cmd->add_option("--format", o.format, "idx or csv (default: idx when label files are given)");
    cmd->add_option("--train", o.train, "training CSV, or IDX image file");
    cmd->add_option("--train-labels", o.train_labels, "IDX label file for --train");
    cmd->add_option("--test", o.test, "test CSV, or IDX image file");
    cmd->add_option("--test-labels", o.test_labels, "IDX label file for --test");
    cmd->add_option("--label-column", o.label_column, "CSV label column");
    cmd->add_option("--binarize", o.binarize, "binarize features at this threshold while loading");
    cmd->add_option("--limit", o.limit, "keep only the first N training rows");
    cmd->add_option("--test-fraction", o.test_fraction, "hold out this fraction of the training data as test");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-level decision structures distilled from MLPs"};
    app.require_subcommand(1);
    Overrides o;

    auto* train = app.add_subcommand("train", "train an MLP");
    add_common(train, o);
    train->add_option("--hidden", o.hidden, "hidden layer sizes, e.g. 30,10");
    train->add_option("--activation", o.activation, "sigmoid or tanh_rescaled");
    train->add_option("--optimizer", o.optimizer, "adam or sgd");
    train->add_option("--epochs", o.epochs);
    train->add_option("--lr", o.learning_rate);
    train->add_option("--batch-size", o.batch_size);
    train->add_option("--dropout", o.dropout);
    train->add_option("--init-stddev", o.init_stddev);
    train->add_option("--seed", o.seed);

    auto* distill = app.add_subcommand("distill", "fit one decision tree per neuron");
    add_common(distill, o);
    distill->add_option("--model", o.model_path, "model.json from train")->required();
    distill->add_option("--max-height", o.max_height);
    distill->add_option("--max-size", o.max_size, "total node cap per tree");
    distill->add_option("--min-samples-split", o.min_samples_split);
    distill->add_flag("--no-prune", o.no_prune);
    distill->add_option("--policy", o.policy_mode, "binarize or passthrough");
    distill->add_option("--threshold", o.policy_threshold, "input binarization threshold");

    auto* predict = app.add_subcommand("predict", "final labels from an MLD");
    add_common(predict, o);
    predict->add_option("--mld", o.mld_path)->required();
    predict->add_option("--model", o.model_path, "also record the network's labels");
    predict->add_option("--split", o.split, "train or test");

    auto* explain = app.add_subcommand("explain", "rules behind one sample's decision");
    add_common(explain, o);
    explain->add_option("--mld", o.mld_path)->required();
    explain->add_option("--sample", o.sample, "row index within the split");
    explain->add_option("--split", o.split, "train or test");
    explain->add_flag("--trace", o.trace, "keep the per-layer depth trace");

    auto* importance = app.add_subcommand("importance", "global feature importance");
    add_common(importance, o);
    importance->add_option("--mld", o.mld_path)->required();
    importance->add_option("--model", o.model_path, "oob: score against the network's labels");
    importance->add_option("--method", o.method, "frequency or oob");
    importance->add_option("--seed", o.importance_seed, "oob permutation seed");
    importance->add_option("--target-class", o.target_class, "frequency: only this class's rules");
    importance->add_option("--grid", o.grid, "also export a WIDTHxHEIGHT heatmap");
    importance->add_option("--split", o.split, "train or test");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "predictivity and fidelity, with a CART baseline");
    add_common(evaluate_cmd, o);
    evaluate_cmd->add_option("--mld", o.mld_path)->required();
    evaluate_cmd->add_option("--model", o.model_path)->required();

    auto* heatmap = app.add_subcommand("export-heatmap", "render an importance report as a grid");
    heatmap->add_option("--config", o.config_path);
    heatmap->add_option("--out", o.out);
    heatmap->add_option("--importance", o.importance_path, "importance.json")->required();
    heatmap->add_option("--grid", o.grid, "WIDTHxHEIGHT")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << app.help();
        return report_error("usage", e.what(), kUsage);
    }

    try {
        if (train->parsed()) return cmd_train(o);
        if (distill->parsed()) return cmd_distill(o);
        if (predict->parsed()) return cmd_predict(o);
        if (explain->parsed()) return cmd_explain(o);
        if (importance->parsed()) return cmd_importance(o);
        if (evaluate_cmd->parsed()) return cmd_evaluate(o);
        if (heatmap->parsed()) return cmd_export_heatmap(o);
    } catch (const Error& e) {
        return report_error(error_kind_name(e.kind()), e.what(), exit_code_for(e.kind()));
    } catch (const fs::filesystem_error& e) {
        return report_error("file", e.what(), kFile);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), kInternal);
    }
    return kUsage;
}
