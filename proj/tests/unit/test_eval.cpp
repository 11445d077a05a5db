#include <doctest.h>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "mld/eval.hpp"

using namespace mld;

TEST_CASE("constant predictor on balanced two-class data") {
    // precision 0.5 / recall 1 for class 0 gives F1 2/3; class 1 gets 0
    const std::vector<int> ref{0, 1, 0, 1, 0, 1};
    const std::vector<int> pred(6, 0);
    const ScoreSet s = score(ref, pred, 2);
    CHECK(s.accuracy == 0.5);
    CHECK(s.per_class_f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(s.per_class_f1[1] == 0.0);
    CHECK(s.f1 == doctest::Approx(1.0 / 3.0));
    CHECK(s.confusion == ConfusionMatrix{{3, 0}, {3, 0}});
}

TEST_CASE("macro F1 skips classes absent from both sides") {
    const ScoreSet s = score(std::vector<int>{0, 2}, std::vector<int>{0, 2}, 4);
    CHECK(s.f1 == 1.0);
    CHECK(s.accuracy == 1.0);
}

TEST_CASE("score errors") {
    CHECK_THROWS_AS(score(std::vector<int>{}, std::vector<int>{}, 2), EmptyInputError);
    CHECK_THROWS_AS(score(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ShapeError);
    CHECK_THROWS_AS(score(std::vector<int>{0}, std::vector<int>{2}, 2), RangeError);
}

TEST_CASE("accuracy recomputed from the confusion matrix matches exactly") {
    Rng rng(8);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 1 + rng.below(60);
        std::vector<int> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<int>(rng.below(4));
            b[i] = static_cast<int>(rng.below(4));
        }
        const ScoreSet s = score(a, b, 4);
        std::size_t diag = 0, total = 0;
        for (std::size_t r = 0; r < 4; ++r) {
            std::size_t row = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                row += s.confusion[r][c];
                total += s.confusion[r][c];
            }
            diag += s.confusion[r][r];
            CHECK(row == static_cast<std::size_t>(std::count(a.begin(), a.end(), static_cast<int>(r))));
        }
        CHECK(s.accuracy == static_cast<double>(diag) / static_cast<double>(total));
        CHECK(s.f1 >= 0.0);
        CHECK(s.f1 <= 1.0);
    }
}

TEST_CASE("an exact MLD of the hand network has perfect fidelity") {
    const MLPModel m = fixtures::hand_net();
    Dataset cube = fixtures::cube(2);
    for (std::size_t r = 0; r < cube.size(); ++r) cube.labels[r] = r == 3 ? 1 : 0;
    BuildOptions o;
    o.fit = TreeFitConfig::unlimited();
    const EvalReport rep = evaluate(build_mld(m, cube, o), m, cube, "train");
    CHECK(rep.fidelity.accuracy == 1.0);
    CHECK(rep.fidelity.f1 == 1.0);
    CHECK(rep.predictivity.accuracy == 1.0);
    CHECK(rep.n_samples == 4);
}

TEST_CASE("fidelity counts agreement between composed trees and the network") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const MLPModel m = fixtures::random_net({4, 3, 2, 2}, seed);
        Dataset cube = fixtures::cube(4);
        for (std::size_t r = 0; r < cube.size(); ++r) cube.labels[r] = static_cast<int>(r % 2);
        BuildOptions o;
        o.fit = TreeFitConfig::unlimited();
        const MLDStructure mld = build_mld(m, cube, o);
        const EvalReport rep = evaluate(mld, m, cube, "train");
        std::size_t agree = 0, correct = 0;
        for (std::size_t r = 0; r < cube.size(); ++r) {
            const auto row = cube.features.row(r);
            const std::vector<double> x(row.begin(), row.end());
            const auto acts = oracle::naive_activations(m, x);
            const auto& out = acts.back();
            const int net = static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
            const int decided = oracle::naive_mld_eval(mld, x).final_label;
            agree += decided == net;
            correct += decided == cube.labels[r];
        }
        CHECK(rep.fidelity.accuracy == static_cast<double>(agree) / 16.0);
        CHECK(rep.predictivity.accuracy == static_cast<double>(correct) / 16.0);
        CHECK(eval_to_json(evaluate(mld, m, cube, "train")) == eval_to_json(rep));
    }
}

TEST_CASE("baseline cart on separable and noisy data") {
    Dataset d = fixtures::cube(3);
    for (std::size_t r = 0; r < d.size(); ++r) d.labels[r] = static_cast<int>(d.features(r, 1));
    const MLPModel m = zero_model({3, 2, 2}, Activation::sigmoid);
    const Baseline b = baseline_cart(d, m, InputPolicy{}, TreeFitConfig::unlimited());
    CHECK(evaluate_baseline(b, m, d, "train").predictivity.accuracy == 1.0);

    SUBCASE("pure noise with a depth-1 limit scores the majority rate") {
        Dataset noise;
        noise.num_classes = 2;
        noise.features = RealMatrix(100, 1);
        Rng rng(1);
        std::size_t ones = 0;
        for (std::size_t r = 0; r < 100; ++r) {
            noise.features(r, 0) = rng.uniform();
            noise.labels.push_back(static_cast<int>(rng.below(2)));
            ones += noise.labels.back();
        }
        TreeFitConfig cfg;
        cfg.max_height = 1;
        cfg.max_size = 3;
        InputPolicy pass;
        pass.mode = InputPolicy::Mode::passthrough;
        const MLPModel m1 = zero_model({1, 2, 2}, Activation::sigmoid);
        const auto nb = baseline_cart(noise, m1, pass, cfg);
        const double majority = static_cast<double>(std::max(ones, 100 - ones)) / 100.0;
        const double acc = evaluate_baseline(nb, m1, noise, "train").predictivity.accuracy;
        CHECK(acc >= majority);
        CHECK(acc <= majority + 0.15);
    }
    SUBCASE("network-label targets judge fidelity against the same network") {
        const MLPModel net = fixtures::random_net({3, 3, 2}, 4);
        const Baseline nb = baseline_cart(d, net, InputPolicy{}, TreeFitConfig::unlimited(),
                                          BaselineTarget::network_labels);
        const EvalReport r = evaluate_baseline(nb, net, d, "train");
        CHECK(r.fidelity.accuracy == 1.0);
        CHECK(r.method == "cart_network_labels");
    }
}

TEST_CASE("eval report json and table") {
    const MLPModel m = fixtures::random_net({4, 3, 2}, 2);
    Dataset cube = fixtures::cube(4);
    const MLDStructure mld = build_mld(m, cube, {});
    const EvalReport rep = evaluate(mld, m, cube, "test");
    const json doc = eval_to_json(rep);
    CHECK(doc["f1_average"] == "macro");
    CHECK(eval_to_json(eval_from_json(doc)) == doc);
    const std::string table = summary_table_csv({{rep, rep}});
    CHECK(table.rfind("method,pred_acc_train,pred_f1_train,pred_acc_test,pred_f1_test,", 0) == 0);
    CHECK(table.find("\nmld,") != std::string::npos);

    Dataset wrong = fixtures::cube(3);
    CHECK_THROWS_AS(evaluate(mld, m, wrong, "test"), ShapeError);
}
