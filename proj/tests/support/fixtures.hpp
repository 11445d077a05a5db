#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mld/mld.hpp"
#include "mld/nnmodel.hpp"
#include "mld/rng.hpp"
#include "oracle.hpp"

namespace mld::fixtures {

/// Uniformly random boolean function of n inputs.
inline oracle::TruthTable random_table(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> v(std::size_t{1} << n);
    for (auto& x : v) x = static_cast<int>(rng.below(2));
    return oracle::TruthTable(n, std::move(v));
}

/// All 2^d boolean rows, labels zero.
inline Dataset cube(std::size_t d, std::size_t num_classes = 2) {
    Dataset data;
    data.features = oracle::TruthTable(d, std::vector<int>(std::size_t{1} << d, 0)).inputs();
    data.labels.assign(data.features.rows(), 0);
    data.num_classes = num_classes;
    data.name = "cube" + std::to_string(d);
    return data;
}

/// Random sigmoid net with weights wide enough that hidden bits vary.
inline MLPModel random_net(std::vector<std::size_t> sizes, std::uint64_t seed, double stddev = 2.0) {
    return random_model(std::move(sizes), Activation::sigmoid, seed, stddev);
}

/// 2-2-2 net: h1 = x1 AND x2 (roughly), h2 = x1 OR x2, y = softmax favouring
/// class 1 when h1 is on.
inline MLPModel hand_net() {
    MLPModel m = zero_model({2, 2, 2}, Activation::sigmoid);
    m.weights[0](0, 0) = 4.0;
    m.weights[0](0, 1) = 4.0;
    m.biases[0][0] = -6.0;
    m.weights[0](1, 0) = 4.0;
    m.weights[0](1, 1) = 4.0;
    m.biases[0][1] = -2.0;
    m.weights[1](0, 0) = -4.0;
    m.weights[1](0, 1) = 1.0;
    m.weights[1](1, 0) = 4.0;
    m.weights[1](1, 1) = -1.0;
    return m;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mld_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace mld::fixtures
