#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "sadi/config.hpp"
#include "sadi/core.hpp"
#include "sadi/matrix.hpp"

namespace sadi {

/// Kernel latency proxy: per-iteration wall time of K bare per-head softmax
/// layer applications (baseline) against K full intervened applications.
struct bench_config {
    int heads = 32;
    int tokens = 576;
    int layers = 14;
    int iterations = 200;  // timed iterations, >= 100
    int warmup = 10;       // untimed iterations, >= 10
    intervention_mode mode = intervention_mode::sadi;
    std::uint64_t seed = 0;
    bool float64 = false;  // default is the float32 data-plane dtype
};

struct bench_report {
    bench_config config;
    double baseline_ns = 0.0;    // median per-iteration wall time
    double intervened_ns = 0.0;  // median per-iteration wall time
    double ratio = 0.0;          // intervened / baseline
    double checksum = 0.0;       // keeps the optimizer honest; deterministic per seed
};

namespace detail {

template <typename T>
bench_report run_bench_impl(const bench_config& cfg) {
    using clock = std::chrono::steady_clock;
    std::mt19937_64 rng(cfg.seed);
    std::vector<matrix<T>> layers;
    layers.reserve(cfg.layers);
    for (int k = 0; k < cfg.layers; ++k) {
        matrix<T> layer(cfg.heads, cfg.tokens);
        for (auto& v : layer.data()) {
            // portable uniform draw in [-4, 4)
            v = static_cast<T>(-4.0 + 8.0 * ((rng() >> 11) * 0x1.0p-53));
        }
        layers.push_back(std::move(layer));
    }

    sadi_config engine_cfg;
    engine_cfg.mode = cfg.mode;
    engine<T> eng(engine_cfg);
    matrix<T> probs(cfg.heads, cfg.tokens);
    double checksum = 0.0;

    const int total = cfg.warmup + cfg.iterations;
    std::vector<double> baseline_ns(cfg.iterations), intervened_ns(cfg.iterations);
    for (int it = 0; it < total; ++it) {
        const auto t0 = clock::now();
        for (const auto& layer : layers) {
            for (int h = 0; h < cfg.heads; ++h) {
                softmax_row(layer.row(h), probs.row(h), cfg.tokens);
            }
        }
        checksum += static_cast<double>(probs(0, 0));
        const auto t1 = clock::now();
        for (const auto& layer : layers) {
            eng.forward_probs(layer, probs);
        }
        checksum += static_cast<double>(probs(0, 0));
        const auto t2 = clock::now();
        if (it >= cfg.warmup) {
            baseline_ns[it - cfg.warmup] = std::chrono::duration<double, std::nano>(t1 - t0).count();
            intervened_ns[it - cfg.warmup] = std::chrono::duration<double, std::nano>(t2 - t1).count();
        }
    }

    auto median = [](std::vector<double>& v) {
        const auto mid = v.begin() + v.size() / 2;
        std::nth_element(v.begin(), mid, v.end());
        return *mid;
    };
    bench_report report;
    report.config = cfg;
    report.baseline_ns = median(baseline_ns);
    report.intervened_ns = median(intervened_ns);
    report.ratio = report.intervened_ns / report.baseline_ns;
    report.checksum = checksum;
    return report;
}

}  // namespace detail

inline bench_report run_bench(const bench_config& cfg) {
    if (cfg.heads < 1 || cfg.tokens < 1 || cfg.layers < 1) {
        throw std::invalid_argument("bench: heads, tokens and layers must be >= 1");
    }
    if (cfg.iterations < 100) {
        throw std::invalid_argument("bench: need at least 100 timed iterations, got " +
                                    std::to_string(cfg.iterations));
    }
    if (cfg.warmup < 10) {
        throw std::invalid_argument("bench: need at least 10 warmup iterations, got " +
                                    std::to_string(cfg.warmup));
    }
    if (cfg.mode != intervention_mode::sadi && cfg.mode != intervention_mode::none) {
        throw std::invalid_argument("bench: mode must be sadi or none");
    }
    return cfg.float64 ? detail::run_bench_impl<double>(cfg) : detail::run_bench_impl<float>(cfg);
}

inline nlohmann::json bench_to_json(const bench_report& r) {
    return nlohmann::json{{"heads", r.config.heads},
                          {"tokens", r.config.tokens},
                          {"layers", r.config.layers},
                          {"iterations", r.config.iterations},
                          {"warmup", r.config.warmup},
                          {"mode", to_string(r.config.mode)},
                          {"seed", r.config.seed},
                          {"dtype", r.config.float64 ? "float64" : "float32"},
                          {"baseline_ns", r.baseline_ns},
                          {"intervened_ns", r.intervened_ns},
                          {"ratio", r.ratio},
                          {"checksum", r.checksum}};
}

}  // namespace sadi
