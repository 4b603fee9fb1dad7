#pragma once

#include <fstream>
#include <string>

#include "json.hpp"
#include "sadi/config.hpp"

namespace sadi {

inline sadi_config config_from_json(const nlohmann::json& j) {
    static const char* known[] = {"alpha_min", "alpha_max",          "epsilon",
                                  "mode",      "beta",               "truncate_threshold",
                                  "devil_alpha", "precision",        "layers"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw config_error("config: unknown key '" + it.key() + "'");
    }
    sadi_config cfg;
    cfg.alpha_min = j.value("alpha_min", cfg.alpha_min);
    cfg.alpha_max = j.value("alpha_max", cfg.alpha_max);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    if (j.contains("mode")) {
        const auto mode = mode_from_string(j.at("mode").get<std::string>());
        if (!mode) {
            throw config_error("config: unknown mode '" + j.at("mode").get<std::string>() + "'");
        }
        cfg.mode = *mode;
    }
    cfg.beta = j.value("beta", cfg.beta);
    cfg.truncate_threshold = j.value("truncate_threshold", cfg.truncate_threshold);
    cfg.devil_alpha = j.value("devil_alpha", cfg.devil_alpha);
    if (j.contains("precision")) {
        const std::string p = j.at("precision").get<std::string>();
        if (p == "float64") cfg.precision = scalar_precision::float64;
        else if (p == "float32") cfg.precision = scalar_precision::float32;
        else throw config_error("config: precision must be float64 or float32, got '" + p + "'");
    }
    if (j.contains("layers")) {
        const auto& jl = j.at("layers");
        for (auto it = jl.begin(); it != jl.end(); ++it) {
            if (it.key() != "mode" && it.key() != "total" && it.key() != "range") {
                throw config_error("config: unknown key 'layers." + it.key() + "'");
            }
        }
        cfg.layers.total_layers = jl.value("total", cfg.layers.total_layers);
        if (jl.contains("mode")) {
            const std::string m = jl.at("mode").get<std::string>();
            if (m == "lookup") cfg.layers.mode = layer_policy::kind::lookup;
            else if (m == "fractional") cfg.layers.mode = layer_policy::kind::fractional;
            else if (m == "explicit") cfg.layers.mode = layer_policy::kind::explicit_range;
            else throw config_error("config: unknown layers.mode '" + m + "'");
        }
        if (jl.contains("range")) {
            const auto range = jl.at("range").get<std::vector<int>>();
            if (range.size() != 2) throw config_error("config: layers.range must be [start,end]");
            cfg.layers.range = std::make_pair(range[0], range[1]);
        }
    }
    return validated(cfg);
}

inline nlohmann::json config_to_json(const sadi_config& cfg) {
    nlohmann::json layers{{"total", cfg.layers.total_layers}};
    switch (cfg.layers.mode) {
        case layer_policy::kind::lookup: layers["mode"] = "lookup"; break;
        case layer_policy::kind::fractional: layers["mode"] = "fractional"; break;
        case layer_policy::kind::explicit_range: layers["mode"] = "explicit"; break;
    }
    if (cfg.layers.range) {
        layers["range"] = {cfg.layers.range->first, cfg.layers.range->second};
    }
    return nlohmann::json{
        {"alpha_min", cfg.alpha_min},
        {"alpha_max", cfg.alpha_max},
        {"epsilon", cfg.epsilon},
        {"mode", to_string(cfg.mode)},
        {"beta", cfg.beta},
        {"truncate_threshold", cfg.truncate_threshold},
        {"devil_alpha", cfg.devil_alpha},
        {"precision", cfg.precision == scalar_precision::float64 ? "float64" : "float32"},
        {"layers", layers}};
}

/// Loads and validates a config file; any failure is a config_error so the
/// CLI can map it to the config exit code.
inline sadi_config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error(path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace sadi
