#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sadi {

/// Raised for invalid configuration; distinct from input/data errors so the
/// CLI can map the two to different exit codes.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class intervention_mode {
    sadi,           // full recalibration pipeline
    none,           // passthrough softmax
    mean_add,       // head-homogeneous mean addition (comparison mode)
    hard_truncate,  // binary head removal via -inf surrogate (comparison mode)
    add_subtract,   // sadi plus explicit background penalty (comparison mode)
};

inline const char* to_string(intervention_mode m) {
    switch (m) {
        case intervention_mode::sadi: return "sadi";
        case intervention_mode::none: return "none";
        case intervention_mode::mean_add: return "mean_add";
        case intervention_mode::hard_truncate: return "hard_truncate";
        case intervention_mode::add_subtract: return "add_subtract";
    }
    return "?";
}

inline std::optional<intervention_mode> mode_from_string(const std::string& s) {
    if (s == "sadi") return intervention_mode::sadi;
    if (s == "none") return intervention_mode::none;
    if (s == "mean_add") return intervention_mode::mean_add;
    if (s == "hard_truncate") return intervention_mode::hard_truncate;
    if (s == "add_subtract") return intervention_mode::add_subtract;
    return std::nullopt;
}

enum class scalar_precision { float64, float32 };

/// Layer-range selection for multi-layer interventions.
struct layer_policy {
    enum class kind { lookup, fractional, explicit_range };

    int total_layers = 32;
    kind mode = kind::lookup;
    std::optional<std::pair<int, int>> range;  // inclusive, explicit_range only
};

struct sadi_config {
    double alpha_min = 0.25;
    double alpha_max = 0.80;
    double epsilon = 1e-6;
    intervention_mode mode = intervention_mode::sadi;
    double beta = 0.5;                // add_subtract penalty weight
    double truncate_threshold = 1.0;  // hard_truncate: deviation multiple of mean(S)
    double devil_alpha = 1.0;         // mean_add shift weight
    scalar_precision precision = scalar_precision::float64;
    layer_policy layers;
};

/// Checks every config constraint; returns one message per violation, each
/// naming the offending field. An empty result means the config is usable.
inline std::vector<std::string> validate_config(const sadi_config& cfg) {
    std::vector<std::string> errors;
    if (!(cfg.alpha_min >= 0.0)) {
        errors.push_back("alpha_min: must be >= 0, got " + std::to_string(cfg.alpha_min));
    }
    if (!(cfg.alpha_min <= cfg.alpha_max)) {
        errors.push_back("alpha_min/alpha_max: require alpha_min <= alpha_max, got " +
                         std::to_string(cfg.alpha_min) + " > " + std::to_string(cfg.alpha_max));
    }
    if (!(cfg.epsilon > 0.0)) {
        errors.push_back("epsilon: must be > 0, got " + std::to_string(cfg.epsilon));
    }
    if (!(cfg.beta >= 0.0)) {
        errors.push_back("beta: must be >= 0, got " + std::to_string(cfg.beta));
    }
    if (!(cfg.truncate_threshold > 0.0)) {
        errors.push_back("truncate_threshold: must be > 0, got " +
                         std::to_string(cfg.truncate_threshold));
    }
    if (!(cfg.devil_alpha >= 0.0)) {
        errors.push_back("devil_alpha: must be >= 0, got " + std::to_string(cfg.devil_alpha));
    }
    if (cfg.layers.total_layers < 1) {
        errors.push_back("layers.total: must be >= 1, got " +
                         std::to_string(cfg.layers.total_layers));
    }
    if (cfg.layers.mode == layer_policy::kind::explicit_range) {
        if (!cfg.layers.range) {
            errors.push_back("layers.range: required for explicit layer mode");
        } else {
            auto [lo, hi] = *cfg.layers.range;
            if (lo < 0 || hi > cfg.layers.total_layers - 1 || lo > hi) {
                errors.push_back("layers.range: [" + std::to_string(lo) + "," +
                                 std::to_string(hi) + "] out of bounds for " +
                                 std::to_string(cfg.layers.total_layers) + " layers");
            }
        }
    }
    return errors;
}

/// Returns the config unchanged, or throws config_error listing every violation.
inline sadi_config validated(sadi_config cfg) {
    auto errors = validate_config(cfg);
    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw config_error(msg);
    }
    return cfg;
}

}  // namespace sadi
