#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sadi/config.hpp"
#include "sadi/core.hpp"
#include "sadi/matrix.hpp"

namespace sadi {

/// Finite stand-in for -inf so a truncated row softmaxes to uniform instead
/// of producing NaN.
inline constexpr double kTruncationSentinel = -1e30;

/// Resolves a layer policy to the inclusive set of layer indices to intervene
/// on. Lookup knows the published 32- and 40-layer ranges and falls back to
/// the fractional rule for other depths.
inline std::vector<int> select_layers(const layer_policy& policy) {
    const int total = policy.total_layers;
    if (total < 1) throw config_error("select_layers: total_layers must be >= 1");

    auto make_range = [](int lo, int hi) {
        std::vector<int> out;
        out.reserve(hi - lo + 1);
        for (int i = lo; i <= hi; ++i) out.push_back(i);
        return out;
    };
    auto fractional = [&]() {
        int lo = static_cast<int>(std::lround(0.16 * total));
        int hi = static_cast<int>(std::lround(0.57 * total));
        lo = std::clamp(lo, 0, total - 1);
        hi = std::clamp(hi, 0, total - 1);
        return make_range(lo, hi);
    };

    switch (policy.mode) {
        case layer_policy::kind::lookup:
            if (total == 32) return make_range(5, 18);
            if (total == 40) return make_range(8, 24);
            return fractional();
        case layer_policy::kind::fractional:
            return fractional();
        case layer_policy::kind::explicit_range: {
            if (!policy.range) throw config_error("select_layers: explicit mode needs a range");
            auto [lo, hi] = *policy.range;
            if (lo < 0 || hi > total - 1 || lo > hi) {
                throw config_error("select_layers: range [" + std::to_string(lo) + "," +
                                   std::to_string(hi) + "] out of bounds for " +
                                   std::to_string(total) + " layers");
            }
            return make_range(lo, hi);
        }
    }
    throw config_error("select_layers: unknown mode");
}

template <typename T>
struct intervention_outcome {
    matrix<T> recalibrated;
    matrix<T> probabilities;
    diagnostics<T> diag;              // fields empty for modes that skip them
    std::vector<int> truncated_heads; // hard_truncate only
    std::vector<std::uint8_t> background;  // add_subtract only, 1 = background token
};

namespace detail {

// Background split for the add-subtract variant: a token is background when
// its consensus magnitude is below the median consensus over tokens (same
// even-count convention as the head median).
template <typename T>
std::vector<std::uint8_t> background_split(const std::vector<T>& consensus) {
    std::vector<T> sorted(consensus);
    const int n = static_cast<int>(sorted.size());
    const int k_lo = (n - 1) / 2;
    std::nth_element(sorted.begin(), sorted.begin() + k_lo, sorted.end());
    T median = sorted[k_lo];
    if (n % 2 == 0) {
        const T upper = *std::min_element(sorted.begin() + k_lo + 1, sorted.end());
        median = T(0.5) * (sorted[k_lo] + upper);
    }
    std::vector<std::uint8_t> background(consensus.size());
    for (std::size_t m = 0; m < consensus.size(); ++m) {
        background[m] = consensus[m] < median ? 1 : 0;
    }
    return background;
}

}  // namespace detail

/// Dispatches one layer of logits through the configured intervention mode.
template <typename T>
intervention_outcome<T> apply_intervention(const matrix<T>& logits, const sadi_config& cfg_in) {
    const sadi_config cfg = validated(cfg_in);
    const int heads = logits.rows();
    const int tokens = logits.cols();
    intervention_outcome<T> out;

    switch (cfg.mode) {
        case intervention_mode::none:
        case intervention_mode::sadi: {
            auto fwd = sadi_forward(logits, cfg);
            out.recalibrated = std::move(fwd.recalibrated);
            out.probabilities = std::move(fwd.probabilities);
            out.diag = std::move(fwd.diag);
            return out;
        }

        case intervention_mode::mean_add: {
            // head-homogeneous shift by the mean map, the rigid scheme the
            // adaptive pipeline is compared against
            require_finite(logits, "apply_intervention");
            const auto mean = mean_map(logits);
            out.recalibrated = matrix<T>(heads, tokens);
            const T shift = T(cfg.devil_alpha);
            for (int h = 0; h < heads; ++h) {
                const T* row = logits.row(h);
                T* o = out.recalibrated.row(h);
                for (int m = 0; m < tokens; ++m) o[m] = row[m] + shift * mean[m];
            }
            out.probabilities = softmax_rows(out.recalibrated);
            out.diag.mean = mean;
            return out;
        }

        case intervention_mode::hard_truncate: {
            require_finite(logits, "apply_intervention");
            const auto consensus = median_consensus(logits);
            const auto mean = mean_map(logits);
            const auto std_dev = spatial_std(logits, mean);
            T mean_std = T(0);
            for (int m = 0; m < tokens; ++m) mean_std += std_dev[m];
            mean_std /= T(tokens);
            const T cutoff = T(cfg.truncate_threshold) * mean_std;

            out.recalibrated = logits;
            for (int h = 0; h < heads; ++h) {
                const T* row = logits.row(h);
                T dev = T(0);
                for (int m = 0; m < tokens; ++m) {
                    dev += std::fabs(std::fabs(row[m]) - consensus[m]);
                }
                dev /= T(tokens);
                if (dev > cutoff) {
                    out.truncated_heads.push_back(h);
                    T* o = out.recalibrated.row(h);
                    for (int m = 0; m < tokens; ++m) o[m] = T(kTruncationSentinel);
                }
            }
            if (static_cast<int>(out.truncated_heads.size()) == heads) {
                throw std::runtime_error(
                    "apply_intervention: hard_truncate removed all " + std::to_string(heads) +
                    " heads (threshold " + std::to_string(cfg.truncate_threshold) + ")");
            }
            out.probabilities = softmax_rows(out.recalibrated);
            out.diag.consensus = consensus;
            out.diag.mean = mean;
            out.diag.std_dev = std_dev;
            return out;
        }

        case intervention_mode::add_subtract: {
            // sadi's additive term plus an explicit background penalty; beta=0
            // reduces to plain sadi on the same code path
            sadi_config base = cfg;
            base.mode = intervention_mode::sadi;
            auto fwd = sadi_forward(logits, base);
            out.background = detail::background_split(fwd.diag.consensus);
            out.recalibrated = std::move(fwd.recalibrated);
            const T beta = T(cfg.beta);
            for (int h = 0; h < heads; ++h) {
                T* o = out.recalibrated.row(h);
                const T* msk = fwd.diag.masks.row(h);
                for (int m = 0; m < tokens; ++m) {
                    o[m] -= beta * T(out.background[m]) * msk[m];
                }
            }
            out.probabilities = softmax_rows(out.recalibrated);
            out.diag = std::move(fwd.diag);
            return out;
        }
    }
    throw config_error("apply_intervention: unknown mode");
}

}  // namespace sadi
