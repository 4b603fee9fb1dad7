#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sadi/config.hpp"
#include "sadi/detail/selection_network.hpp"
#include "sadi/matrix.hpp"

namespace sadi {

// ---------------------------------------------------------------------------
// Elementwise statistics over heads
// ---------------------------------------------------------------------------

/// Per-token median of absolute logits across heads. Even head counts take
/// the mean of the two middle order statistics.
template <typename T>
std::vector<T> median_consensus(const matrix<T>& logits) {
    require_finite(logits, "median_consensus");
    const int heads = logits.rows();
    const int tokens = logits.cols();
    const int k_lo = (heads - 1) / 2;
    std::vector<T> column(heads);
    std::vector<T> consensus(tokens);
    for (int m = 0; m < tokens; ++m) {
        for (int h = 0; h < heads; ++h) column[h] = std::fabs(logits(h, m));
        std::nth_element(column.begin(), column.begin() + k_lo, column.end());
        if (heads % 2 == 1) {
            consensus[m] = column[k_lo];
        } else {
            // after nth_element everything past k_lo is >= column[k_lo]
            const T upper = *std::min_element(column.begin() + k_lo + 1, column.end());
            consensus[m] = T(0.5) * (column[k_lo] + upper);
        }
    }
    return consensus;
}

/// Per-token mean of absolute logits across heads.
template <typename T>
std::vector<T> mean_map(const matrix<T>& logits) {
    require_finite(logits, "mean_map");
    const int heads = logits.rows();
    const int tokens = logits.cols();
    std::vector<T> mean(tokens, T(0));
    for (int h = 0; h < heads; ++h) {
        const T* row = logits.row(h);
        for (int m = 0; m < tokens; ++m) mean[m] += std::fabs(row[m]);
    }
    for (int m = 0; m < tokens; ++m) mean[m] /= T(heads);
    return mean;
}

/// Per-token population standard deviation of absolute logits (divisor = head
/// count, no Bessel correction). `mean` must come from mean_map on the same
/// logits.
template <typename T>
std::vector<T> spatial_std(const matrix<T>& logits, const std::vector<T>& mean) {
    const int heads = logits.rows();
    const int tokens = logits.cols();
    if (static_cast<int>(mean.size()) != tokens) {
        throw std::invalid_argument("spatial_std: mean has " + std::to_string(mean.size()) +
                                    " entries for " + std::to_string(tokens) + " tokens");
    }
    std::vector<T> acc(tokens, T(0));
    for (int h = 0; h < heads; ++h) {
        const T* row = logits.row(h);
        for (int m = 0; m < tokens; ++m) {
            const T d = std::fabs(row[m]) - mean[m];
            acc[m] += d * d;
        }
    }
    for (int m = 0; m < tokens; ++m) acc[m] = std::sqrt(acc[m] / T(heads));
    return acc;
}

/// Spatial min-max normalization with an epsilon-guarded denominator; a
/// constant input maps to all zeros.
template <typename T>
std::vector<T> normalize_std(const std::vector<T>& std_dev, T epsilon) {
    if (!(epsilon > T(0))) {
        throw std::invalid_argument("normalize_std: epsilon must be > 0");
    }
    const auto [lo_it, hi_it] = std::minmax_element(std_dev.begin(), std_dev.end());
    const T lo = *lo_it;
    const T inv = T(1) / (*hi_it - lo + epsilon);
    std::vector<T> out(std_dev.size());
    for (std::size_t m = 0; m < std_dev.size(); ++m) out[m] = (std_dev[m] - lo) * inv;
    return out;
}

/// Interpolates the per-token intervention budget between the two bounds.
template <typename T>
std::vector<T> dynamic_budget(const std::vector<T>& std_norm, T alpha_min, T alpha_max) {
    if (!(T(0) <= alpha_min && alpha_min <= alpha_max)) {
        throw std::invalid_argument("dynamic_budget: require 0 <= alpha_min <= alpha_max");
    }
    std::vector<T> out(std_norm.size());
    for (std::size_t m = 0; m < std_norm.size(); ++m) {
        out[m] = alpha_min + (alpha_max - alpha_min) * std_norm[m];
    }
    return out;
}

/// Soft mask per head and token: deviation from the consensus measured in
/// units of the per-token standard deviation, clamped to [0, 1].
template <typename T>
matrix<T> soft_mask(const matrix<T>& logits, const std::vector<T>& consensus,
                    const std::vector<T>& std_dev, T epsilon) {
    const int heads = logits.rows();
    const int tokens = logits.cols();
    if (static_cast<int>(consensus.size()) != tokens ||
        static_cast<int>(std_dev.size()) != tokens) {
        throw std::invalid_argument("soft_mask: map size does not match token count");
    }
    matrix<T> masks(heads, tokens);
    for (int m = 0; m < tokens; ++m) {
        const T inv = T(1) / (std_dev[m] + epsilon);
        for (int h = 0; h < heads; ++h) {
            const T dev = std::fabs(std::fabs(logits(h, m)) - consensus[m]);
            masks(h, m) = std::clamp(dev * inv, T(0), T(1));
        }
    }
    return masks;
}

/// Additive recalibration: E_h + alpha * C * M_h. Never decreases a logit
/// while the budget is non-negative.
template <typename T>
matrix<T> recalibrate(const matrix<T>& logits, const std::vector<T>& consensus,
                      const std::vector<T>& alpha, const matrix<T>& masks) {
    const int heads = logits.rows();
    const int tokens = logits.cols();
    if (!logits.same_shape(masks) || static_cast<int>(consensus.size()) != tokens ||
        static_cast<int>(alpha.size()) != tokens) {
        throw std::invalid_argument("recalibrate: shape mismatch between pipeline inputs");
    }
    matrix<T> out(heads, tokens);
    for (int h = 0; h < heads; ++h) {
        const T* row = logits.row(h);
        const T* msk = masks.row(h);
        T* o = out.row(h);
        for (int m = 0; m < tokens; ++m) o[m] = row[m] + alpha[m] * consensus[m] * msk[m];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Max-subtraction stabilized softmax over one row.
template <typename T>
void softmax_row(const T* in, T* out, int n) {
    T mx = in[0];
    for (int m = 1; m < n; ++m) mx = std::max(mx, in[m]);
    T sum = T(0);
    for (int m = 0; m < n; ++m) {
        const T e = std::exp(in[m] - mx);
        out[m] = e;
        sum += e;
    }
    const T inv = T(1) / sum;
    for (int m = 0; m < n; ++m) out[m] *= inv;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& row) {
    if (row.empty()) throw std::invalid_argument("softmax: empty input");
    std::vector<T> out(row.size());
    softmax_row(row.data(), out.data(), static_cast<int>(row.size()));
    return out;
}

template <typename T>
matrix<T> softmax_rows(const matrix<T>& logits) {
    matrix<T> out(logits.rows(), logits.cols());
    for (int h = 0; h < logits.rows(); ++h) {
        softmax_row(logits.row(h), out.row(h), logits.cols());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fused pipeline engine
// ---------------------------------------------------------------------------

/// Intermediate statistics of one forward pass, exposed for export and tests.
template <typename T>
struct diagnostics {
    std::vector<T> consensus;
    std::vector<T> mean;
    std::vector<T> std_dev;
    std::vector<T> std_norm;
    std::vector<T> alpha;
    matrix<T> masks;

    bool empty() const { return consensus.empty(); }
};

/// Single-layer pipeline with a reusable workspace. Produces results that are
/// bit-identical to composing the standalone operations above; the difference
/// is purely mechanical (fused passes, tiled comparator-network median).
///
/// Handles modes `sadi` and `none`; the comparison modes live in
/// apply_intervention. One engine instance is not safe for concurrent use,
/// but distinct instances are independent.
template <typename T>
class engine {
public:
    explicit engine(const sadi_config& cfg) : cfg_(validated(cfg)) {
        if (cfg_.mode != intervention_mode::sadi && cfg_.mode != intervention_mode::none) {
            throw config_error(std::string("engine: mode '") + to_string(cfg_.mode) +
                               "' is handled by apply_intervention, not the core pipeline");
        }
    }

    const sadi_config& config() const { return cfg_; }

    /// Full pipeline; fills recalibrated logits, per-head probabilities and,
    /// when requested, the intermediate statistics.
    void forward(const matrix<T>& logits, matrix<T>& recalibrated, matrix<T>& probabilities,
                 diagnostics<T>* diag = nullptr) {
        shape(recalibrated, logits.rows(), logits.cols());
        shape(probabilities, logits.rows(), logits.cols());
        if (cfg_.mode == intervention_mode::none) {
            recalibrated = logits;
            for (int h = 0; h < logits.rows(); ++h) {
                softmax_row(logits.row(h), probabilities.row(h), logits.cols());
            }
            if (diag) *diag = diagnostics<T>{};
            return;
        }
        run_sadi(logits, recalibrated, probabilities, diag);
    }

    /// Probabilities-only path used by the latency bench: recalibrated rows
    /// live in a row buffer instead of a materialized output tensor.
    void forward_probs(const matrix<T>& logits, matrix<T>& probabilities) {
        shape(probabilities, logits.rows(), logits.cols());
        if (cfg_.mode == intervention_mode::none) {
            for (int h = 0; h < logits.rows(); ++h) {
                softmax_row(logits.row(h), probabilities.row(h), logits.cols());
            }
            return;
        }
        run_stats(logits);
        rowbuf_.resize(logits.cols());
        for (int h = 0; h < logits.rows(); ++h) {
            recal_row(logits.row(h), rowbuf_.data(), nullptr, logits.cols());
            softmax_row(rowbuf_.data(), probabilities.row(h), logits.cols());
        }
    }

private:
    static constexpr int kTileWidth = 64;

    static void shape(matrix<T>& m, int rows, int cols) {
        if (m.rows() != rows || m.cols() != cols) m = matrix<T>(rows, cols);
    }

    void ensure_workspace(int heads, int tokens) {
        if (net_.heads != heads) net_ = detail::selection_network::build(heads);
        // the comparator passes want 64-byte-aligned rows
        tile_storage_.resize(static_cast<std::size_t>(net_.wires) * kTileWidth + 16);
        const auto addr = reinterpret_cast<std::uintptr_t>(tile_storage_.data());
        tile_ = reinterpret_cast<T*>((addr + 63) & ~std::uintptr_t(63));
        mean_.resize(tokens);
        stddev_.resize(tokens);
        stdnorm_.resize(tokens);
        alpha_.resize(tokens);
        consensus_.resize(tokens);
        addterm_.resize(tokens);
        maskinv_.resize(tokens);
    }

    [[noreturn]] void fail_non_finite(const matrix<T>& logits, int m) const {
        for (int h = 0; h < logits.rows(); ++h) {
            if (!std::isfinite(logits(h, m))) {
                throw std::invalid_argument("sadi_forward: non-finite logit at head " +
                                            std::to_string(h) + ", token " + std::to_string(m));
            }
        }
        throw std::invalid_argument("sadi_forward: mean overflow at token " + std::to_string(m));
    }

    // Computes the per-token statistics C, mean, S, S~, alpha plus the fused
    // per-token recalibration terms (alpha*C and the mask scale).
    void run_stats(const matrix<T>& logits) {
        const int heads = logits.rows();
        const int tokens = logits.cols();
        ensure_workspace(heads, tokens);

        // tile pass: absolute values feed the per-token mean and population
        // std (both accumulated in head order) and the median network
        std::fill(mean_.begin(), mean_.end(), T(0));
        std::fill(stddev_.begin(), stddev_.end(), T(0));
        median_pass(logits, heads, tokens);

        // non-finite inputs surface as NaN/Inf in the statistics; rescan to
        // name the offending entry
        for (int m = 0; m < tokens; ++m) {
            if (!std::isfinite(mean_[m])) fail_non_finite(logits, m);
        }

        // per-token budget and mask scale
        T lo = stddev_[0], hi = stddev_[0];
        for (int m = 1; m < tokens; ++m) {
            lo = std::min(lo, stddev_[m]);
            hi = std::max(hi, stddev_[m]);
        }
        const T eps = T(cfg_.epsilon);
        const T amin = T(cfg_.alpha_min);
        const T amax = T(cfg_.alpha_max);
        const T inv_denom = T(1) / (hi - lo + eps);
        for (int m = 0; m < tokens; ++m) {
            const T sn = (stddev_[m] - lo) * inv_denom;
            stdnorm_[m] = sn;
            const T a = amin + (amax - amin) * sn;
            alpha_[m] = a;
            addterm_[m] = a * consensus_[m];
            maskinv_[m] = T(1) / (stddev_[m] + eps);
        }
    }

    // Soft mask + additive recalibration for one head row; masks are only
    // materialized when requested.
    void recal_row(const T* __restrict row, T* __restrict out, T* __restrict mask_row,
                   int tokens) const {
        const T* __restrict cons = consensus_.data();
        const T* __restrict minv = maskinv_.data();
        const T* __restrict add = addterm_.data();
        if (mask_row) {
            for (int m = 0; m < tokens; ++m) {
                const T dev = std::fabs(std::fabs(row[m]) - cons[m]);
                const T msk = std::min(dev * minv[m], T(1));
                mask_row[m] = msk;
                out[m] = row[m] + add[m] * msk;
            }
        } else {
            for (int m = 0; m < tokens; ++m) {
                const T dev = std::fabs(std::fabs(row[m]) - cons[m]);
                const T msk = std::min(dev * minv[m], T(1));
                out[m] = row[m] + add[m] * msk;
            }
        }
    }

    void run_sadi(const matrix<T>& logits, matrix<T>& recal, matrix<T>& probs,
                  diagnostics<T>* diag) {
        const int heads = logits.rows();
        const int tokens = logits.cols();
        run_stats(logits);

        matrix<T>* mask_out = nullptr;
        if (diag) {
            shape(diag->masks, heads, tokens);
            mask_out = &diag->masks;
        }
        for (int h = 0; h < heads; ++h) {
            recal_row(logits.row(h), recal.row(h), mask_out ? mask_out->row(h) : nullptr,
                      tokens);
        }
        for (int h = 0; h < heads; ++h) {
            softmax_row(recal.row(h), probs.row(h), tokens);
        }

        if (diag) {
            diag->consensus = consensus_;
            diag->mean = mean_;
            diag->std_dev = stddev_;
            diag->std_norm = stdnorm_;
            diag->alpha = alpha_;
        }
    }

    // One pass over token tiles produces the mean map, the population std and
    // the median consensus. Tile rows hold |E| for the tile's tokens, stay in
    // L1 and are 64-byte aligned; the mean and std accumulate in head order
    // from them before the comparator network scrambles the rows.
    void median_pass(const matrix<T>& logits, int heads, int tokens) {
        constexpr T inf = std::numeric_limits<T>::infinity();
        const int wires = net_.wires;
        T* const tile = tile_;
        for (int base = 0; base < tokens; base += kTileWidth) {
            const int n = std::min(kTileWidth, tokens - base);
            {
                T* __restrict sums = mean_.data() + base;
                for (int h = 0; h < heads; ++h) {
                    const T* __restrict src = logits.row(h) + base;
                    T* __restrict dst = tile + static_cast<std::size_t>(h) * kTileWidth;
                    for (int i = 0; i < n; ++i) {
                        const T a = std::fabs(src[i]);
                        dst[i] = a;
                        sums[i] += a;
                    }
                    for (int i = n; i < kTileWidth; ++i) dst[i] = inf;
                }
                // head sums are complete for this tile: finalize the mean and
                // accumulate squared deviations off the hot tile rows
                T* __restrict acc = stddev_.data() + base;
                for (int i = 0; i < n; ++i) sums[i] /= T(heads);
                for (int h = 0; h < heads; ++h) {
                    const T* __restrict w = tile + static_cast<std::size_t>(h) * kTileWidth;
                    for (int i = 0; i < n; ++i) {
                        const T d = w[i] - sums[i];
                        acc[i] += d * d;
                    }
                }
                for (int i = 0; i < n; ++i) acc[i] = std::sqrt(acc[i] / T(heads));
            }
            for (int w = heads; w < wires; ++w) {
                T* dst = tile + static_cast<std::size_t>(w) * kTileWidth;
                for (int i = 0; i < kTileWidth; ++i) dst[i] = inf;
            }
            for (auto [i, j] : net_.comparators) {
                T* __restrict a = tile + static_cast<std::size_t>(i) * kTileWidth;
                T* __restrict b = tile + static_cast<std::size_t>(j) * kTileWidth;
                for (int x = 0; x < kTileWidth; ++x) {
                    const T u = a[x];
                    const T v = b[x];
                    a[x] = std::min(u, v);
                    b[x] = std::max(u, v);
                }
            }
            const T* lo = tile + static_cast<std::size_t>(net_.lo) * kTileWidth;
            const T* hi = tile + static_cast<std::size_t>(net_.hi) * kTileWidth;
            if (net_.lo == net_.hi) {
                for (int i = 0; i < n; ++i) consensus_[base + i] = lo[i];
            } else {
                for (int i = 0; i < n; ++i) consensus_[base + i] = T(0.5) * (lo[i] + hi[i]);
            }
        }
    }

    sadi_config cfg_;
    detail::selection_network net_;
    std::vector<T> tile_storage_;
    T* tile_ = nullptr;
    std::vector<T> mean_, stddev_, stdnorm_, alpha_, consensus_, addterm_, maskinv_;
    std::vector<T> rowbuf_;
};

template <typename T>
struct forward_result {
    matrix<T> recalibrated;
    matrix<T> probabilities;
    diagnostics<T> diag;
};

/// One-shot pipeline invocation (modes `sadi` and `none`).
template <typename T>
forward_result<T> sadi_forward(const matrix<T>& logits, const sadi_config& cfg) {
    engine<T> eng(cfg);
    forward_result<T> out;
    eng.forward(logits, out.recalibrated, out.probabilities, &out.diag);
    return out;
}

}  // namespace sadi
