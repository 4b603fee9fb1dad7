#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sadi/config.hpp"
#include "sadi/core.hpp"
#include "sadi/intervention.hpp"
#include "sadi/matrix.hpp"

namespace sadi {

/// Synthetic multi-head attention population: a majority of reliable heads
/// concentrated on the salient tokens plus a minority of drifting heads that
/// park their mass on random background tokens.
struct drift_scenario {
    int tokens = 64;
    std::vector<int> salient;   // indices of salient tokens
    int n_reliable = 7;
    int n_drift = 1;
    double salient_gain = 6.0;  // logit magnitude for reliable heads
    double drift_gain = 6.0;    // logit magnitude for drifting heads
    double noise_std = 0.1;
    std::uint64_t seed = 0;
};

namespace detail {

// Draws layered on mt19937_64 only, so generated fixtures reproduce across
// standard-library implementations (std::normal_distribution does not).
inline double uniform_open01(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
}

inline double standard_normal(std::mt19937_64& rng) {
    const double u1 = uniform_open01(rng);
    const double u2 = uniform_open01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

inline void validate_scenario(const drift_scenario& s) {
    if (s.tokens < 1) throw std::invalid_argument("scenario: tokens must be >= 1");
    if (s.n_reliable < 0 || s.n_drift < 0 || s.n_reliable + s.n_drift < 2) {
        throw std::invalid_argument("scenario: need n_reliable + n_drift >= 2 heads");
    }
    if (s.salient.empty()) throw std::invalid_argument("scenario: empty salient set");
    std::vector<char> seen(s.tokens, 0);
    for (int idx : s.salient) {
        if (idx < 0 || idx >= s.tokens) {
            throw std::invalid_argument("scenario: salient index " + std::to_string(idx) +
                                        " out of range for " + std::to_string(s.tokens) +
                                        " tokens");
        }
        if (seen[idx]) throw std::invalid_argument("scenario: duplicate salient index " +
                                                   std::to_string(idx));
        seen[idx] = 1;
    }
    if (!(s.salient_gain > 0.0)) throw std::invalid_argument("scenario: salient_gain must be > 0");
    if (!(s.drift_gain > 0.0)) throw std::invalid_argument("scenario: drift_gain must be > 0");
    if (s.noise_std < 0.0) throw std::invalid_argument("scenario: noise_std must be >= 0");
}

/// Deterministic scene generation: reliable heads first, then drifting heads.
/// Each drifting head puts drift_gain on its own random background subset of
/// the salient set's size.
inline matrix<double> generate_scene(const drift_scenario& s) {
    validate_scenario(s);
    const int heads = s.n_reliable + s.n_drift;
    std::vector<char> is_salient(s.tokens, 0);
    for (int idx : s.salient) is_salient[idx] = 1;
    std::vector<int> background;
    for (int m = 0; m < s.tokens; ++m) {
        if (!is_salient[m]) background.push_back(m);
    }

    std::mt19937_64 rng(s.seed);
    matrix<double> logits(heads, s.tokens, 0.0);
    const std::size_t subset = std::min(s.salient.size(), background.size());
    for (int h = 0; h < heads; ++h) {
        if (h < s.n_reliable) {
            for (int idx : s.salient) logits(h, idx) = s.salient_gain;
        } else {
            std::vector<int> pool = background;  // fresh pool per drifting head
            for (std::size_t i = 0; i < subset; ++i) {
                const std::size_t j = i + rng() % (pool.size() - i);
                std::swap(pool[i], pool[j]);
                logits(h, pool[i]) = s.drift_gain;
            }
        }
        if (s.noise_std > 0.0) {
            for (int m = 0; m < s.tokens; ++m) {
                logits(h, m) += s.noise_std * detail::standard_normal(rng);
            }
        }
    }
    return logits;
}

/// KL(p || q) in nats with 0*ln(0) = 0. Both inputs must be normalized; q
/// must be positive wherever p is.
inline double kl_divergence(const double* p, const double* q, int n) {
    double sum_p = 0.0, sum_q = 0.0;
    for (int i = 0; i < n; ++i) {
        sum_p += p[i];
        sum_q += q[i];
    }
    if (std::fabs(sum_p - 1.0) > 1e-9 || std::fabs(sum_q - 1.0) > 1e-9) {
        throw std::invalid_argument("kl_divergence: inputs must sum to 1 within 1e-9");
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] > 0.0) {
            if (!(q[i] > 0.0)) {
                throw std::invalid_argument("kl_divergence: support violation at index " +
                                            std::to_string(i));
            }
            acc += p[i] * std::log(p[i] / q[i]);
        }
    }
    // rounding can leave a tiny negative residue when p ~= q
    return std::max(acc, 0.0);
}

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("kl_divergence: length mismatch");
    }
    return kl_divergence(p.data(), q.data(), static_cast<int>(p.size()));
}

/// Per-head semantic-drift measurements before and after an intervention.
/// The consensus distribution is softmax of the median-consensus logits.
struct drift_report {
    std::vector<double> kl_before;
    std::vector<double> kl_after;
    std::vector<double> salient_mass_before;
    std::vector<double> salient_mass_after;
    double mean_drift_reduction = 0.0;
};

inline drift_report compute_drift_report(const matrix<double>& logits, const sadi_config& cfg,
                                         const std::vector<int>& salient) {
    const int heads = logits.rows();
    const int tokens = logits.cols();
    for (int idx : salient) {
        if (idx < 0 || idx >= tokens) {
            throw std::invalid_argument("drift_report: salient index " + std::to_string(idx) +
                                        " out of range");
        }
    }
    const auto consensus_dist = softmax(median_consensus(logits));
    const auto before = softmax_rows(logits);
    const auto outcome = apply_intervention(logits, cfg);
    const auto& after = outcome.probabilities;

    drift_report rep;
    rep.kl_before.resize(heads);
    rep.kl_after.resize(heads);
    rep.salient_mass_before.resize(heads);
    rep.salient_mass_after.resize(heads);
    for (int h = 0; h < heads; ++h) {
        rep.kl_before[h] = kl_divergence(before.row(h), consensus_dist.data(), tokens);
        rep.kl_after[h] = kl_divergence(after.row(h), consensus_dist.data(), tokens);
        double mb = 0.0, ma = 0.0;
        for (int idx : salient) {
            mb += before(h, idx);
            ma += after(h, idx);
        }
        rep.salient_mass_before[h] = mb;
        rep.salient_mass_after[h] = ma;
    }
    double sum_before = 0.0, sum_after = 0.0;
    int counted = 0;
    for (int h = 0; h < heads; ++h) {
        if (rep.kl_before[h] > 1e-9) {
            sum_before += rep.kl_before[h];
            sum_after += rep.kl_after[h];
            ++counted;
        }
    }
    rep.mean_drift_reduction = counted > 0 ? 1.0 - (sum_after / counted) / (sum_before / counted)
                                           : 0.0;
    return rep;
}

/// Multi-step drift compounding: step t runs the scenario with drift_gain
/// multiplied by growth^t and seed shifted by t.
inline std::vector<drift_report> snowball_trajectory(const drift_scenario& scenario, int steps,
                                                     double growth, const sadi_config& cfg) {
    if (steps < 1) throw std::invalid_argument("snowball_trajectory: steps must be >= 1");
    if (!(growth >= 1.0)) throw std::invalid_argument("snowball_trajectory: growth must be >= 1");
    std::vector<drift_report> reports;
    reports.reserve(steps);
    for (int t = 0; t < steps; ++t) {
        drift_scenario step = scenario;
        step.drift_gain = scenario.drift_gain * std::pow(growth, t);
        step.seed = scenario.seed + static_cast<std::uint64_t>(t);
        reports.push_back(compute_drift_report(generate_scene(step), cfg, scenario.salient));
    }
    return reports;
}

// ---------------------------------------------------------------------------
// JSON / CSV interfaces
// ---------------------------------------------------------------------------

inline drift_scenario scenario_from_json(const nlohmann::json& j) {
    static const char* known[] = {"tokens",       "salient",    "salient_count", "n_reliable",
                                  "n_drift",      "salient_gain", "drift_gain",  "noise_std",
                                  "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw std::invalid_argument("scenario: unknown key '" + it.key() + "'");
    }
    drift_scenario s;
    s.tokens = j.value("tokens", s.tokens);
    if (j.contains("salient")) {
        s.salient = j.at("salient").get<std::vector<int>>();
    } else if (j.contains("salient_count")) {
        const int count = j.at("salient_count").get<int>();
        s.salient.clear();
        for (int i = 0; i < count; ++i) s.salient.push_back(i);
    } else {
        s.salient.clear();
        for (int i = 0; i < std::min(8, s.tokens); ++i) s.salient.push_back(i);
    }
    s.n_reliable = j.value("n_reliable", s.n_reliable);
    s.n_drift = j.value("n_drift", s.n_drift);
    s.salient_gain = j.value("salient_gain", s.salient_gain);
    s.drift_gain = j.value("drift_gain", s.drift_gain);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.seed = j.value("seed", s.seed);
    validate_scenario(s);
    return s;
}

inline nlohmann::json report_to_json(const drift_report& rep) {
    return nlohmann::json{{"kl_before", rep.kl_before},
                          {"kl_after", rep.kl_after},
                          {"salient_mass_before", rep.salient_mass_before},
                          {"salient_mass_after", rep.salient_mass_after},
                          {"mean_drift_reduction", rep.mean_drift_reduction}};
}

inline void write_drift_csv(std::ostream& os, const std::vector<drift_report>& reports) {
    os << "step,head,kl_before,kl_after,salient_mass_before,salient_mass_after\n";
    os << std::setprecision(17);
    for (std::size_t t = 0; t < reports.size(); ++t) {
        const auto& rep = reports[t];
        for (std::size_t h = 0; h < rep.kl_before.size(); ++h) {
            os << t << ',' << h << ',' << rep.kl_before[h] << ',' << rep.kl_after[h] << ','
               << rep.salient_mass_before[h] << ',' << rep.salient_mass_after[h] << '\n';
        }
    }
}

}  // namespace sadi
