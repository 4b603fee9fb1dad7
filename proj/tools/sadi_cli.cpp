// sadi: command-line surface for the attention-recalibration engine.
//
// Subcommands: recalibrate, simulate, sweep, chair, pope, bench,
// export-heatmap. Machine-readable JSON goes to stdout, logs and warnings to
// stderr. Exit codes: 0 ok, 2 bad input, 3 bad config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sadi/bench.hpp"
#include "sadi/config_io.hpp"
#include "sadi/core.hpp"
#include "sadi/drift.hpp"
#include "sadi/heatmap.hpp"
#include "sadi/intervention.hpp"
#include "sadi/metrics.hpp"
#include "sadi/tensor_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitBadConfig = 3;

std::uint64_t env_seed() {
    const char* env = std::getenv("SADI_SEED");
    if (!env || !*env) return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
        throw std::runtime_error(std::string("SADI_SEED is not an integer: '") + env + "'");
    }
    return v;
}

sadi::sadi_config load_config_or_default(const std::string& path) {
    if (path.empty()) return sadi::validated(sadi::sadi_config{});
    return sadi::load_config(path);
}

sadi::drift_scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + std::string(e.what()));
    }
    if (!j.contains("seed")) j["seed"] = env_seed();
    return sadi::scenario_from_json(j);
}

template <typename T>
std::vector<double> widen(const std::vector<T>& v) {
    return std::vector<double>(v.begin(), v.end());
}

template <typename T>
void write_diagnostics_dir(const std::string& dir, const sadi::diagnostics<T>& diag) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto vec_csv = [&](const char* name, const std::vector<T>& v) {
        if (!v.empty()) {
            sadi::write_grid_csv((fs::path(dir) / name).string(), widen(v),
                                 static_cast<int>(v.size()));
        }
    };
    vec_csv("consensus.csv", diag.consensus);
    vec_csv("mean.csv", diag.mean);
    vec_csv("std.csv", diag.std_dev);
    vec_csv("std_norm.csv", diag.std_norm);
    vec_csv("alpha.csv", diag.alpha);
    if (diag.masks.rows() > 0) {
        sadi::write_grid_csv((fs::path(dir) / "masks.csv").string(), widen(diag.masks.data()),
                             diag.masks.cols());
    }
}

template <typename T>
sadi::matrix<T> convert(const sadi::matrix<float>& in) {
    sadi::matrix<T> out(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.size(); ++i) out.data()[i] = static_cast<T>(in.data()[i]);
    return out;
}

int cmd_recalibrate(const std::string& in_path, const std::string& config_path,
                    const std::string& out_path, const std::string& diag_dir) {
    const auto cfg = load_config_or_default(config_path);
    const auto input = sadi::read_tensor(in_path);

    nlohmann::json status{{"input", in_path},
                          {"output", out_path},
                          {"heads", input.rows()},
                          {"tokens", input.cols()},
                          {"mode", sadi::to_string(cfg.mode)}};
    if (cfg.precision == sadi::scalar_precision::float32) {
        const auto outcome = sadi::apply_intervention(input, cfg);
        sadi::write_tensor(out_path, outcome.recalibrated);
        if (!diag_dir.empty()) write_diagnostics_dir(diag_dir, outcome.diag);
        if (!outcome.truncated_heads.empty()) status["truncated_heads"] = outcome.truncated_heads;
    } else {
        const auto outcome = sadi::apply_intervention(convert<double>(input), cfg);
        sadi::matrix<float> narrowed(input.rows(), input.cols());
        for (std::size_t i = 0; i < narrowed.size(); ++i) {
            narrowed.data()[i] = static_cast<float>(outcome.recalibrated.data()[i]);
        }
        sadi::write_tensor(out_path, narrowed);
        if (!diag_dir.empty()) write_diagnostics_dir(diag_dir, outcome.diag);
        if (!outcome.truncated_heads.empty()) status["truncated_heads"] = outcome.truncated_heads;
    }
    std::cout << status.dump(2) << "\n";
    return kExitOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& config_path, int steps,
                 double growth, const std::string& csv_path) {
    const auto scenario = load_scenario(scenario_path);
    const auto cfg = load_config_or_default(config_path);
    const auto reports = sadi::snowball_trajectory(scenario, steps, growth, cfg);

    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
        sadi::write_drift_csv(os, reports);
    }
    nlohmann::json out{{"steps", steps}, {"growth", growth}, {"seed", scenario.seed}};
    out["reports"] = nlohmann::json::array();
    for (const auto& rep : reports) out["reports"].push_back(sadi::report_to_json(rep));
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& scenario_path, const std::string& config_path,
              const std::vector<double>& min_grid, const std::vector<double>& max_grid,
              const std::string& csv_path) {
    const auto scenario = load_scenario(scenario_path);
    const auto base_cfg = load_config_or_default(config_path);
    const auto scene = sadi::generate_scene(scenario);
    const int heads = scene.rows();
    const int first_drift_head = scenario.n_reliable;

    nlohmann::json rows = nlohmann::json::array();
    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path);
        if (!csv) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
        csv << "alpha_min,alpha_max,mean_drift_reduction,mean_salient_mass_change,"
               "drift_salient_mass_after\n";
        csv << std::setprecision(17);
    }
    int emitted = 0;
    for (double amin : min_grid) {
        for (double amax : max_grid) {
            if (amin > amax) {
                std::cerr << "warning: skipping invalid pair alpha_min=" << amin
                          << " > alpha_max=" << amax << "\n";
                continue;
            }
            sadi::sadi_config cfg = base_cfg;
            cfg.alpha_min = amin;
            cfg.alpha_max = amax;
            const auto rep = sadi::compute_drift_report(scene, cfg, scenario.salient);
            double mass_change = 0.0;
            for (int h = 0; h < heads; ++h) {
                mass_change += rep.salient_mass_after[h] - rep.salient_mass_before[h];
            }
            mass_change /= heads;
            double drift_mass_after = 0.0;
            if (scenario.n_drift > 0) {
                for (int h = first_drift_head; h < heads; ++h) {
                    drift_mass_after += rep.salient_mass_after[h];
                }
                drift_mass_after /= scenario.n_drift;
            }
            rows.push_back({{"alpha_min", amin},
                            {"alpha_max", amax},
                            {"mean_drift_reduction", rep.mean_drift_reduction},
                            {"mean_salient_mass_change", mass_change},
                            {"drift_salient_mass_after", drift_mass_after}});
            if (csv.is_open()) {
                csv << amin << ',' << amax << ',' << rep.mean_drift_reduction << ','
                    << mass_change << ',' << drift_mass_after << '\n';
            }
            ++emitted;
        }
    }
    if (emitted == 0) {
        throw std::runtime_error("sweep: no valid (alpha_min, alpha_max) pairs in the grid");
    }
    std::cout << nlohmann::json{{"rows", rows}}.dump(2) << "\n";
    return kExitOk;
}

int cmd_chair(const std::string& captions_path, const std::string& annotations_path,
              const std::string& synonyms_path, const std::string& csv_path) {
    const auto vocabulary = sadi::load_synonyms(synonyms_path);
    const auto captions = sadi::load_captions(captions_path);
    const auto annotations = sadi::load_annotations(annotations_path, vocabulary);
    const auto result = sadi::chair_scores(captions, annotations, vocabulary);
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
        os << std::setprecision(17);
        os << "c_s,c_i,f1,precision,recall,f1_micro,n_captions,n_hal_captions,"
              "n_objects_mentioned,n_hal_objects\n";
        os << result.c_s << ',' << result.c_i << ',' << result.f1 << ',' << result.precision
           << ',' << result.recall << ',' << result.f1_micro << ',' << result.n_captions << ','
           << result.n_hal_captions << ',' << result.n_objects_mentioned << ','
           << result.n_hal_objects << '\n';
    }
    std::cout << sadi::chair_to_json(result).dump(2) << "\n";
    return kExitOk;
}

int cmd_pope(const std::string& records_path, const std::string& csv_path) {
    const auto records = sadi::load_pope(records_path);
    const auto result = sadi::pope_f1(records);
    for (const auto& warning : result.warnings) std::cerr << "warning: " << warning << "\n";
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw std::runtime_error("cannot open '" + csv_path + "' for writing");
        os << std::setprecision(17);
        os << "setting,tp,fp,fn,tn,precision,recall,f1,accuracy\n";
        for (const auto& [setting, s] : result.per_setting) {
            os << sadi::to_string(setting) << ',' << s.tp << ',' << s.fp << ',' << s.fn << ','
               << s.tn << ',' << s.precision << ',' << s.recall << ',' << s.f1 << ','
               << s.accuracy << '\n';
        }
    }
    std::cout << sadi::pope_to_json(result).dump(2) << "\n";
    return kExitOk;
}

int cmd_bench(int heads, int tokens, int layers, const std::string& mode_name, int iters,
              int warmup, const std::string& dtype, std::optional<std::uint64_t> seed) {
    sadi::bench_config cfg;
    cfg.heads = heads;
    cfg.tokens = tokens;
    cfg.layers = layers;
    cfg.iterations = iters;
    cfg.warmup = warmup;
    const auto mode = sadi::mode_from_string(mode_name);
    if (!mode) throw sadi::config_error("bench: unknown mode '" + mode_name + "'");
    cfg.mode = *mode;
    if (dtype == "float32") {
        cfg.float64 = false;
    } else if (dtype == "float64") {
        cfg.float64 = true;
    } else {
        throw sadi::config_error("bench: dtype must be float32 or float64, got '" + dtype + "'");
    }
    cfg.seed = seed ? *seed : env_seed();
    const auto report = sadi::run_bench(cfg);
    std::cout << sadi::bench_to_json(report).dump(2) << "\n";
    return kExitOk;
}

int cmd_export_heatmap(const std::string& in_path, const std::string& what, int width,
                       const std::string& out_path) {
    const bool is_csv = in_path.size() > 4 && in_path.substr(in_path.size() - 4) == ".csv";
    sadi::matrix<double> logits;
    if (is_csv) {
        logits = sadi::read_csv_matrix(in_path);
    } else {
        logits = convert<double>(sadi::read_tensor(in_path));
    }

    std::vector<double> values;
    if (what == "consensus") {
        values = sadi::median_consensus(logits);
    } else if (what == "variance") {
        values = sadi::spatial_std(logits, sadi::mean_map(logits));
    } else if (what.rfind("head:", 0) == 0) {
        const int head = std::stoi(what.substr(5));
        if (head < 0 || head >= logits.rows()) {
            throw std::runtime_error("head " + std::to_string(head) + " out of range [0," +
                                     std::to_string(logits.rows() - 1) + "]");
        }
        values.assign(logits.row(head), logits.row(head) + logits.cols());
    } else {
        throw std::runtime_error("--what must be consensus, variance or head:<h>, got '" + what +
                                 "'");
    }

    int grid_width = width;
    if (grid_width == 0) {
        const int side = static_cast<int>(std::lround(std::sqrt(double(values.size()))));
        if (static_cast<std::size_t>(side) * side != values.size()) {
            throw std::runtime_error("map of " + std::to_string(values.size()) +
                                     " values is not square; pass --width");
        }
        grid_width = side;
    }
    if (grid_width < 1 || values.size() % grid_width != 0) {
        throw std::runtime_error(std::to_string(values.size()) +
                                 " values do not divide into rows of width " +
                                 std::to_string(grid_width));
    }
    sadi::write_pgm(out_path, values, grid_width);
    std::string csv_path = out_path;
    const auto dot = csv_path.find_last_of('.');
    if (dot != std::string::npos) csv_path.resize(dot);
    csv_path += ".csv";
    sadi::write_grid_csv(csv_path, values, grid_width);
    std::cout << nlohmann::json{{"pgm", out_path},
                                {"csv", csv_path},
                                {"width", grid_width},
                                {"height", static_cast<int>(values.size()) / grid_width}}
                     .dump(2)
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SADI attention-recalibration engine"};
    app.require_subcommand(1);

    std::string rc_in, rc_config, rc_out, rc_diag;
    auto* rc = app.add_subcommand("recalibrate", "Recalibrate a tensor file");
    rc->add_option("input", rc_in, "input tensor (SADI format)")->required();
    rc->add_option("--config", rc_config, "config JSON path");
    rc->add_option("--out", rc_out, "output tensor path")->required();
    rc->add_option("--diagnostics", rc_diag, "directory for C/S/S~/alpha/mask CSV exports");

    std::string sim_scenario, sim_config, sim_csv;
    int sim_steps = 1;
    double sim_growth = 1.0;
    auto* sim = app.add_subcommand("simulate", "Run the semantic-drift simulator");
    sim->add_option("--scenario", sim_scenario, "scenario JSON path")->required();
    sim->add_option("--config", sim_config, "config JSON path");
    sim->add_option("--steps", sim_steps, "snowball steps (default 1)");
    sim->add_option("--growth", sim_growth, "drift gain growth per step (default 1.0)");
    sim->add_option("--out", sim_csv, "CSV output path");

    std::string sw_scenario, sw_config, sw_csv;
    std::vector<double> sw_min, sw_max;
    auto* sw = app.add_subcommand("sweep", "Sweep the budget bounds over a scenario");
    sw->add_option("--scenario", sw_scenario, "scenario JSON path")->required();
    sw->add_option("--config", sw_config, "config JSON path");
    sw->add_option("--alpha-min-grid", sw_min, "comma-separated alpha_min grid")
        ->required()
        ->delimiter(',');
    sw->add_option("--alpha-max-grid", sw_max, "comma-separated alpha_max grid")
        ->required()
        ->delimiter(',');
    sw->add_option("--out", sw_csv, "CSV output path");

    std::string ch_captions, ch_annotations, ch_synonyms, ch_csv;
    auto* ch = app.add_subcommand("chair", "Score captions with CHAIR");
    ch->add_option("--captions", ch_captions, "captions JSONL")->required();
    ch->add_option("--annotations", ch_annotations, "annotations JSONL")->required();
    ch->add_option("--synonyms", ch_synonyms, "synonym table JSON")->required();
    ch->add_option("--csv", ch_csv, "optional CSV output path");

    std::string pp_records, pp_csv;
    auto* pp = app.add_subcommand("pope", "Score POPE answer records");
    pp->add_option("--records", pp_records, "POPE JSONL")->required();
    pp->add_option("--csv", pp_csv, "optional CSV output path");

    int bn_heads = 32, bn_tokens = 576, bn_layers = 14, bn_iters = 200, bn_warmup = 10;
    std::string bn_mode = "sadi", bn_dtype = "float32";
    std::optional<std::uint64_t> bn_seed;
    auto* bn = app.add_subcommand("bench", "Kernel latency proxy: baseline vs intervened");
    bn->add_option("--heads", bn_heads, "head count (default 32)");
    bn->add_option("--tokens", bn_tokens, "visual token count (default 576)");
    bn->add_option("--layers", bn_layers, "layers per iteration (default 14)");
    bn->add_option("--mode", bn_mode, "sadi or none (default sadi)");
    bn->add_option("--iters", bn_iters, "timed iterations, >= 100 (default 200)");
    bn->add_option("--warmup", bn_warmup, "warmup iterations, >= 10 (default 10)");
    bn->add_option("--dtype", bn_dtype, "float32 (default) or float64");
    bn->add_option("--seed", bn_seed, "logit seed (default: SADI_SEED or 0)");

    std::string hm_in, hm_what = "consensus", hm_out;
    int hm_width = 0;
    auto* hm = app.add_subcommand("export-heatmap", "Export a PGM heatmap and raw CSV");
    hm->add_option("input", hm_in, "tensor (.sadi) or CSV input")->required();
    hm->add_option("--what", hm_what, "consensus | variance | head:<h> (default consensus)");
    hm->add_option("--width", hm_width, "grid width when the map is not square");
    hm->add_option("--out", hm_out, "output PGM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitBadInput;
    }

    try {
        if (rc->parsed()) return cmd_recalibrate(rc_in, rc_config, rc_out, rc_diag);
        if (sim->parsed()) {
            return cmd_simulate(sim_scenario, sim_config, sim_steps, sim_growth, sim_csv);
        }
        if (sw->parsed()) return cmd_sweep(sw_scenario, sw_config, sw_min, sw_max, sw_csv);
        if (ch->parsed()) return cmd_chair(ch_captions, ch_annotations, ch_synonyms, ch_csv);
        if (pp->parsed()) return cmd_pope(pp_records, pp_csv);
        if (bn->parsed()) {
            return cmd_bench(bn_heads, bn_tokens, bn_layers, bn_mode, bn_iters, bn_warmup,
                             bn_dtype, bn_seed);
        }
        if (hm->parsed()) return cmd_export_heatmap(hm_in, hm_what, hm_width, hm_out);
    } catch (const sadi::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
    return kExitBadInput;
}
