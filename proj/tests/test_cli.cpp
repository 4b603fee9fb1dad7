// End-to-end checks against the built binary: exit codes, JSON-on-stdout
// contract, file outputs.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include "json.hpp"
#include "sadi/tensor_io.hpp"

using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

struct cmd_result {
    int status = -1;
    std::string out;
};

cmd_result run_cli(const std::string& args, const std::string& stderr_path = "/dev/null",
                   const std::string& env = "") {
    const std::string cmd = env + " " + SADI_CLI_PATH + " " + args + " 2>" + stderr_path;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    cmd_result result;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) result.out.append(buf, n);
    const int rc = pclose(pipe);
    result.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return result;
}

struct temp_dir {
    std::filesystem::path path;
    temp_dir() {
        path = std::filesystem::temp_directory_path() /
               ("sadi_cli_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~temp_dir() { std::filesystem::remove_all(path); }
    std::string at(const std::string& name) const { return (path / name).string(); }
    std::string file(const std::string& name, const std::string& content) const {
        const auto p = at(name);
        std::ofstream(p) << content;
        return p;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const char* kScenario = R"({
    "tokens": 64, "salient": [0,1,2,3,4,5,6,7],
    "n_reliable": 7, "n_drift": 1,
    "salient_gain": 6.0, "drift_gain": 6.0,
    "noise_std": 0.1, "seed": 0
})";

}  // namespace

TEST_CASE("recalibrate: identical heads pass through unchanged") {
    temp_dir dir;
    sadi::matrix<float> logits(8, 16);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> dist(-4.0f, 4.0f);
    for (int m = 0; m < 16; ++m) {
        const float v = dist(rng);
        for (int h = 0; h < 8; ++h) logits(h, m) = v;
    }
    sadi::write_tensor(dir.at("in.sadi"), logits);

    const auto result = run_cli("recalibrate " + dir.at("in.sadi") + " --out " + dir.at("out.sadi"));
    REQUIRE(result.status == 0);
    REQUIRE_NOTHROW(nlohmann::json::parse(result.out));
    const auto out = sadi::read_tensor(dir.at("out.sadi"));
    REQUIRE(out == logits);
}

TEST_CASE("recalibrate: the worked three-head example") {
    temp_dir dir;
    auto logits = sadi::matrix<float>::from_rows({{5, 0}, {5, 0}, {0, 8}});
    sadi::write_tensor(dir.at("in.sadi"), logits);
    const auto diag_dir = dir.at("diag");

    const auto result = run_cli("recalibrate " + dir.at("in.sadi") + " --out " +
                                dir.at("out.sadi") + " --diagnostics " + diag_dir);
    REQUIRE(result.status == 0);
    const auto out = sadi::read_tensor(dir.at("out.sadi"));
    REQUIRE_THAT(out(2, 0), WithinAbs(1.25, 1e-6));
    REQUIRE_THAT(out(2, 1), WithinAbs(8.0, 1e-6));
    REQUIRE(out(0, 0) == 5.0f);

    for (const char* name :
         {"consensus.csv", "mean.csv", "std.csv", "std_norm.csv", "alpha.csv", "masks.csv"}) {
        REQUIRE(std::filesystem::exists(std::filesystem::path(diag_dir) / name));
    }
    const auto consensus = slurp(diag_dir + std::string("/consensus.csv"));
    REQUIRE(consensus == "5,0\n");
}

TEST_CASE("recalibrate: mode none copies the payload bitwise") {
    temp_dir dir;
    sadi::matrix<float> logits(4, 9);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> dist(-6.0f, 6.0f);
    for (auto& v : logits.data()) v = dist(rng);
    sadi::write_tensor(dir.at("in.sadi"), logits);
    const auto config = dir.file("none.json", R"({"mode": "none"})");

    const auto result = run_cli("recalibrate " + dir.at("in.sadi") + " --config " + config +
                                " --out " + dir.at("out.sadi"));
    REQUIRE(result.status == 0);
    REQUIRE(slurp(dir.at("in.sadi")) == slurp(dir.at("out.sadi")));
}

TEST_CASE("recalibrate: float32 precision flag is honored") {
    temp_dir dir;
    auto logits = sadi::matrix<float>::from_rows({{5, 0}, {5, 0}, {0, 8}});
    sadi::write_tensor(dir.at("in.sadi"), logits);
    const auto config = dir.file("f32.json", R"({"precision": "float32"})");
    const auto result = run_cli("recalibrate " + dir.at("in.sadi") + " --config " + config +
                                " --out " + dir.at("out.sadi"));
    REQUIRE(result.status == 0);
    const auto out = sadi::read_tensor(dir.at("out.sadi"));
    REQUIRE_THAT(out(2, 0), WithinAbs(1.25, 1e-4));
}

TEST_CASE("exit codes: 2 for bad input, 3 for bad config") {
    temp_dir dir;
    const auto junk = dir.file("junk.sadi", "this is not a tensor");
    auto result = run_cli("recalibrate " + junk + " --out " + dir.at("out.sadi"),
                          dir.at("err.txt"));
    REQUIRE(result.status == 2);
    REQUIRE_THAT(slurp(dir.at("err.txt")), ContainsSubstring("magic"));

    sadi::write_tensor(dir.at("in.sadi"), sadi::matrix<float>(2, 2, 1.0f));
    const auto bad_config = dir.file("bad.json", R"({"alpha_min": 0.9, "alpha_max": 0.1})");
    result = run_cli("recalibrate " + dir.at("in.sadi") + " --config " + bad_config + " --out " +
                         dir.at("out.sadi"),
                     dir.at("err2.txt"));
    REQUIRE(result.status == 3);
    REQUIRE_THAT(slurp(dir.at("err2.txt")), ContainsSubstring("alpha_min"));

    result = run_cli("recalibrate " + dir.at("missing.sadi") + " --out " + dir.at("out.sadi"));
    REQUIRE(result.status == 2);
}

TEST_CASE("simulate: deterministic csv, none mode leaves kl unchanged") {
    temp_dir dir;
    const auto scenario = dir.file("scenario.json", kScenario);

    auto first = run_cli("simulate --scenario " + scenario + " --out " + dir.at("a.csv"));
    REQUIRE(first.status == 0);
    const auto report = nlohmann::json::parse(first.out);
    REQUIRE(report.at("reports").size() == 1);

    auto second = run_cli("simulate --scenario " + scenario + " --out " + dir.at("b.csv"));
    REQUIRE(second.status == 0);
    REQUIRE(slurp(dir.at("a.csv")) == slurp(dir.at("b.csv")));

    const auto none_cfg = dir.file("none.json", R"({"mode": "none"})");
    auto idle = run_cli("simulate --scenario " + scenario + " --config " + none_cfg);
    REQUIRE(idle.status == 0);
    const auto idle_report = nlohmann::json::parse(idle.out);
    REQUIRE(idle_report.at("reports")[0].at("kl_before") ==
            idle_report.at("reports")[0].at("kl_after"));
}

TEST_CASE("simulate: SADI_SEED fills a missing scenario seed") {
    temp_dir dir;
    const auto no_seed = dir.file("noseed.json", R"({
        "tokens": 64, "salient": [0,1,2,3,4,5,6,7],
        "n_reliable": 7, "n_drift": 1,
        "salient_gain": 6.0, "drift_gain": 6.0, "noise_std": 0.1
    })");
    const auto with_seed = dir.file("seeded.json", R"({
        "tokens": 64, "salient": [0,1,2,3,4,5,6,7],
        "n_reliable": 7, "n_drift": 1,
        "salient_gain": 6.0, "drift_gain": 6.0, "noise_std": 0.1, "seed": 5
    })");
    auto env = run_cli("simulate --scenario " + no_seed + " --out " + dir.at("env.csv"),
                       "/dev/null", "SADI_SEED=5");
    auto fixed = run_cli("simulate --scenario " + with_seed + " --out " + dir.at("fixed.csv"));
    REQUIRE(env.status == 0);
    REQUIRE(fixed.status == 0);
    REQUIRE(slurp(dir.at("env.csv")) == slurp(dir.at("fixed.csv")));
}

TEST_CASE("sweep: single point matches simulate; bad pairs are skipped") {
    temp_dir dir;
    const auto scenario = dir.file("scenario.json", kScenario);

    auto simulate = run_cli("simulate --scenario " + scenario);
    const double reduction = nlohmann::json::parse(simulate.out)
                                 .at("reports")[0]
                                 .at("mean_drift_reduction")
                                 .get<double>();

    auto sweep = run_cli("sweep --scenario " + scenario +
                         " --alpha-min-grid 0.25 --alpha-max-grid 0.8 --out " + dir.at("s.csv"));
    REQUIRE(sweep.status == 0);
    const auto rows = nlohmann::json::parse(sweep.out).at("rows");
    REQUIRE(rows.size() == 1);
    REQUIRE_THAT(rows[0].at("mean_drift_reduction").get<double>(), WithinAbs(reduction, 1e-12));

    auto mixed = run_cli("sweep --scenario " + scenario +
                             " --alpha-min-grid 0.9,0.25 --alpha-max-grid 0.8",
                         dir.at("warn.txt"));
    REQUIRE(mixed.status == 0);
    REQUIRE(nlohmann::json::parse(mixed.out).at("rows").size() == 1);
    REQUIRE_THAT(slurp(dir.at("warn.txt")), ContainsSubstring("skipping"));

    auto empty = run_cli("sweep --scenario " + scenario +
                         " --alpha-min-grid 0.9 --alpha-max-grid 0.8");
    REQUIRE(empty.status == 2);
}

TEST_CASE("sweep: raising alpha_max never lowers the drifting head's salient mass") {
    temp_dir dir;
    const auto scenario = dir.file("scenario.json", R"({
        "tokens": 64, "salient": [0,1,2,3,4,5,6,7],
        "n_reliable": 7, "n_drift": 1,
        "salient_gain": 6.0, "drift_gain": 6.0, "noise_std": 0.0, "seed": 3
    })");
    auto sweep = run_cli("sweep --scenario " + scenario +
                         " --alpha-min-grid 0.25 --alpha-max-grid 0.3,0.5,0.7,0.9");
    REQUIRE(sweep.status == 0);
    const auto rows = nlohmann::json::parse(sweep.out).at("rows");
    REQUIRE(rows.size() == 4);
    double prev = -1.0;
    for (const auto& row : rows) {
        const double mass = row.at("drift_salient_mass_after").get<double>();
        REQUIRE(mass >= prev);
        prev = mass;
    }
}

TEST_CASE("chair subcommand: golden single-image case") {
    temp_dir dir;
    const auto synonyms = dir.file("syn.json",
                                   R"({"dog":"dog","person":"person","kite":"kite",
                                       "frisbee":"frisbee","man":"person"})");
    const auto captions = dir.file(
        "cap.jsonl", "{\"image_id\":\"i\",\"caption\":\"A man holds a kite near his dog.\"}\n");
    const auto annotations = dir.file(
        "ann.jsonl", "{\"image_id\":\"i\",\"objects\":[\"dog\",\"frisbee\",\"person\"]}\n");
    const auto result = run_cli("chair --captions " + captions + " --annotations " + annotations +
                                " --synonyms " + synonyms + " --csv " + dir.at("chair.csv"));
    REQUIRE(result.status == 0);
    const auto j = nlohmann::json::parse(result.out);
    REQUIRE(j.at("c_s").get<double>() == 1.0);
    REQUIRE_THAT(j.at("c_i").get<double>(), WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(j.at("f1").get<double>(), WithinAbs(2.0 / 3.0, 1e-12));
    REQUIRE_THAT(slurp(dir.at("chair.csv")), ContainsSubstring("c_s,c_i,f1"));
}

TEST_CASE("pope subcommand: all-correct file scores one, missing settings warn") {
    temp_dir dir;
    std::string jsonl;
    for (int i = 0; i < 4; ++i) {
        const bool yes = i % 2 == 0;
        jsonl += "{\"question_id\":\"" + std::to_string(i) +
                 "\",\"setting\":\"random\",\"label\":\"" + (yes ? "yes" : "no") +
                 "\",\"answer\":\"" + (yes ? "Yes, it is." : "No.") + "\"}\n";
    }
    const auto records = dir.file("pope.jsonl", jsonl);
    const auto result = run_cli("pope --records " + records, dir.at("err.txt"));
    REQUIRE(result.status == 0);
    const auto j = nlohmann::json::parse(result.out);
    REQUIRE(j.at("average_f1").get<double>() == 1.0);
    REQUIRE_THAT(slurp(dir.at("err.txt")),
                 ContainsSubstring("popular") && ContainsSubstring("adversarial"));
}

TEST_CASE("bench rejects an iteration count below the floor") {
    const auto result = run_cli("bench --iters 1");
    REQUIRE(result.status == 2);
}

TEST_CASE("export-heatmap: scaling goldens and bounds") {
    temp_dir dir;
    const auto ramp = dir.file("ramp.csv", "0,1,2,3\n");
    auto result = run_cli("export-heatmap " + ramp + " --what head:0 --width 2 --out " +
                          dir.at("ramp.pgm"));
    REQUIRE(result.status == 0);
    const auto pgm = slurp(dir.at("ramp.pgm"));
    REQUIRE(pgm == std::string("P5\n2 2\n255\n") + '\0' + '\x55' + '\xaa' + '\xff');
    REQUIRE(slurp(dir.at("ramp.csv")).substr(0, 3) == "0,1");

    const auto flat = dir.file("flat.csv", "7,7,7,7\n");
    result = run_cli("export-heatmap " + flat + " --what head:0 --width 2 --out " +
                     dir.at("flat.pgm"));
    REQUIRE(result.status == 0);
    const auto flat_pgm = slurp(dir.at("flat.pgm"));
    REQUIRE(flat_pgm.substr(flat_pgm.size() - 4) == std::string(4, '\x80'));

    sadi::matrix<float> tensor(8, 36, 1.0f);
    tensor(3, 7) = 4.0f;
    sadi::write_tensor(dir.at("t.sadi"), tensor);
    result = run_cli("export-heatmap " + dir.at("t.sadi") + " --what consensus --out " +
                     dir.at("c.pgm"));
    REQUIRE(result.status == 0);  // 36 tokens form a square

    result = run_cli("export-heatmap " + dir.at("t.sadi") + " --what head:99 --out " +
                         dir.at("x.pgm"),
                     dir.at("err.txt"));
    REQUIRE(result.status == 2);
    REQUIRE_THAT(slurp(dir.at("err.txt")), ContainsSubstring("out of range"));

    const auto six = dir.file("six.csv", "1,2,3,4,5,6\n");
    result = run_cli("export-heatmap " + six + " --what head:0 --out " + dir.at("six.pgm"));
    REQUIRE(result.status == 2);
}
