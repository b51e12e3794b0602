#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include "covpred/rng.hpp"

using covpred::Rng;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCli = COVPRED_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("covpred_cli_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CliResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(kCli) + " " + args + " > " +
                            out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

/// Six straight walkers, 22 consecutive frames each.
void write_scene(const fs::path& file, unsigned seed) {
    Rng rng(seed);
    std::ofstream out(file);
    for (int ped = 1; ped <= 6; ++ped) {
        const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double speed = rng.uniform(0.6, 1.4);
        const double x0 = rng.uniform(-8.0, 8.0);
        const double y0 = rng.uniform(-8.0, 8.0);
        for (int f = 0; f < 22; ++f) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%d %d %.6f %.6f\n", f, ped,
                          x0 + speed * std::cos(ang) * 0.4 * f,
                          y0 + speed * std::sin(ang) * 0.4 * f);
            out << buf;
        }
    }
}

/// Tiny-model config pointing at dir/data and dir/out.
fs::path write_config(const fs::path& dir) {
    const fs::path file = dir / "run.json";
    std::ofstream out(file);
    out << R"({
  "schema_version": 1,
  "data_dir": ")" << (dir / "data").string() << R"(",
  "test_scene": "beta",
  "frame_stride": 1,
  "seed": 5,
  "output_dir": ")" << (dir / "out").string() << R"(",
  "goal_net": {"embed_size": 8, "heads": 2, "head_size": 4, "mlp_hidden": 8, "dropout": 0.0},
  "goal_train": {"epochs": 4, "batch_size": 16, "lr": 0.003},
  "cov_net": {"hidden": 8, "latent": 4, "attn": 6, "mlp_hidden": 8, "dropout": 0.0},
  "cov_train": {"epochs": 4, "batch_size": 16, "lr": 0.003}
})";
    return file;
}

fs::path setup_workspace(const TempDir& dir) {
    fs::create_directories(dir.path / "data");
    write_scene(dir.path / "data" / "alpha.txt", 1);
    write_scene(dir.path / "data" / "beta.txt", 2);
    return write_config(dir.path);
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("the command pipeline runs end to end deterministically") {
    TempDir dir("pipeline");
    const fs::path cfg = setup_workspace(dir);
    const std::string base = "--config " + cfg.string();
    const fs::path out = dir.path / "out";

    auto ingest = run_cli("ingest " + base, dir.path);
    REQUIRE_MESSAGE(ingest.code == 0, ingest.err);
    CHECK(fs::exists(out / "windows.bin"));
    CHECK(fs::exists(out / "ingest_summary.txt"));
    CHECK(ingest.out.find("alpha") != std::string::npos);
    CHECK(ingest.out.find("beta") != std::string::npos);

    const std::string cache_bytes = slurp(out / "windows.bin");
    REQUIRE(run_cli("ingest " + base, dir.path).code == 0);
    CHECK(slurp(out / "windows.bin") == cache_bytes);

    auto goal = run_cli("train " + base + " --target goal", dir.path);
    REQUIRE_MESSAGE(goal.code == 0, goal.err);
    CHECK(fs::exists(out / "goal.ckpt"));
    CHECK(fs::exists(out / "goal.ckpt.json"));
    CHECK(slurp(out / "goal_train_log.csv").rfind("epoch,split,loss\n", 0) == 0);

    auto cov = run_cli("train " + base + " --target cov", dir.path);
    REQUIRE_MESSAGE(cov.code == 0, cov.err);
    CHECK(fs::exists(out / "cov.ckpt"));
    CHECK(fs::exists(out / "cov.ckpt.json"));
    const std::string cov_log = slurp(out / "cov_train_log.csv");
    CHECK(cov_log.rfind("epoch,split,nll,kl,total\n", 0) == 0);

    const std::string cov_ckpt = slurp(out / "cov.ckpt");
    REQUIRE(run_cli("train " + base + " --target cov", dir.path).code == 0);
    CHECK(slurp(out / "cov_train_log.csv") == cov_log);
    CHECK(slurp(out / "cov.ckpt") == cov_ckpt);

    auto eval = run_cli("eval " + base, dir.path);
    REQUIRE_MESSAGE(eval.code == 0, eval.err);
    for (const char* name : {"report.json", "report.csv", "ppei_curve.csv",
                             "md_curve.csv", "curves.svg"})
        CHECK(fs::exists(out / name));
    CHECK(slurp(out / "report.json").find("\"ppei1_mean\"") != std::string::npos);
    CHECK(count_lines(slurp(out / "ppei_curve.csv")) == 13);
    CHECK(count_lines(slurp(out / "md_curve.csv")) == 13);

    const std::string report_bytes = slurp(out / "report.json");
    REQUIRE(run_cli("eval " + base, dir.path).code == 0);
    CHECK(slurp(out / "report.json") == report_bytes);

    auto report = run_cli("report " + base, dir.path);
    REQUIRE_MESSAGE(report.code == 0, report.err);
    CHECK(report.out.find("ADE") != std::string::npos);
    CHECK(report.out.find("PPEI1") != std::string::npos);
    CHECK(report.out.find("MD median") != std::string::npos);
}

TEST_CASE("the jacobian baseline evaluates without any checkpoints") {
    TempDir dir("fp");
    const fs::path cfg = setup_workspace(dir);
    const std::string base = "--config " + cfg.string();
    const fs::path out2 = dir.path / "out2";

    REQUIRE(run_cli("ingest " + base + " --output-dir " + out2.string(),
                    dir.path)
                .code == 0);
    auto eval = run_cli("eval " + base + " --output-dir " + out2.string() +
                            " --predictor fp --goal-source extrapolated",
                        dir.path);
    REQUIRE_MESSAGE(eval.code == 0, eval.err);
    CHECK(fs::exists(out2 / "report.json"));
    CHECK_FALSE(fs::exists(out2 / "goal.ckpt"));
    CHECK_FALSE(fs::exists(out2 / "cov.ckpt"));
}

TEST_CASE("a missing scene file fails ingest and names the file") {
    TempDir dir("missing");
    fs::create_directories(dir.path / "data");
    write_scene(dir.path / "data" / "alpha.txt", 1);
    const fs::path cfg = dir.path / "run.json";
    std::ofstream(cfg) << R"({"data_dir": ")" << (dir.path / "data").string()
                       << R"(", "scenes": ["alpha.txt", "ghost.txt"],)"
                       << R"( "output_dir": ")" << (dir.path / "out").string()
                       << R"("})";

    auto r = run_cli("ingest --config " + cfg.string(), dir.path);
    CHECK(r.code != 0);
    CHECK(r.err.find("ghost.txt") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path / "out" / "windows.bin"));
}

TEST_CASE("commands explain missing prerequisites") {
    TempDir dir("prereq");
    const fs::path cfg = setup_workspace(dir);
    const std::string base = "--config " + cfg.string();

    auto no_cache = run_cli("train " + base + " --target goal", dir.path);
    CHECK(no_cache.code != 0);
    CHECK(no_cache.err.find("ingest") != std::string::npos);

    REQUIRE(run_cli("ingest " + base, dir.path).code == 0);

    auto cov_first = run_cli("train " + base + " --target cov", dir.path);
    CHECK(cov_first.code != 0);
    CHECK(cov_first.err.find("--target goal") != std::string::npos);

    auto eval_first = run_cli("eval " + base, dir.path);
    CHECK(eval_first.code != 0);
    CHECK(eval_first.err.find("goal") != std::string::npos);

    auto report_first = run_cli("report " + base, dir.path);
    CHECK(report_first.code != 0);
    CHECK(report_first.err.find("eval") != std::string::npos);
}

TEST_CASE("flag validation rejects out-of-vocabulary values") {
    TempDir dir("flags");
    const fs::path cfg = setup_workspace(dir);
    const std::string base = "--config " + cfg.string();

    CHECK(run_cli("eval " + base + " --predictor oracle", dir.path).code != 0);
    CHECK(run_cli("train " + base + " --target nothing", dir.path).code != 0);
    CHECK(run_cli("eval " + base + " --latent-mode maybe", dir.path).code != 0);

    auto bad_goal = run_cli("eval " + base + " --goal-source psychic", dir.path);
    CHECK(bad_goal.code != 0);
    CHECK(bad_goal.err.find("goal_source") != std::string::npos);
}

TEST_CASE("an unknown test scene is reported with the available names") {
    TempDir dir("scene");
    const fs::path cfg = setup_workspace(dir);
    const std::string base = "--config " + cfg.string();
    REQUIRE(run_cli("ingest " + base, dir.path).code == 0);

    auto r = run_cli("train " + base + " --target goal --test-scene gamma",
                     dir.path);
    CHECK(r.code != 0);
    CHECK(r.err.find("gamma") != std::string::npos);
    CHECK(r.err.find("alpha") != std::string::npos);
}
