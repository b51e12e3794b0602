#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "covpred/io.hpp"
#include "covpred/rng.hpp"

using covpred::Rng;
using covpred::Vec2;
namespace ds = covpred::dataset;
namespace io = covpred::io;
namespace fs = std::filesystem;

namespace {

/// Fresh per-case scratch directory under the system temp root.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("covpred_io_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ds::TrackletWindow random_window(Rng& rng, int agent_id, int neighbor_count) {
    std::array<Vec2, ds::kObsLen> obs;
    std::array<Vec2, ds::kPredLen> fut;
    const Vec2 start(rng.uniform() * 10.0, rng.uniform() * 10.0);
    const Vec2 vel(rng.normal(), rng.normal());
    for (int t = 0; t < ds::kObsLen; ++t) obs[t] = start + t * 0.4 * vel;
    for (int t = 0; t < ds::kPredLen; ++t)
        fut[t] = start + (ds::kObsLen + t) * 0.4 * vel + Vec2(rng.normal(), 0.0);

    std::vector<ds::NeighborTrack> neighbors(neighbor_count);
    for (int n = 0; n < neighbor_count; ++n) {
        neighbors[n].ped_id = 100 + n;
        for (int t = 0; t < ds::kObsLen; ++t) {
            neighbors[n].present[t] = rng.uniform() > 0.3;
            neighbors[n].pos[t] = Vec2(rng.normal(), rng.normal());
        }
        neighbors[n].present[ds::kObsLen - 1] = true;
    }
    return {agent_id, obs, fut, std::move(neighbors), 0.4};
}

std::vector<io::SceneWindows> sample_scenes() {
    Rng rng(11);
    std::vector<io::SceneWindows> scenes(2);
    scenes[0].name = "alpha";
    scenes[1].name = "beta";
    for (int i = 0; i < 5; ++i)
        scenes[0].windows.push_back(random_window(rng, i + 1, i % 3));
    for (int i = 0; i < 3; ++i)
        scenes[1].windows.push_back(random_window(rng, i + 50, 1));
    return scenes;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

covpred::metrics::CalibrationReport sample_report() {
    std::vector<covpred::metrics::EvalRecord> records;
    Rng rng(3);
    for (int i = 0; i < 40; ++i) {
        covpred::metrics::EvalRecord r;
        for (int t = 0; t < ds::kPredLen; ++t) {
            const covpred::gauss::Gaussian2D g(Vec2(0.4 * t, 0.0), 0.5, 0.7, 0.2);
            r.predicted.push_back(g);
            r.truth[t] = covpred::gauss::sample(g, rng);
        }
        records.push_back(std::move(r));
    }
    return covpred::metrics::build_report(records);
}

}  // namespace

TEST_CASE("the window cache round-trips every field exactly") {
    TempDir dir("roundtrip");
    const auto scenes = sample_scenes();
    const fs::path file = dir.path / "windows.bin";
    io::save_window_cache(file, scenes);

    const auto loaded = io::load_window_cache(file);
    REQUIRE(loaded.size() == scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        CHECK(loaded[s].name == scenes[s].name);
        REQUIRE(loaded[s].windows.size() == scenes[s].windows.size());
        for (std::size_t i = 0; i < scenes[s].windows.size(); ++i) {
            const auto& a = scenes[s].windows[i];
            const auto& b = loaded[s].windows[i];
            CHECK(b.agent_id() == a.agent_id());
            CHECK(b.dt() == a.dt());
            for (int t = 0; t < ds::kObsLen; ++t) CHECK(b.obs()[t] == a.obs()[t]);
            for (int t = 0; t < ds::kPredLen; ++t) CHECK(b.fut()[t] == a.fut()[t]);
            REQUIRE(b.neighbors().size() == a.neighbors().size());
            for (std::size_t n = 0; n < a.neighbors().size(); ++n) {
                CHECK(b.neighbors()[n].ped_id == a.neighbors()[n].ped_id);
                for (int t = 0; t < ds::kObsLen; ++t) {
                    CHECK(b.neighbors()[n].present[t] ==
                          a.neighbors()[n].present[t]);
                    CHECK(b.neighbors()[n].pos[t] == a.neighbors()[n].pos[t]);
                }
            }
        }
    }
}

TEST_CASE("repeated saves are byte-identical and leave no temp files") {
    TempDir dir("bytes");
    const auto scenes = sample_scenes();
    const fs::path file = dir.path / "windows.bin";
    io::save_window_cache(file, scenes);
    const std::string first = slurp(file);
    io::save_window_cache(file, scenes);
    CHECK(slurp(file) == first);
    CHECK_FALSE(fs::exists(dir.path / "windows.bin.tmp"));
}

TEST_CASE("cache loading rejects damaged files") {
    TempDir dir("damage");
    const fs::path missing = dir.path / "nope.bin";
    CHECK_THROWS_WITH_AS(io::load_window_cache(missing),
                         doctest::Contains("nope.bin"), std::runtime_error);

    const fs::path file = dir.path / "windows.bin";
    io::save_window_cache(file, sample_scenes());
    std::string bytes = slurp(file);

    {
        std::ofstream out(dir.path / "badmagic.bin", std::ios::binary);
        out << "NOTMINE1" << bytes.substr(8);
    }
    CHECK_THROWS_WITH_AS(io::load_window_cache(dir.path / "badmagic.bin"),
                         doctest::Contains("bad magic"), std::runtime_error);

    {
        std::ofstream out(dir.path / "short.bin", std::ios::binary);
        out << bytes.substr(0, bytes.size() / 2);
    }
    CHECK_THROWS_AS(io::load_window_cache(dir.path / "short.bin"),
                    std::runtime_error);

    {
        std::ofstream out(dir.path / "long.bin", std::ios::binary);
        out << bytes << "x";
    }
    CHECK_THROWS_WITH_AS(io::load_window_cache(dir.path / "long.bin"),
                         doctest::Contains("trailing"), std::runtime_error);
}

TEST_CASE("config loading keeps defaults for absent keys") {
    TempDir dir("cfg");
    const fs::path file = dir.path / "run.json";
    {
        std::ofstream out(file);
        out << R"({"schema_version": 1, "seed": 9, "cov_net": {"hidden": 12}})";
    }
    const auto cfg = io::load_run_config(file);
    CHECK(cfg.seed == 9);
    CHECK(cfg.cov_net.hidden == 12);
    CHECK(cfg.cov_net.latent == 16);
    CHECK(cfg.predictor == "covnet");
    CHECK(cfg.goal_source == "predicted");
    CHECK(cfg.frame_stride == 10);
    CHECK(cfg.sfm.v_desired == 1.34);
    CHECK(cfg.goal_train.seed == 9);
    CHECK(cfg.cov_train.seed == 9);
}

TEST_CASE("config loading rejects bad values") {
    TempDir dir("cfgbad");
    auto write_and_load = [&](const std::string& body) {
        const fs::path file = dir.path / "run.json";
        std::ofstream(file) << body;
        return io::load_run_config(file);
    };
    CHECK_THROWS_WITH_AS(write_and_load(R"({"schema_version": 2})"),
                         doctest::Contains("schema_version"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(write_and_load(R"({"predictor": "oracle"})"),
                         doctest::Contains("predictor"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(write_and_load(R"({"goal_source": "psychic"})"),
                         doctest::Contains("goal_source"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        write_and_load(R"({"cov_train": {"kl_target": "nowhere"}})"),
        doctest::Contains("kl_target"), std::invalid_argument);
    CHECK_THROWS_AS(write_and_load("{ not json"), std::runtime_error);
    CHECK_THROWS_WITH_AS(write_and_load(R"({"data_dir": "/no/such/dir"})"),
                         doctest::Contains("data_dir"), std::runtime_error);
    CHECK_THROWS_AS(io::load_run_config(dir.path / "absent.json"),
                    std::runtime_error);
}

TEST_CASE("config serialization round-trips") {
    TempDir dir("cfgrt");
    io::RunConfig cfg;
    cfg.data_dir = dir.path.string();
    cfg.scenes = {"a.txt", "b.txt"};
    cfg.test_scene = "b";
    cfg.predictor = "fp";
    cfg.goal_source = "extrapolated";
    cfg.latent_mode = "sample";
    cfg.frame_stride = 6;
    cfg.seed = 42;
    cfg.cov_train.kl_target = covpred::train::KlTarget::kPrior;
    cfg.cov_train.alpha = 2.5;
    cfg.goal_net.embed_size = 24;

    const fs::path file = dir.path / "run.json";
    io::write_text_atomic(file, io::run_config_json(cfg));
    const auto back = io::load_run_config(file);
    CHECK(back.data_dir == cfg.data_dir);
    CHECK(back.scenes == cfg.scenes);
    CHECK(back.test_scene == cfg.test_scene);
    CHECK(back.predictor == cfg.predictor);
    CHECK(back.goal_source == cfg.goal_source);
    CHECK(back.latent_mode == cfg.latent_mode);
    CHECK(back.frame_stride == cfg.frame_stride);
    CHECK(back.seed == cfg.seed);
    CHECK(back.cov_train.kl_target == cfg.cov_train.kl_target);
    CHECK(back.cov_train.alpha == cfg.cov_train.alpha);
    CHECK(back.goal_net.embed_size == cfg.goal_net.embed_size);
}

TEST_CASE("atomic text writes replace existing content") {
    TempDir dir("atomic");
    const fs::path file = dir.path / "note.txt";
    io::write_text_atomic(file, "first\n");
    CHECK(slurp(file) == "first\n");
    io::write_text_atomic(file, "second\n");
    CHECK(slurp(file) == "second\n");
    CHECK_FALSE(fs::exists(dir.path / "note.txt.tmp"));
}

TEST_CASE("training logs render as csv") {
    covpred::goalnet::GoalTrainResult goal;
    goal.train_loss = {2.0, 1.5};
    goal.val_loss = {2.2, 1.8};
    const std::string gcsv = io::goal_log_csv(goal);
    CHECK(gcsv.rfind("epoch,split,loss\n", 0) == 0);
    CHECK(gcsv.find("1,train,2\n") != std::string::npos);
    CHECK(gcsv.find("2,val,1.8\n") != std::string::npos);

    std::vector<covpred::train::TrainLogRow> rows{{1, "train", 1.25, 0.5, 1.75},
                                                  {1, "val", 1.5, 0.25, 1.75}};
    const std::string ccsv = io::cov_log_csv(rows);
    CHECK(ccsv.rfind("epoch,split,nll,kl,total\n", 0) == 0);
    CHECK(ccsv.find("1,train,1.25,0.5,1.75\n") != std::string::npos);
    CHECK(ccsv.find("1,val,1.5,0.25,1.75\n") != std::string::npos);
}

TEST_CASE("the ingest summary counts windows and neighbors") {
    const auto scenes = sample_scenes();
    const std::string summary = io::ingest_summary(scenes);
    CHECK(summary.find("scenes 2") != std::string::npos);
    CHECK(summary.find("windows 8") != std::string::npos);
    CHECK(summary.find("alpha 5") != std::string::npos);
    CHECK(summary.find("beta 3") != std::string::npos);
    CHECK(summary.find("neighbor count histogram") != std::string::npos);
}

TEST_CASE("curve files carry one row per horizon step") {
    const auto report = sample_report();
    const std::string ppei = io::ppei_curve_csv(report);
    const std::string md = io::md_curve_csv(report);
    auto lines = [](const std::string& s) {
        std::size_t n = 0;
        for (char c : s) n += c == '\n';
        return n;
    };
    CHECK(lines(ppei) == 13);
    CHECK(lines(md) == 13);
    CHECK(ppei.rfind("t,ppei1,ppei3\n", 0) == 0);
    CHECK(md.rfind("t,md_p25,md_p50,md_p75\n", 0) == 0);
    CHECK(ppei == io::ppei_curve_csv(report));
}

TEST_CASE("the curves figure is deterministic svg") {
    const auto report = sample_report();
    const std::string svg = io::render_curves_svg(report);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("Mahalanobis") != std::string::npos);
    CHECK(svg == io::render_curves_svg(report));
}
