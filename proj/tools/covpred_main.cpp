#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "covpred/covprop.hpp"
#include "covpred/io.hpp"
#include "covpred/neural/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using covpred::Vec2;
namespace ds = covpred::dataset;

namespace {

/// Fixed file layout inside the run's output directory.
struct RunPaths {
    fs::path cache, summary;
    fs::path goal_ckpt, goal_meta, goal_log;
    fs::path cov_ckpt, cov_meta, cov_log;
    fs::path report_json, report_csv, ppei_csv, md_csv, svg;

    explicit RunPaths(const fs::path& out)
        : cache(out / "windows.bin"),
          summary(out / "ingest_summary.txt"),
          goal_ckpt(out / "goal.ckpt"),
          goal_meta(out / "goal.ckpt.json"),
          goal_log(out / "goal_train_log.csv"),
          cov_ckpt(out / "cov.ckpt"),
          cov_meta(out / "cov.ckpt.json"),
          cov_log(out / "cov_train_log.csv"),
          report_json(out / "report.json"),
          report_csv(out / "report.csv"),
          ppei_csv(out / "ppei_curve.csv"),
          md_csv(out / "md_curve.csv"),
          svg(out / "curves.svg") {}
};

/// Removes this command's outputs unless the command finished.
class OutputGuard {
public:
    ~OutputGuard() {
        if (committed_) return;
        for (const auto& p : written_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    void track(const fs::path& p) { written_.push_back(p); }
    void commit() { committed_ = true; }

private:
    std::vector<fs::path> written_;
    bool committed_ = false;
};

/// Command-line values that replace config keys when present.
struct Overrides {
    std::optional<std::string> data_dir, output_dir, test_scene;
    std::optional<std::string> predictor, goal_source, latent_mode;
    std::optional<unsigned> seed;
    std::optional<long> frame_stride;

    void apply(covpred::io::RunConfig& cfg) const {
        if (data_dir) cfg.data_dir = *data_dir;
        if (output_dir) cfg.output_dir = *output_dir;
        if (test_scene) cfg.test_scene = *test_scene;
        if (predictor) cfg.predictor = *predictor;
        if (goal_source) cfg.goal_source = *goal_source;
        if (latent_mode) cfg.latent_mode = *latent_mode;
        if (seed) {
            cfg.seed = *seed;
            cfg.goal_train.seed = *seed;
            cfg.cov_train.seed = *seed;
        }
        if (frame_stride) cfg.frame_stride = *frame_stride;
        cfg.validate();
    }
};

void save_goal_meta(const fs::path& path, const covpred::goalnet::GoalNetConfig& cfg) {
    json j;
    j["schema_version"] = 1;
    j["embed_size"] = cfg.embed_size;
    j["heads"] = cfg.heads;
    j["head_size"] = cfg.head_size;
    j["mlp_hidden"] = cfg.mlp_hidden;
    j["dropout"] = cfg.dropout;
    covpred::io::write_text_atomic(path, j.dump(2) + "\n");
}

covpred::goalnet::GoalNetConfig load_goal_meta(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("missing checkpoint metadata " + path.string() +
                                 "; run `covpred train --target goal` first");
    json j = json::parse(in);
    covpred::goalnet::GoalNetConfig cfg;
    cfg.embed_size = j.at("embed_size").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.head_size = j.at("head_size").get<int>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    return cfg;
}

void save_cov_meta(const fs::path& path, const covpred::covnet::CovNetConfig& cfg) {
    json j;
    j["schema_version"] = 1;
    j["hidden"] = cfg.hidden;
    j["latent"] = cfg.latent;
    j["attn"] = cfg.attn;
    j["mlp_hidden"] = cfg.mlp_hidden;
    j["dropout"] = cfg.dropout;
    covpred::io::write_text_atomic(path, j.dump(2) + "\n");
}

covpred::covnet::CovNetConfig load_cov_meta(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("missing checkpoint metadata " + path.string() +
                                 "; run `covpred train --target cov` first");
    json j = json::parse(in);
    covpred::covnet::CovNetConfig cfg;
    cfg.hidden = j.at("hidden").get<int>();
    cfg.latent = j.at("latent").get<int>();
    cfg.attn = j.at("attn").get<int>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
    cfg.dropout = j.at("dropout").get<double>();
    return cfg;
}

std::vector<covpred::io::SceneWindows> load_cache_or_hint(const RunPaths& paths) {
    if (!fs::exists(paths.cache))
        throw std::runtime_error("missing window cache " + paths.cache.string() +
                                 "; run `covpred ingest` first");
    return covpred::io::load_window_cache(paths.cache);
}

std::string pick_test_scene(const covpred::io::RunConfig& cfg,
                            const std::vector<covpred::io::SceneWindows>& scenes) {
    if (scenes.empty()) throw std::runtime_error("window cache holds no scenes");
    if (cfg.test_scene.empty()) return scenes.back().name;
    for (const auto& s : scenes)
        if (s.name == cfg.test_scene) return s.name;
    std::string names;
    for (const auto& s : scenes) names += (names.empty() ? "" : ", ") + s.name;
    throw std::runtime_error("test scene '" + cfg.test_scene +
                             "' is not in the cache (available: " + names + ")");
}

std::vector<ds::TrackletWindow> training_windows(
    const std::vector<covpred::io::SceneWindows>& scenes,
    const std::string& test_scene) {
    std::vector<ds::TrackletWindow> windows;
    for (const auto& s : scenes) {
        if (s.name == test_scene) continue;
        windows.insert(windows.end(), s.windows.begin(), s.windows.end());
    }
    if (windows.empty())
        throw std::runtime_error("no training windows outside test scene '" +
                                 test_scene + "'");
    return windows;
}

const std::vector<ds::TrackletWindow>& test_windows(
    const std::vector<covpred::io::SceneWindows>& scenes,
    const std::string& test_scene) {
    for (const auto& s : scenes)
        if (s.name == test_scene) {
            if (s.windows.empty())
                throw std::runtime_error("test scene '" + test_scene +
                                         "' has no windows");
            return s.windows;
        }
    throw std::runtime_error("test scene '" + test_scene + "' is not in the cache");
}

int cmd_ingest(const covpred::io::RunConfig& cfg) {
    if (cfg.data_dir.empty())
        throw std::runtime_error("ingest needs data_dir (config key or --data-dir)");

    std::vector<ds::Scene> raw;
    if (cfg.scenes.empty()) {
        raw = ds::load_scene_dir(cfg.data_dir);
    } else {
        for (const auto& name : cfg.scenes) {
            const fs::path file = cfg.data_dir / name;
            if (!fs::exists(file))
                throw std::runtime_error("scene file not found: " + file.string());
            raw.push_back({file.stem().string(), ds::parse_annotation_file(file)});
        }
    }
    if (raw.empty())
        throw std::runtime_error("no scenes found in " + cfg.data_dir.string());

    std::vector<covpred::io::SceneWindows> scenes;
    scenes.reserve(raw.size());
    for (auto& scene : raw)
        scenes.push_back({scene.name,
                          ds::build_windows(scene.annotations, ds::kDefaultDt,
                                            cfg.frame_stride)});

    fs::create_directories(cfg.output_dir);
    const RunPaths paths(cfg.output_dir);
    OutputGuard guard;
    covpred::io::save_window_cache(paths.cache, scenes);
    guard.track(paths.cache);
    const std::string summary = covpred::io::ingest_summary(scenes);
    covpred::io::write_text_atomic(paths.summary, summary);
    guard.track(paths.summary);
    guard.commit();

    std::fputs(summary.c_str(), stdout);
    return 0;
}

int cmd_train(const covpred::io::RunConfig& cfg, const std::string& target) {
    const RunPaths paths(cfg.output_dir);
    const auto scenes = load_cache_or_hint(paths);
    const std::string test_scene = pick_test_scene(cfg, scenes);
    const auto windows = training_windows(scenes, test_scene);
    OutputGuard guard;

    if (target == "goal") {
        const auto result =
            covpred::goalnet::train_goal(windows, cfg.goal_net, cfg.goal_train);
        covpred::neural::save_checkpoint(paths.goal_ckpt, result.params);
        guard.track(paths.goal_ckpt);
        save_goal_meta(paths.goal_meta, cfg.goal_net);
        guard.track(paths.goal_meta);
        covpred::io::write_text_atomic(paths.goal_log,
                                       covpred::io::goal_log_csv(result));
        guard.track(paths.goal_log);
        guard.commit();
        std::printf("goal: trained on %zu windows (test scene %s), best epoch %d\n",
                    windows.size(), test_scene.c_str(), result.best_epoch);
        std::printf("goal: wrote %s\n", paths.goal_ckpt.string().c_str());
        return 0;
    }

    // target == "cov": plan the mean rollout first, then fit the uncertainty.
    std::vector<covpred::train::WindowPlan> plans;
    plans.reserve(windows.size());
    if (cfg.goal_source == "ground-truth-endpoint") {
        for (const auto& w : windows)
            plans.push_back(covpred::train::plan_window(w, w.fut().back(), cfg.sfm));
    } else if (cfg.goal_source == "extrapolated") {
        for (const auto& w : windows) {
            const auto kin = ds::derive_kinematics(w);
            const Vec2 goal =
                w.last_obs() + ds::kPredLen * w.dt() * kin.vel.back();
            plans.push_back(covpred::train::plan_window(w, goal, cfg.sfm));
        }
    } else {
        if (!fs::exists(paths.goal_ckpt))
            throw std::runtime_error(
                "missing goal checkpoint " + paths.goal_ckpt.string() +
                "; run `covpred train --target goal` first");
        const auto goal_cfg = load_goal_meta(paths.goal_meta);
        const auto goal_store = covpred::neural::load_checkpoint(paths.goal_ckpt);
        plans = covpred::train::plan_windows(windows, goal_store, goal_cfg, cfg.sfm);
    }

    const auto result =
        covpred::train::train_covnet(plans, cfg.cov_net, cfg.cov_train);
    covpred::neural::save_checkpoint(paths.cov_ckpt, result.params);
    guard.track(paths.cov_ckpt);
    save_cov_meta(paths.cov_meta, cfg.cov_net);
    guard.track(paths.cov_meta);
    covpred::io::write_text_atomic(paths.cov_log,
                                   covpred::io::cov_log_csv(result.log));
    guard.track(paths.cov_log);
    guard.commit();
    std::printf("cov: trained on %zu windows (test scene %s), best epoch %d\n",
                plans.size(), test_scene.c_str(), result.best_epoch);
    std::printf("cov: wrote %s\n", paths.cov_ckpt.string().c_str());
    return 0;
}

/// Goal for one evaluation window under the configured source; `goal_store`
/// is null unless the source is "predicted".
Vec2 eval_goal(const covpred::io::RunConfig& cfg, const ds::TrackletWindow& w,
               const ds::Kinematics& kin,
               const covpred::neural::ParamStore* goal_store,
               const covpred::goalnet::GoalNetConfig& goal_cfg) {
    if (cfg.goal_source == "ground-truth-endpoint") return w.fut().back();
    if (cfg.goal_source == "extrapolated")
        return w.last_obs() + ds::kPredLen * w.dt() * kin.vel.back();
    return covpred::goalnet::predict_goal(*goal_store, goal_cfg, w);
}

int cmd_eval(const covpred::io::RunConfig& cfg) {
    const RunPaths paths(cfg.output_dir);
    const auto scenes = load_cache_or_hint(paths);
    const std::string test_scene = pick_test_scene(cfg, scenes);
    const auto& windows = test_windows(scenes, test_scene);

    std::optional<covpred::neural::ParamStore> goal_store;
    covpred::goalnet::GoalNetConfig goal_cfg;
    if (cfg.goal_source == "predicted") {
        if (!fs::exists(paths.goal_ckpt))
            throw std::runtime_error(
                "missing goal checkpoint " + paths.goal_ckpt.string() +
                "; run `covpred train --target goal` first");
        goal_cfg = load_goal_meta(paths.goal_meta);
        goal_store = covpred::neural::load_checkpoint(paths.goal_ckpt);
    }

    std::optional<covpred::neural::ParamStore> cov_store;
    covpred::covnet::CovNetConfig cov_cfg;
    if (cfg.predictor == "covnet") {
        if (!fs::exists(paths.cov_ckpt))
            throw std::runtime_error(
                "missing covnet checkpoint " + paths.cov_ckpt.string() +
                "; run `covpred train --target cov` first");
        cov_cfg = load_cov_meta(paths.cov_meta);
        cov_store = covpred::neural::load_checkpoint(paths.cov_ckpt);
    }
    const auto latent_mode = cfg.latent_mode == "sample"
                                 ? covpred::covnet::LatentMode::kPriorSample
                                 : covpred::covnet::LatentMode::kPriorMean;

    // Window i fills slot i, so the reduction order is fixed regardless of
    // how many workers score concurrently.
    std::vector<covpred::metrics::EvalRecord> records(windows.size());
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;

    auto score = [&](std::size_t i) {
        const auto& w = windows[i];
        const auto kin = ds::derive_kinematics(w);
        const Vec2 goal = eval_goal(cfg, w, kin,
                                    goal_store ? &*goal_store : nullptr, goal_cfg);
        covpred::metrics::EvalRecord rec;
        if (cfg.predictor == "covnet") {
            const auto plan = covpred::train::plan_window(w, goal, cfg.sfm);
            covpred::Rng rng(cfg.seed + 7919 * static_cast<unsigned>(i + 1));
            rec.predicted = covpred::covnet::predict_distribution(
                *cov_store, cov_cfg, w, plan.sfm_means, latent_mode, rng);
        } else {
            covpred::sfm::SfmParams p = cfg.sfm;
            p.dt = w.dt();
            p.v_desired = covpred::train::desired_speed(kin);
            const covpred::sfm::AgentState state{w.last_obs(), kin.vel.back()};
            rec.predicted = covpred::covprop::rollout_with_covariance(
                covpred::covprop::default_initial(state),
                covpred::train::neighbor_agents(w), goal, ds::kPredLen, p);
        }
        rec.truth = w.fut();
        records[i] = std::move(rec);
    };

    const unsigned workers = std::min<std::size_t>(
        std::max(1u, std::thread::hardware_concurrency()), windows.size());
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < records.size();
                 i = next.fetch_add(1)) {
                try {
                    score(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    const auto report = covpred::metrics::build_report(records);

    fs::create_directories(cfg.output_dir);
    OutputGuard guard;
    covpred::io::write_text_atomic(paths.report_json,
                                   covpred::metrics::to_json(report));
    guard.track(paths.report_json);
    covpred::io::write_text_atomic(paths.report_csv,
                                   covpred::metrics::to_csv(report));
    guard.track(paths.report_csv);
    covpred::io::write_text_atomic(paths.ppei_csv,
                                   covpred::io::ppei_curve_csv(report));
    guard.track(paths.ppei_csv);
    covpred::io::write_text_atomic(paths.md_csv, covpred::io::md_curve_csv(report));
    guard.track(paths.md_csv);
    covpred::io::write_text_atomic(paths.svg,
                                   covpred::io::render_curves_svg(report));
    guard.track(paths.svg);
    guard.commit();

    std::printf("eval: %s on scene %s, %zu windows\n", cfg.predictor.c_str(),
                test_scene.c_str(), windows.size());
    std::printf("  ade %.4f m, fde %.4f m\n", report.mean_ade, report.final_de);
    std::printf("  ppei1 %.4f +- %.4f (ideal %.4f, delta %+.4f)\n",
                report.ppei1_mean, report.ppei1_std, covpred::metrics::kPpei1Ref,
                report.ppei1_delta);
    std::printf("  ppei3 %.4f +- %.4f (ideal %.4f, delta %+.4f)\n",
                report.ppei3_mean, report.ppei3_std, covpred::metrics::kPpei3Ref,
                report.ppei3_delta);
    std::printf("  md median %.4f (ideal %.4f, delta %+.4f)\n", report.md_median,
                covpred::metrics::kMdMedianRef, report.md_median_delta);
    std::printf("eval: wrote %s\n", paths.report_json.string().c_str());
    return 0;
}

int cmd_report(const covpred::io::RunConfig& cfg) {
    const RunPaths paths(cfg.output_dir);
    std::ifstream in(paths.report_json);
    if (!in)
        throw std::runtime_error("missing report " + paths.report_json.string() +
                                 "; run `covpred eval` first");
    const json j = json::parse(in);

    std::printf("%-12s %10s %10s %10s\n", "metric", "value", "ideal", "delta");
    std::printf("%-12s %10.4f %10s %10s\n", "ADE (m)",
                j.at("mean_ade").get<double>(), "-", "-");
    std::printf("%-12s %10.4f %10s %10s\n", "FDE (m)",
                j.at("fde").get<double>(), "-", "-");
    const auto& refs = j.at("references");
    const auto& deltas = j.at("deltas");
    std::printf("%-12s %10.4f %10.4f %+10.4f\n", "PPEI1",
                j.at("ppei1_mean").get<double>(),
                refs.at("ppei1").get<double>(), deltas.at("ppei1").get<double>());
    std::printf("%-12s %10.4f %10.4f %+10.4f\n", "PPEI3",
                j.at("ppei3_mean").get<double>(),
                refs.at("ppei3").get<double>(), deltas.at("ppei3").get<double>());
    std::printf("%-12s %10.4f %10.4f %+10.4f\n", "MD median",
                j.at("md_median").get<double>(),
                refs.at("md_median").get<double>(),
                deltas.at("md_median").get<double>());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"social-force pedestrian prediction with learned uncertainty"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")
            ->required();
        sub->add_option("--data-dir", ov.data_dir, "override data_dir");
        sub->add_option("--output-dir", ov.output_dir, "override output_dir");
        sub->add_option("--test-scene", ov.test_scene, "override test_scene");
        sub->add_option("--predictor", ov.predictor, "covnet | fp")
            ->check(CLI::IsMember({"covnet", "fp"}));
        sub->add_option("--goal-source", ov.goal_source,
                        "predicted | ground-truth-endpoint | extrapolated");
        sub->add_option("--latent-mode", ov.latent_mode, "mean | sample")
            ->check(CLI::IsMember({"mean", "sample"}));
        sub->add_option("--seed", ov.seed, "override seed");
        sub->add_option("--frame-stride", ov.frame_stride, "override frame_stride");
    };

    CLI::App* ingest =
        app.add_subcommand("ingest", "parse scenes and build the window cache");
    add_common(ingest);
    CLI::App* train =
        app.add_subcommand("train", "train a model on the non-test scenes");
    add_common(train);
    std::string target;
    train->add_option("--target", target, "goal | cov")
        ->required()
        ->check(CLI::IsMember({"goal", "cov"}));
    CLI::App* eval =
        app.add_subcommand("eval", "score the test scene and write reports");
    add_common(eval);
    CLI::App* report =
        app.add_subcommand("report", "print the latest evaluation report");
    add_common(report);

    CLI11_PARSE(app, argc, argv);

    try {
        covpred::io::RunConfig cfg = covpred::io::load_run_config(config_path);
        ov.apply(cfg);
        if (app.got_subcommand(ingest)) return cmd_ingest(cfg);
        if (app.got_subcommand(train)) return cmd_train(cfg, target);
        if (app.got_subcommand(eval)) return cmd_eval(cfg);
        if (app.got_subcommand(report)) return cmd_report(cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
