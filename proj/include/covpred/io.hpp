#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "covpred/covnet.hpp"
#include "covpred/dataset.hpp"
#include "covpred/goalnet.hpp"
#include "covpred/metrics.hpp"
#include "covpred/sfm.hpp"
#include "covpred/train.hpp"

namespace covpred::io {

/// One scene's extracted windows, keyed by the scene name.
struct SceneWindows {
    std::string name;
    std::vector<dataset::TrackletWindow> windows;
};

/// Window cache, binary little-endian:
///   "CVPWIN01" magic, u64 scene count, then per scene
///   u32 name length, name bytes, u64 window count, then per window
///   i32 agent id, f64 dt, obs 8x2 f64, fut 12x2 f64, u64 neighbor count,
///   per neighbor i32 ped id, pos 8x2 f64, present 8x u8.
/// Writes go through a temp file and a rename; identical inputs produce
/// byte-identical files.
void save_window_cache(const std::filesystem::path& path,
                       const std::vector<SceneWindows>& scenes);

/// Throws std::runtime_error naming the file on a missing path, a magic
/// mismatch, or a truncated stream.
std::vector<SceneWindows> load_window_cache(const std::filesystem::path& path);

/// Replaces `path` with `content` through a temp file and a rename, so a
/// failed write never leaves a partial file behind.
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);

/// Everything one run needs, loadable from JSON. Absent keys keep their
/// defaults; command-line flags override loaded values.
struct RunConfig {
    int schema_version = 1;
    std::filesystem::path data_dir;
    std::vector<std::string> scenes;  ///< empty: every file in data_dir
    std::string test_scene;           ///< empty: last scene by name
    std::string predictor = "covnet";  ///< covnet | fp
    /// predicted: learned goal model; ground-truth-endpoint: last future
    /// position (diagnostic); extrapolated: constant-velocity goal, needs no
    /// trained model.
    std::string goal_source = "predicted";
    std::string latent_mode = "mean";  ///< mean | sample
    long frame_stride = 10;
    unsigned seed = 1;
    std::filesystem::path output_dir = "out";
    sfm::SfmParams sfm;
    goalnet::GoalNetConfig goal_net;
    goalnet::GoalTrainConfig goal_train;
    covnet::CovNetConfig cov_net;
    train::TrainConfig cov_train;

    /// Throws std::invalid_argument on an unsupported schema version or an
    /// out-of-vocabulary enum string.
    void validate() const;
};

/// Parses and validates; also requires data_dir to exist when set.
RunConfig load_run_config(const std::filesystem::path& path);

/// Full round-trippable JSON (pretty-printed, trailing newline).
std::string run_config_json(const RunConfig& cfg);

/// "epoch,split,loss" rows from the goal trainer.
std::string goal_log_csv(const goalnet::GoalTrainResult& result);

/// "epoch,split,nll,kl,total" rows from the uncertainty trainer.
std::string cov_log_csv(const std::vector<train::TrainLogRow>& log);

/// Ingest summary: totals, windows per scene, neighbor-count histogram.
std::string ingest_summary(const std::vector<SceneWindows>& scenes);

/// "t,ppei1,ppei3" per horizon step.
std::string ppei_curve_csv(const metrics::CalibrationReport& report);

/// "t,md_p25,md_p50,md_p75" per horizon step.
std::string md_curve_csv(const metrics::CalibrationReport& report);

/// Static two-panel figure: coverage per step against the chi-squared
/// references, and Mahalanobis quartiles per step against the ideal median.
std::string render_curves_svg(const metrics::CalibrationReport& report);

}  // namespace covpred::io
