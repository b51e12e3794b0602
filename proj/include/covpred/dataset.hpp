#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "covpred/gauss.hpp"

namespace covpred::dataset {

/// Observed steps per window (3.2 s at 0.4 s per step).
inline constexpr int kObsLen = 8;
/// Predicted steps per window (4.8 s at 0.4 s per step).
inline constexpr int kPredLen = 12;
/// Time between consecutive annotated steps.
inline constexpr double kDefaultDt = 0.4;
/// Only pedestrians annotated within this radius of the agent at the last
/// observed frame become neighbors.
inline constexpr double kNeighborRadius = 10.0;

/// One row of an annotation file: `frame ped_id x y` in world meters.
struct RawAnnotation {
    long frame = 0;
    int ped_id = 0;
    Vec2 pos{0.0, 0.0};
};

/// Per-neighbor observed track, aligned with the agent's 8 observed steps.
/// `present[t]` marks steps where the neighbor is annotated; positions at
/// absent steps are meaningless.
struct NeighborTrack {
    int ped_id = 0;
    std::array<Vec2, kObsLen> pos{};
    std::array<bool, kObsLen> present{};
};

/// One training/eval sample: 8 observed + 12 future positions plus the
/// neighbors' observed tracks.
class TrackletWindow {
public:
    TrackletWindow(int agent_id, std::array<Vec2, kObsLen> obs,
                   std::array<Vec2, kPredLen> fut,
                   std::vector<NeighborTrack> neighbors, double dt);

    int agent_id() const { return agent_id_; }
    const std::array<Vec2, kObsLen>& obs() const { return obs_; }
    const std::array<Vec2, kPredLen>& fut() const { return fut_; }
    const std::vector<NeighborTrack>& neighbors() const { return neighbors_; }
    double dt() const { return dt_; }

    const Vec2& last_obs() const { return obs_.back(); }

private:
    int agent_id_;
    std::array<Vec2, kObsLen> obs_;
    std::array<Vec2, kPredLen> fut_;
    std::vector<NeighborTrack> neighbors_;
    double dt_;
};

/// First and second discrete derivatives of the observed track.
struct Kinematics {
    std::array<Vec2, kObsLen> vel{};
    std::array<Vec2, kObsLen> acc{};
};

/// Train/test assignment for one leave-one-out fold.
struct SplitPlan {
    std::vector<std::string> train_scenes;
    std::string test_scene;
};

/// A named scene: file stem plus its parsed annotations.
struct Scene {
    std::string name;
    std::vector<RawAnnotation> annotations;
};

/// Parses whitespace-separated `frame ped_id x y` rows. Lines starting with
/// `#` and blank lines are ignored. Results are sorted by (ped_id, frame).
/// Throws std::runtime_error naming the offending line on malformed input,
/// and on duplicate (frame, ped_id) pairs.
std::vector<RawAnnotation> parse_annotation_file(
    const std::filesystem::path& path);

/// Slides a 20-step window over every gap-free run of each pedestrian.
/// `frame_stride` is the raw-frame gap between consecutive time steps.
/// Neighbors are the other pedestrians annotated at the window's last
/// observed frame within kNeighborRadius of the agent there.
std::vector<TrackletWindow> build_windows(
    const std::vector<RawAnnotation>& annotations, double dt,
    long frame_stride);

/// v_t = (x_t - x_{t-1})/dt with v_1 = v_2; a_t = (v_t - v_{t-1})/dt with
/// a_1 = 0.
Kinematics derive_kinematics(const TrackletWindow& w);

/// One SplitPlan per scene, each holding out exactly that scene.
std::vector<SplitPlan> leave_one_out(const std::vector<std::string>& scenes);

/// Loads every regular file in `dir` as a scene (scene name = file stem),
/// sorted by name.
std::vector<Scene> load_scene_dir(const std::filesystem::path& dir);

}  // namespace covpred::dataset
