#include "covpred/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace covpred::dataset {

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, long line_no,
                             const std::string& why) {
    std::ostringstream os;
    os << path.string() << ":" << line_no << ": " << why;
    throw std::runtime_error(os.str());
}

/// Numeric token that must hold an integral value ("840" or "840.0").
long parse_integral(const std::string& tok, bool& ok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        ok = false;
        return 0;
    }
    if (used != tok.size() || !std::isfinite(v) ||
        v != std::floor(v)) {
        ok = false;
        return 0;
    }
    ok = true;
    return static_cast<long>(v);
}

double parse_real(const std::string& tok, bool& ok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        ok = false;
        return 0.0;
    }
    ok = used == tok.size() && std::isfinite(v);
    return v;
}

}  // namespace

TrackletWindow::TrackletWindow(int agent_id, std::array<Vec2, kObsLen> obs,
                               std::array<Vec2, kPredLen> fut,
                               std::vector<NeighborTrack> neighbors, double dt)
    : agent_id_(agent_id),
      obs_(obs),
      fut_(fut),
      neighbors_(std::move(neighbors)),
      dt_(dt) {
    if (!(dt_ > 0.0)) throw std::invalid_argument("TrackletWindow: dt <= 0");
    for (const auto& p : obs_)
        if (!p.allFinite())
            throw std::invalid_argument("TrackletWindow: non-finite obs");
    for (const auto& p : fut_)
        if (!p.allFinite())
            throw std::invalid_argument("TrackletWindow: non-finite fut");
    for (const auto& n : neighbors_)
        if (n.ped_id == agent_id_)
            throw std::invalid_argument(
                "TrackletWindow: agent appears in its own neighbor list");
}

std::vector<RawAnnotation> parse_annotation_file(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::vector<RawAnnotation> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> toks;
        std::string tok;
        while (ls >> tok) toks.push_back(tok);
        if (toks.empty() || toks[0].front() == '#') continue;
        if (toks.size() != 4)
            parse_fail(path, line_no,
                       "expected 4 fields `frame ped_id x y`, got " +
                           std::to_string(toks.size()));
        bool ok = false;
        RawAnnotation a;
        a.frame = parse_integral(toks[0], ok);
        if (!ok) parse_fail(path, line_no, "non-integral frame `" + toks[0] + "`");
        a.ped_id = static_cast<int>(parse_integral(toks[1], ok));
        if (!ok) parse_fail(path, line_no, "non-integral ped_id `" + toks[1] + "`");
        a.pos.x() = parse_real(toks[2], ok);
        if (!ok) parse_fail(path, line_no, "non-numeric x `" + toks[2] + "`");
        a.pos.y() = parse_real(toks[3], ok);
        if (!ok) parse_fail(path, line_no, "non-numeric y `" + toks[3] + "`");
        rows.push_back(a);
    }

    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.ped_id, a.frame) < std::tie(b.ped_id, b.frame);
    });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].ped_id == rows[i - 1].ped_id &&
            rows[i].frame == rows[i - 1].frame) {
            std::ostringstream os;
            os << path.string() << ": duplicate annotation for ped "
               << rows[i].ped_id << " at frame " << rows[i].frame;
            throw std::runtime_error(os.str());
        }
    }
    return rows;
}

std::vector<TrackletWindow> build_windows(
    const std::vector<RawAnnotation>& annotations, double dt,
    long frame_stride) {
    if (!(dt > 0.0)) throw std::invalid_argument("build_windows: dt <= 0");
    if (frame_stride <= 0)
        throw std::invalid_argument("build_windows: frame_stride <= 0");
    constexpr int kWinLen = kObsLen + kPredLen;

    // (ped, frame) -> position lookup for neighbor assembly.
    std::map<int, std::unordered_map<long, Vec2>> by_ped_frame;
    std::map<int, std::vector<RawAnnotation>> by_ped;
    for (const auto& a : annotations) {
        by_ped[a.ped_id].push_back(a);
        by_ped_frame[a.ped_id][a.frame] = a.pos;
    }
    for (auto& [ped, rows] : by_ped)
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return a.frame < b.frame; });

    std::vector<TrackletWindow> windows;
    for (const auto& [ped, rows] : by_ped) {
        // Gap-free runs: consecutive annotations exactly frame_stride apart.
        std::size_t run_start = 0;
        auto emit_run = [&](std::size_t lo, std::size_t hi) {
            const long run_len = static_cast<long>(hi - lo);
            for (long s = 0; s + kWinLen <= run_len; ++s) {
                const std::size_t base = lo + static_cast<std::size_t>(s);
                std::array<Vec2, kObsLen> obs;
                std::array<Vec2, kPredLen> fut;
                for (int t = 0; t < kObsLen; ++t) obs[t] = rows[base + t].pos;
                for (int t = 0; t < kPredLen; ++t)
                    fut[t] = rows[base + kObsLen + t].pos;

                const long last_obs_frame = rows[base + kObsLen - 1].frame;
                std::vector<NeighborTrack> neighbors;
                for (const auto& [other, frames] : by_ped_frame) {
                    if (other == ped) continue;
                    const auto it = frames.find(last_obs_frame);
                    if (it == frames.end()) continue;
                    if ((it->second - obs.back()).norm() > kNeighborRadius)
                        continue;
                    NeighborTrack nb;
                    nb.ped_id = other;
                    for (int t = 0; t < kObsLen; ++t) {
                        const long f = last_obs_frame -
                                       frame_stride * (kObsLen - 1 - t);
                        const auto ft = frames.find(f);
                        nb.present[t] = ft != frames.end();
                        nb.pos[t] = nb.present[t] ? ft->second : Vec2(0.0, 0.0);
                    }
                    neighbors.push_back(std::move(nb));
                }
                windows.emplace_back(ped, obs, fut, std::move(neighbors), dt);
            }
        };
        for (std::size_t i = 1; i <= rows.size(); ++i) {
            if (i == rows.size() ||
                rows[i].frame - rows[i - 1].frame != frame_stride) {
                emit_run(run_start, i);
                run_start = i;
            }
        }
    }
    return windows;
}

Kinematics derive_kinematics(const TrackletWindow& w) {
    Kinematics k;
    const auto& obs = w.obs();
    const double dt = w.dt();
    for (int t = 1; t < kObsLen; ++t) k.vel[t] = (obs[t] - obs[t - 1]) / dt;
    k.vel[0] = k.vel[1];
    k.acc[0] = Vec2::Zero();
    for (int t = 1; t < kObsLen; ++t) k.acc[t] = (k.vel[t] - k.vel[t - 1]) / dt;
    return k;
}

std::vector<SplitPlan> leave_one_out(const std::vector<std::string>& scenes) {
    if (scenes.size() < 2)
        throw std::invalid_argument("leave_one_out: need at least 2 scenes");
    std::set<std::string> unique(scenes.begin(), scenes.end());
    if (unique.size() != scenes.size())
        throw std::invalid_argument("leave_one_out: duplicate scene names");

    std::vector<SplitPlan> plans;
    for (const auto& held_out : scenes) {
        SplitPlan plan;
        plan.test_scene = held_out;
        for (const auto& s : scenes)
            if (s != held_out) plan.train_scenes.push_back(s);
        plans.push_back(std::move(plan));
    }
    return plans;
}

std::vector<Scene> load_scene_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("scene directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<Scene> scenes;
    for (const auto& f : files)
        scenes.push_back(Scene{f.stem().string(), parse_annotation_file(f)});
    return scenes;
}

}  // namespace covpred::dataset
