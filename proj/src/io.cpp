#include "covpred/io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace covpred::io {

namespace {

using nlohmann::json;

constexpr char kCacheMagic[8] = {'C', 'V', 'P', 'W', 'I', 'N', '0', '1'};

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
    throw std::runtime_error("window cache " + path.string() + ": " + why);
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) fail(path, "truncated");
    return v;
}

void write_vec2(std::ostream& out, const Vec2& v) {
    write_pod<double>(out, v.x());
    write_pod<double>(out, v.y());
}

Vec2 read_vec2(std::istream& in, const std::filesystem::path& path) {
    const double x = read_pod<double>(in, path);
    const double y = read_pod<double>(in, path);
    return {x, y};
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Reads `j[key]` into `field` when present, leaving the default otherwise.
template <typename T>
void read_if(const json& j, const char* key, T& field) {
    if (auto it = j.find(key); it != j.end()) field = it->get<T>();
}

void read_if(const json& j, const char* key, std::filesystem::path& field) {
    if (auto it = j.find(key); it != j.end())
        field = it->get<std::string>();
}

std::string kl_target_name(train::KlTarget t) {
    return t == train::KlTarget::kStandard ? "standard" : "prior";
}

train::KlTarget kl_target_from(const std::string& s) {
    if (s == "standard") return train::KlTarget::kStandard;
    if (s == "prior") return train::KlTarget::kPrior;
    throw std::invalid_argument("config: kl_target must be standard or prior, got '" +
                                s + "'");
}

}  // namespace

void save_window_cache(const std::filesystem::path& path,
                       const std::vector<SceneWindows>& scenes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(tmp, "cannot open for writing");
        out.write(kCacheMagic, sizeof(kCacheMagic));
        write_pod<std::uint64_t>(out, scenes.size());
        for (const auto& scene : scenes) {
            write_pod<std::uint32_t>(out,
                                     static_cast<std::uint32_t>(scene.name.size()));
            out.write(scene.name.data(),
                      static_cast<std::streamsize>(scene.name.size()));
            write_pod<std::uint64_t>(out, scene.windows.size());
            for (const auto& w : scene.windows) {
                write_pod<std::int32_t>(out, w.agent_id());
                write_pod<double>(out, w.dt());
                for (const auto& p : w.obs()) write_vec2(out, p);
                for (const auto& p : w.fut()) write_vec2(out, p);
                write_pod<std::uint64_t>(out, w.neighbors().size());
                for (const auto& nb : w.neighbors()) {
                    write_pod<std::int32_t>(out, nb.ped_id);
                    for (const auto& p : nb.pos) write_vec2(out, p);
                    for (bool b : nb.present)
                        write_pod<std::uint8_t>(out, b ? 1 : 0);
                }
            }
        }
        if (!out) fail(tmp, "write failed");
    }
    std::filesystem::rename(tmp, path);
}

std::vector<SceneWindows> load_window_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char magic[8];
    if (!in.read(magic, sizeof(magic))) fail(path, "truncated header");
    if (std::memcmp(magic, kCacheMagic, sizeof(kCacheMagic)) != 0)
        fail(path, "bad magic");

    const auto scene_count = read_pod<std::uint64_t>(in, path);
    if (scene_count > (1u << 20)) fail(path, "implausible scene count");
    std::vector<SceneWindows> scenes;
    scenes.reserve(scene_count);
    for (std::uint64_t s = 0; s < scene_count; ++s) {
        SceneWindows scene;
        const auto name_len = read_pod<std::uint32_t>(in, path);
        if (name_len == 0 || name_len > 4096) fail(path, "implausible scene name");
        scene.name.resize(name_len);
        if (!in.read(scene.name.data(), name_len)) fail(path, "truncated name");

        const auto window_count = read_pod<std::uint64_t>(in, path);
        if (window_count > (1u << 28)) fail(path, "implausible window count");
        scene.windows.reserve(window_count);
        for (std::uint64_t i = 0; i < window_count; ++i) {
            const auto agent_id = read_pod<std::int32_t>(in, path);
            const double dt = read_pod<double>(in, path);
            std::array<Vec2, dataset::kObsLen> obs;
            for (auto& p : obs) p = read_vec2(in, path);
            std::array<Vec2, dataset::kPredLen> fut;
            for (auto& p : fut) p = read_vec2(in, path);
            const auto nb_count = read_pod<std::uint64_t>(in, path);
            if (nb_count > (1u << 20)) fail(path, "implausible neighbor count");
            std::vector<dataset::NeighborTrack> neighbors(nb_count);
            for (auto& nb : neighbors) {
                nb.ped_id = read_pod<std::int32_t>(in, path);
                for (auto& p : nb.pos) p = read_vec2(in, path);
                for (auto& b : nb.present)
                    b = read_pod<std::uint8_t>(in, path) != 0;
            }
            scene.windows.emplace_back(agent_id, obs, fut, std::move(neighbors),
                                       dt);
        }
        scenes.push_back(std::move(scene));
    }
    char extra;
    if (in.read(&extra, 1)) fail(path, "trailing bytes");
    return scenes;
}

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open " + tmp.string() +
                                     " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void RunConfig::validate() const {
    if (schema_version != 1)
        throw std::invalid_argument("config: unsupported schema_version " +
                                    std::to_string(schema_version) +
                                    " (supported: 1)");
    if (predictor != "covnet" && predictor != "fp")
        throw std::invalid_argument("config: predictor must be covnet or fp, got '" +
                                    predictor + "'");
    if (goal_source != "predicted" && goal_source != "ground-truth-endpoint" &&
        goal_source != "extrapolated")
        throw std::invalid_argument(
            "config: goal_source must be predicted, ground-truth-endpoint or "
            "extrapolated, got '" +
            goal_source + "'");
    if (latent_mode != "mean" && latent_mode != "sample")
        throw std::invalid_argument("config: latent_mode must be mean or sample, got '" +
                                    latent_mode + "'");
    if (frame_stride < 1)
        throw std::invalid_argument("config: frame_stride must be >= 1");
    sfm.validate();
    cov_train.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }

    RunConfig cfg;
    try {
        read_if(j, "schema_version", cfg.schema_version);
        read_if(j, "data_dir", cfg.data_dir);
        read_if(j, "scenes", cfg.scenes);
        read_if(j, "test_scene", cfg.test_scene);
        read_if(j, "predictor", cfg.predictor);
        read_if(j, "goal_source", cfg.goal_source);
        read_if(j, "latent_mode", cfg.latent_mode);
        read_if(j, "frame_stride", cfg.frame_stride);
        read_if(j, "seed", cfg.seed);
        read_if(j, "output_dir", cfg.output_dir);
        if (auto it = j.find("sfm"); it != j.end()) {
            read_if(*it, "tau", cfg.sfm.tau);
            read_if(*it, "v_desired", cfg.sfm.v_desired);
            read_if(*it, "repulsion_a", cfg.sfm.repulsion_a);
            read_if(*it, "repulsion_b", cfg.sfm.repulsion_b);
            read_if(*it, "lambda_aniso", cfg.sfm.lambda_aniso);
        }
        if (auto it = j.find("goal_net"); it != j.end()) {
            read_if(*it, "embed_size", cfg.goal_net.embed_size);
            read_if(*it, "heads", cfg.goal_net.heads);
            read_if(*it, "head_size", cfg.goal_net.head_size);
            read_if(*it, "mlp_hidden", cfg.goal_net.mlp_hidden);
            read_if(*it, "dropout", cfg.goal_net.dropout);
        }
        if (auto it = j.find("goal_train"); it != j.end()) {
            read_if(*it, "epochs", cfg.goal_train.epochs);
            read_if(*it, "batch_size", cfg.goal_train.batch_size);
            read_if(*it, "lr", cfg.goal_train.lr);
            read_if(*it, "val_fraction", cfg.goal_train.val_fraction);
            read_if(*it, "patience", cfg.goal_train.patience);
        }
        if (auto it = j.find("cov_net"); it != j.end()) {
            read_if(*it, "hidden", cfg.cov_net.hidden);
            read_if(*it, "latent", cfg.cov_net.latent);
            read_if(*it, "attn", cfg.cov_net.attn);
            read_if(*it, "mlp_hidden", cfg.cov_net.mlp_hidden);
            read_if(*it, "dropout", cfg.cov_net.dropout);
        }
        if (auto it = j.find("cov_train"); it != j.end()) {
            read_if(*it, "epochs", cfg.cov_train.epochs);
            read_if(*it, "batch_size", cfg.cov_train.batch_size);
            read_if(*it, "lr", cfg.cov_train.lr);
            read_if(*it, "alpha", cfg.cov_train.alpha);
            read_if(*it, "val_fraction", cfg.cov_train.val_fraction);
            read_if(*it, "patience", cfg.cov_train.patience);
            std::string target = kl_target_name(cfg.cov_train.kl_target);
            read_if(*it, "kl_target", target);
            cfg.cov_train.kl_target = kl_target_from(target);
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }

    // The trainers draw from the run seed.
    cfg.goal_train.seed = cfg.seed;
    cfg.cov_train.seed = cfg.seed;

    cfg.validate();
    if (!cfg.data_dir.empty() && !std::filesystem::exists(cfg.data_dir))
        throw std::runtime_error("config: data_dir does not exist: " +
                                 cfg.data_dir.string());
    return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["data_dir"] = cfg.data_dir.string();
    j["scenes"] = cfg.scenes;
    j["test_scene"] = cfg.test_scene;
    j["predictor"] = cfg.predictor;
    j["goal_source"] = cfg.goal_source;
    j["latent_mode"] = cfg.latent_mode;
    j["frame_stride"] = cfg.frame_stride;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir.string();
    j["sfm"] = {{"tau", cfg.sfm.tau},
                {"v_desired", cfg.sfm.v_desired},
                {"repulsion_a", cfg.sfm.repulsion_a},
                {"repulsion_b", cfg.sfm.repulsion_b},
                {"lambda_aniso", cfg.sfm.lambda_aniso}};
    j["goal_net"] = {{"embed_size", cfg.goal_net.embed_size},
                     {"heads", cfg.goal_net.heads},
                     {"head_size", cfg.goal_net.head_size},
                     {"mlp_hidden", cfg.goal_net.mlp_hidden},
                     {"dropout", cfg.goal_net.dropout}};
    j["goal_train"] = {{"epochs", cfg.goal_train.epochs},
                       {"batch_size", cfg.goal_train.batch_size},
                       {"lr", cfg.goal_train.lr},
                       {"val_fraction", cfg.goal_train.val_fraction},
                       {"patience", cfg.goal_train.patience}};
    j["cov_net"] = {{"hidden", cfg.cov_net.hidden},
                    {"latent", cfg.cov_net.latent},
                    {"attn", cfg.cov_net.attn},
                    {"mlp_hidden", cfg.cov_net.mlp_hidden},
                    {"dropout", cfg.cov_net.dropout}};
    j["cov_train"] = {{"epochs", cfg.cov_train.epochs},
                      {"batch_size", cfg.cov_train.batch_size},
                      {"lr", cfg.cov_train.lr},
                      {"alpha", cfg.cov_train.alpha},
                      {"val_fraction", cfg.cov_train.val_fraction},
                      {"patience", cfg.cov_train.patience},
                      {"kl_target", kl_target_name(cfg.cov_train.kl_target)}};
    return j.dump(2) + "\n";
}

std::string goal_log_csv(const goalnet::GoalTrainResult& result) {
    std::string out = "epoch,split,loss\n";
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        out += std::to_string(e + 1) + ",train," + fmt(result.train_loss[e]) + "\n";
        if (e < result.val_loss.size())
            out += std::to_string(e + 1) + ",val," + fmt(result.val_loss[e]) + "\n";
    }
    return out;
}

std::string cov_log_csv(const std::vector<train::TrainLogRow>& log) {
    std::string out = "epoch,split,nll,kl,total\n";
    for (const auto& row : log)
        out += std::to_string(row.epoch) + "," + row.split + "," + fmt(row.nll) +
               "," + fmt(row.kl) + "," + fmt(row.total) + "\n";
    return out;
}

std::string ingest_summary(const std::vector<SceneWindows>& scenes) {
    std::size_t total = 0;
    std::map<std::size_t, std::size_t> neighbor_hist;
    std::ostringstream out;
    out << "scenes " << scenes.size() << "\n";
    for (const auto& scene : scenes) {
        total += scene.windows.size();
        for (const auto& w : scene.windows) ++neighbor_hist[w.neighbors().size()];
    }
    out << "windows " << total << "\n\n";
    out << "windows per scene\n";
    for (const auto& scene : scenes)
        out << "  " << scene.name << " " << scene.windows.size() << "\n";
    out << "\nneighbor count histogram\n";
    for (const auto& [count, windows] : neighbor_hist)
        out << "  " << count << " " << windows << "\n";
    return out.str();
}

std::string ppei_curve_csv(const metrics::CalibrationReport& report) {
    std::string out = "t,ppei1,ppei3\n";
    for (int t = 0; t < dataset::kPredLen; ++t)
        out += std::to_string(t + 1) + "," + fmt(report.ppei1_t[t]) + "," +
               fmt(report.ppei3_t[t]) + "\n";
    return out;
}

std::string md_curve_csv(const metrics::CalibrationReport& report) {
    std::string out = "t,md_p25,md_p50,md_p75\n";
    for (int t = 0; t < dataset::kPredLen; ++t)
        out += std::to_string(t + 1) + "," + fmt(report.md.p25[t]) + "," +
               fmt(report.md.p50[t]) + "," + fmt(report.md.p75[t]) + "\n";
    return out;
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

/// Maps step index and value into one panel's pixel box.
struct PanelScale {
    double x0, y0, w, h;  ///< pixel box, y0 is the top
    double y_max;         ///< data value at the top edge

    double px(int t) const {
        return x0 + w * (t - 1) / (dataset::kPredLen - 1);
    }
    double py(double v) const { return y0 + h * (1.0 - v / y_max); }
};

void polyline(std::ostringstream& svg, const PanelScale& s,
              const std::vector<double>& ys, const std::string& stroke,
              const std::string& dash) {
    svg << "  <polyline fill=\"none\" stroke=\"" << stroke
        << "\" stroke-width=\"1.5\"";
    if (!dash.empty()) svg << " stroke-dasharray=\"" << dash << "\"";
    svg << " points=\"";
    for (int t = 1; t <= dataset::kPredLen; ++t) {
        if (t > 1) svg << " ";
        svg << fmt2(s.px(t)) << "," << fmt2(s.py(ys[t - 1]));
    }
    svg << "\"/>\n";
}

void hline(std::ostringstream& svg, const PanelScale& s, double v,
           const std::string& stroke) {
    svg << "  <line x1=\"" << fmt2(s.px(1)) << "\" y1=\"" << fmt2(s.py(v))
        << "\" x2=\"" << fmt2(s.px(dataset::kPredLen)) << "\" y2=\""
        << fmt2(s.py(v)) << "\" stroke=\"" << stroke
        << "\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";
}

void frame_and_ticks(std::ostringstream& svg, const PanelScale& s,
                     const std::string& title, const std::string& y_label,
                     int y_ticks) {
    svg << "  <rect x=\"" << fmt2(s.x0) << "\" y=\"" << fmt2(s.y0)
        << "\" width=\"" << fmt2(s.w) << "\" height=\"" << fmt2(s.h)
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "  <text x=\"" << fmt2(s.x0 + s.w / 2) << "\" y=\""
        << fmt2(s.y0 - 10) << "\" text-anchor=\"middle\" font-size=\"13\">"
        << title << "</text>\n";
    svg << "  <text x=\"" << fmt2(s.x0 + s.w / 2) << "\" y=\""
        << fmt2(s.y0 + s.h + 30) << "\" text-anchor=\"middle\" font-size=\"11\">"
        "horizon step</text>\n";
    svg << "  <text x=\"" << fmt2(s.x0 - 34) << "\" y=\""
        << fmt2(s.y0 + s.h / 2) << "\" text-anchor=\"middle\" font-size=\"11\""
        " transform=\"rotate(-90 " << fmt2(s.x0 - 34) << " "
        << fmt2(s.y0 + s.h / 2) << ")\">" << y_label << "</text>\n";
    for (int t = 1; t <= dataset::kPredLen; ++t) {
        svg << "  <text x=\"" << fmt2(s.px(t)) << "\" y=\""
            << fmt2(s.y0 + s.h + 14) << "\" text-anchor=\"middle\""
            << " font-size=\"9\">" << t << "</text>\n";
    }
    for (int i = 0; i <= y_ticks; ++i) {
        const double v = s.y_max * i / y_ticks;
        svg << "  <text x=\"" << fmt2(s.x0 - 6) << "\" y=\""
            << fmt2(s.py(v) + 3) << "\" text-anchor=\"end\" font-size=\"9\">"
            << fmt2(v) << "</text>\n";
    }
}

}  // namespace

std::string render_curves_svg(const metrics::CalibrationReport& report) {
    double md_top = metrics::kMdMedianRef;
    for (int t = 0; t < dataset::kPredLen; ++t)
        md_top = std::max(md_top, report.md.p75[t]);
    md_top *= 1.15;

    const PanelScale ppei{60.0, 40.0, 360.0, 280.0, 1.0};
    const PanelScale md{540.0, 40.0, 360.0, 280.0, md_top};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" "
           "height=\"400\" font-family=\"sans-serif\">\n";
    svg << "  <rect width=\"960\" height=\"400\" fill=\"white\"/>\n";

    frame_and_ticks(svg, ppei, "coverage inside the error ellipse", "fraction", 5);
    hline(svg, ppei, metrics::kPpei1Ref, "#888");
    hline(svg, ppei, metrics::kPpei3Ref, "#888");
    polyline(svg, ppei, report.ppei1_t, "#1f77b4", "");
    polyline(svg, ppei, report.ppei3_t, "#d62728", "");
    svg << "  <text x=\"70\" y=\"352\" font-size=\"10\" fill=\"#1f77b4\">"
           "1-sigma</text>\n";
    svg << "  <text x=\"130\" y=\"352\" font-size=\"10\" fill=\"#d62728\">"
           "3-sigma</text>\n";
    svg << "  <text x=\"190\" y=\"352\" font-size=\"10\" fill=\"#888\">"
           "dashed: ideal</text>\n";

    frame_and_ticks(svg, md, "Mahalanobis distance quartiles", "distance", 5);
    hline(svg, md, metrics::kMdMedianRef, "#888");
    polyline(svg, md, report.md.p25, "#2ca02c", "2 2");
    polyline(svg, md, report.md.p50, "#2ca02c", "");
    polyline(svg, md, report.md.p75, "#2ca02c", "2 2");
    svg << "  <text x=\"550\" y=\"352\" font-size=\"10\" fill=\"#2ca02c\">"
           "solid: median, dotted: quartiles</text>\n";
    svg << "  <text x=\"730\" y=\"352\" font-size=\"10\" fill=\"#888\">"
           "dashed: ideal median</text>\n";

    svg << "</svg>\n";
    return svg.str();
}

}  // namespace covpred::io
