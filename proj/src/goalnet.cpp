#include "covpred/goalnet.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "covpred/neural/grad_check.hpp"

namespace covpred::goalnet {

using neural::Mat;
using neural::ParamBinder;
using neural::ParamStore;
using neural::Tape;
using neural::Var;

void init_goal_model(ParamStore& store, const GoalNetConfig& cfg, Rng& rng) {
    if (cfg.embed_size != cfg.heads * cfg.head_size)
        throw std::invalid_argument("goalnet: embed_size must equal heads * head_size");
    neural::init_dense(store, "goal.embed", {4, cfg.embed_size}, rng);
    for (int h = 0; h < cfg.heads; ++h) {
        const std::string p = "goal.head" + std::to_string(h);
        neural::init_matrix(store, p + ".Wq", cfg.head_size, cfg.embed_size, rng);
        neural::init_matrix(store, p + ".Wk", cfg.head_size, cfg.embed_size, rng);
        neural::init_matrix(store, p + ".Wv", cfg.head_size, cfg.embed_size, rng);
    }
    neural::init_dense(store, "goal.proj", {cfg.embed_size, cfg.embed_size}, rng);
    neural::init_mlp(store, "goal.out",
                     {cfg.embed_size, cfg.mlp_hidden, 2, cfg.dropout}, rng);
}

Eigen::MatrixXd goal_features(const dataset::TrackletWindow& w,
                              const dataset::Kinematics& k) {
    Eigen::MatrixXd f(4, dataset::kObsLen);
    for (int t = 0; t < dataset::kObsLen; ++t) {
        f.block<2, 1>(0, t) = w.obs()[t] - w.last_obs();
        f.block<2, 1>(2, t) = k.vel[t];
    }
    return f;
}

Var goal_forward(Tape& t, ParamBinder& p, const GoalNetConfig& cfg,
                 const Eigen::MatrixXd& features, bool train, Rng& rng) {
    if (features.rows() != 4 || features.cols() != dataset::kObsLen)
        throw std::invalid_argument("goalnet: features must be 4 x obs_len");
    const Var e = neural::dense(t, p, "goal.embed", t.constant(features));

    // Scaled dot-product self-attention; columns are the 8 step tokens.
    std::vector<Var> head_outs;
    head_outs.reserve(cfg.heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_size));
    for (int h = 0; h < cfg.heads; ++h) {
        const std::string hp = "goal.head" + std::to_string(h);
        const Var q = neural::matmul(t, p(hp + ".Wq"), e);
        const Var k = neural::matmul(t, p(hp + ".Wk"), e);
        const Var v = neural::matmul(t, p(hp + ".Wv"), e);
        // scores(j, i) = k_j . q_i; each column i is one query's score row
        const Var scores =
            neural::affine(t, neural::matmul(t, neural::transpose(t, k), q), scale, 0.0);
        const Var alpha = neural::softmax_cols(t, scores);
        head_outs.push_back(neural::matmul(t, v, alpha));
    }
    const Var mixed = neural::dense(t, p, "goal.proj", neural::vstack(t, head_outs));
    const Var pooled = neural::mean_cols(t, neural::add(t, e, mixed));
    const neural::MlpSpec out_spec{cfg.embed_size, cfg.mlp_hidden, 2, cfg.dropout};
    return neural::mlp_forward(t, p, "goal.out", out_spec, pooled, train, rng);
}

Vec2 predict_goal(const ParamStore& store, const GoalNetConfig& cfg,
                  const dataset::TrackletWindow& w) {
    Tape t;
    ParamBinder bind(t, store);
    Rng unused(0);
    const auto k = dataset::derive_kinematics(w);
    const Var disp =
        goal_forward(t, bind, cfg, goal_features(w, k), false, unused);
    return w.last_obs() + Vec2(t.value(disp)(0, 0), t.value(disp)(1, 0));
}

GoalTrainResult train_goal(const std::vector<dataset::TrackletWindow>& windows,
                           const GoalNetConfig& cfg, const GoalTrainConfig& tc) {
    if (windows.empty())
        throw std::invalid_argument("train_goal: empty dataset");
    if (tc.batch_size < 1)
        throw std::invalid_argument("train_goal: batch_size < 1");

    Rng init_rng(tc.seed);
    ParamStore store;
    init_goal_model(store, cfg, init_rng);

    // Feature/target extraction up front; training touches no windows after.
    std::vector<Eigen::MatrixXd> feats;
    std::vector<Vec2> targets;
    feats.reserve(windows.size());
    for (const auto& w : windows) {
        feats.push_back(goal_features(w, dataset::derive_kinematics(w)));
        targets.push_back(w.fut().back() - w.last_obs());
    }

    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(tc.seed + 17);
    covpred::shuffle(order, split_rng);
    const std::size_t n_val =
        std::min(order.size() - 1,
                 static_cast<std::size_t>(std::llround(tc.val_fraction * order.size())));
    std::vector<std::size_t> val(order.end() - n_val, order.end());
    std::vector<std::size_t> train(order.begin(), order.end() - n_val);
    if (val.empty()) val = train;  // tiny corpora validate on the train set

    auto window_loss = [&](Tape& t, ParamBinder& bind, std::size_t i, bool is_train,
                           Rng& mask_rng) {
        const Var disp = goal_forward(t, bind, cfg, feats[i], is_train, mask_rng);
        Mat target(2, 1);
        target << targets[i].x(), targets[i].y();
        return neural::sum(t, neural::square(t, neural::sub(t, disp, t.constant(target))));
    };

    auto mean_loss = [&](const std::vector<std::size_t>& idx) {
        double total = 0.0;
        Rng unused(0);
        for (std::size_t i : idx) {
            Tape t;
            ParamBinder bind(t, store);
            total += t.value(window_loss(t, bind, i, false, unused))(0, 0);
        }
        return total / static_cast<double>(idx.size());
    };

    GoalTrainResult result;
    ParamStore best = store.snapshot_values();
    double best_val = std::numeric_limits<double>::infinity();
    int patience_left = tc.patience;
    long adam_t = 0;
    Rng epoch_rng(tc.seed + 31);
    Rng mask_rng(tc.seed + 47);
    neural::AdamConfig adam;
    adam.lr = tc.lr;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        covpred::shuffle(train, epoch_rng);
        double epoch_total = 0.0;
        for (std::size_t at = 0; at < train.size(); at += tc.batch_size) {
            const std::size_t m =
                std::min<std::size_t>(tc.batch_size, train.size() - at);
            neural::GradMap grads;
            double batch_total = 0.0;
            for (std::size_t b = 0; b < m; ++b) {
                Tape t;
                ParamBinder bind(t, store);
                const Var loss = window_loss(t, bind, train[at + b], true, mask_rng);
                batch_total += t.value(loss)(0, 0);
                t.backward(loss);
                bind.add_grads_to(grads);
            }
            if (!std::isfinite(batch_total))
                throw std::runtime_error(
                    "train_goal: non-finite loss in epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(at / tc.batch_size));
            for (auto& [name, g] : grads) g /= static_cast<double>(m);
            store.adam_step(grads, adam, ++adam_t);
            epoch_total += batch_total;
        }
        result.train_loss.push_back(epoch_total / static_cast<double>(train.size()));

        const double val_loss = mean_loss(val);
        result.val_loss.push_back(val_loss);
        if (val_loss < best_val - 1e-12) {
            best_val = val_loss;
            best = store.snapshot_values();
            result.best_epoch = epoch;
            patience_left = tc.patience;
        } else if (--patience_left <= 0) {
            break;
        }
    }
    result.params = std::move(best);
    return result;
}

}  // namespace covpred::goalnet
