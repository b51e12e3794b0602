#include "covpred/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace covpred::train {

using neural::ParamBinder;
using neural::ParamStore;
using neural::Tape;
using neural::Var;

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs < 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size < 1");
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
    if (!(alpha > 0.0)) throw std::invalid_argument("train: alpha must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("train: val_fraction must be in [0, 1)");
    if (patience < 1) throw std::invalid_argument("train: patience < 1");
}

namespace {

/// Velocity at the last observed step from the most recent present pair;
/// zero when the neighbor only just appeared.
sfm::RolloutAgent neighbor_agent(const dataset::NeighborTrack& nb, double dt,
                                 int horizon) {
    sfm::RolloutAgent agent;
    const int last = dataset::kObsLen - 1;
    agent.state.pos = nb.pos[last];
    agent.state.vel = Vec2(0.0, 0.0);
    if (nb.present[last - 1] && nb.present[last])
        agent.state.vel = (nb.pos[last] - nb.pos[last - 1]) / dt;

    double speed_sum = 0.0;
    int pairs = 0;
    for (int t = 1; t < dataset::kObsLen; ++t) {
        if (!nb.present[t - 1] || !nb.present[t]) continue;
        speed_sum += (nb.pos[t] - nb.pos[t - 1]).norm() / dt;
        ++pairs;
    }
    agent.v_desired =
        pairs == 0 ? 0.0
                   : std::clamp(speed_sum / pairs, 0.0, sfm::kMaxSpeed);
    agent.goal = agent.state.pos + horizon * dt * agent.state.vel;
    return agent;
}

}  // namespace

double desired_speed(const dataset::Kinematics& kin) {
    double speed_sum = 0.0;
    for (const auto& v : kin.vel) speed_sum += v.norm();
    return std::clamp(speed_sum / dataset::kObsLen, 0.0, sfm::kMaxSpeed);
}

std::vector<sfm::RolloutAgent> neighbor_agents(const dataset::TrackletWindow& w) {
    std::vector<sfm::RolloutAgent> others;
    others.reserve(w.neighbors().size());
    for (const auto& nb : w.neighbors()) {
        if (!nb.present[dataset::kObsLen - 1]) continue;
        others.push_back(neighbor_agent(nb, w.dt(), dataset::kPredLen));
    }
    return others;
}

WindowPlan plan_window(const dataset::TrackletWindow& w, const Vec2& goal,
                       const sfm::SfmParams& params) {
    WindowPlan plan{w, dataset::derive_kinematics(w), {}};

    sfm::SfmParams p = params;
    p.dt = w.dt();
    p.v_desired = desired_speed(plan.kinematics);

    const std::vector<sfm::RolloutAgent> others = neighbor_agents(w);

    const sfm::AgentState state{w.last_obs(), plan.kinematics.vel.back()};
    plan.sfm_means = sfm::rollout(state, others, goal, dataset::kPredLen, p);
    return plan;
}

WindowPlan plan_window(const dataset::TrackletWindow& w,
                       const ParamStore& goal_params,
                       const goalnet::GoalNetConfig& goal_cfg,
                       const sfm::SfmParams& params) {
    return plan_window(w, goalnet::predict_goal(goal_params, goal_cfg, w), params);
}

std::vector<WindowPlan> plan_windows(
    const std::vector<dataset::TrackletWindow>& windows,
    const ParamStore& goal_params, const goalnet::GoalNetConfig& goal_cfg,
    const sfm::SfmParams& params) {
    std::vector<WindowPlan> plans;
    plans.reserve(windows.size());
    for (const auto& w : windows)
        plans.push_back(plan_window(w, goal_params, goal_cfg, params));
    return plans;
}

Var elbo_loss(Tape& t, ParamBinder& p, const covnet::CovNetConfig& cfg,
              const TrainConfig& tc, const std::vector<WindowPlan>& batch,
              bool train, Rng& rng, ElboTerms* terms) {
    if (batch.empty()) throw std::invalid_argument("elbo_loss: empty batch");
    tc.validate();

    Var nll_sum;
    Var kl_sum;
    for (const auto& plan : batch) {
        const auto in =
            covnet::make_inputs(plan.window, plan.kinematics, plan.sfm_means);
        const auto enc = covnet::encode_scene(t, p, cfg, in, true);
        const auto qz = covnet::posterior(t, p, cfg, enc.e_scene, enc.e_fut,
                                          train, rng);
        Eigen::VectorXd eps = Eigen::VectorXd::Zero(cfg.latent);
        if (train)
            for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
        const Var z = covnet::reparameterize(t, qz, eps);
        const auto steps =
            covnet::decode(t, p, cfg, z, enc.e_scene, in.sfm_rel, train, rng);

        Var window_nll;
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const Vec2 residual = Vec2(in.rel_fut.col(i)) - in.sfm_rel[i];
            const Var step_nll = covnet::nll_step(t, steps[i], residual);
            window_nll =
                window_nll.valid() ? neural::add(t, window_nll, step_nll) : step_nll;
        }
        window_nll = neural::affine(
            t, window_nll, 1.0 / static_cast<double>(steps.size()), 0.0);

        Var window_kl;
        if (tc.kl_target == KlTarget::kStandard) {
            window_kl = covnet::kl_standard(t, qz);
        } else {
            const auto pz = covnet::prior(t, p, cfg, enc.e_scene, train, rng);
            window_kl = covnet::kl_between(t, qz, pz);
        }

        nll_sum = nll_sum.valid() ? neural::add(t, nll_sum, window_nll) : window_nll;
        kl_sum = kl_sum.valid() ? neural::add(t, kl_sum, window_kl) : window_kl;
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const Var nll = neural::affine(t, nll_sum, inv_n, 0.0);
    const Var kl = neural::affine(t, kl_sum, inv_n, 0.0);
    const Var total = neural::add(t, neural::affine(t, nll, tc.alpha, 0.0), kl);
    if (terms) {
        terms->nll = t.value(nll)(0, 0);
        terms->kl = t.value(kl)(0, 0);
        terms->total = t.value(total)(0, 0);
    }
    return total;
}

CovTrainResult train_covnet(const std::vector<WindowPlan>& plans,
                            const covnet::CovNetConfig& cfg,
                            const TrainConfig& tc) {
    if (plans.empty()) throw std::invalid_argument("train_covnet: empty dataset");
    tc.validate();

    Rng init_rng(tc.seed);
    ParamStore store;
    covnet::init_cov_model(store, cfg, init_rng);

    std::vector<std::size_t> order(plans.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(tc.seed + 17);
    covpred::shuffle(order, split_rng);
    const std::size_t n_val =
        std::min(order.size() - 1,
                 static_cast<std::size_t>(std::llround(tc.val_fraction * order.size())));
    std::vector<std::size_t> val(order.end() - n_val, order.end());
    std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
    if (val.empty()) val = train_idx;  // tiny corpora validate on the train set

    auto batch_of = [&](const std::vector<std::size_t>& idx, std::size_t at,
                        std::size_t m) {
        std::vector<WindowPlan> batch;
        batch.reserve(m);
        for (std::size_t b = 0; b < m; ++b) batch.push_back(plans[idx[at + b]]);
        return batch;
    };

    auto eval_terms = [&](const std::vector<std::size_t>& idx) {
        ElboTerms acc;
        Rng unused(0);
        for (std::size_t at = 0; at < idx.size(); at += tc.batch_size) {
            const std::size_t m =
                std::min<std::size_t>(tc.batch_size, idx.size() - at);
            Tape t;
            ParamBinder bind(t, store);
            ElboTerms terms;
            elbo_loss(t, bind, cfg, tc, batch_of(idx, at, m), false, unused, &terms);
            const double w = static_cast<double>(m) / static_cast<double>(idx.size());
            acc.total += w * terms.total;
            acc.nll += w * terms.nll;
            acc.kl += w * terms.kl;
        }
        return acc;
    };

    CovTrainResult result;
    ParamStore best = store.snapshot_values();
    double best_val = std::numeric_limits<double>::infinity();
    int patience_left = tc.patience;
    long adam_t = 0;
    Rng epoch_rng(tc.seed + 31);
    Rng loss_rng(tc.seed + 47);
    neural::AdamConfig adam;
    adam.lr = tc.lr;

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        covpred::shuffle(train_idx, epoch_rng);
        ElboTerms train_acc;
        for (std::size_t at = 0; at < train_idx.size(); at += tc.batch_size) {
            const std::size_t m =
                std::min<std::size_t>(tc.batch_size, train_idx.size() - at);
            Tape t;
            ParamBinder bind(t, store);
            ElboTerms terms;
            const Var loss = elbo_loss(t, bind, cfg, tc, batch_of(train_idx, at, m),
                                       true, loss_rng, &terms);
            if (!std::isfinite(terms.total))
                throw std::runtime_error(
                    "train_covnet: non-finite loss in epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(at / tc.batch_size));
            t.backward(loss);
            neural::GradMap grads;
            bind.add_grads_to(grads);
            store.adam_step(grads, adam, ++adam_t);

            const double w =
                static_cast<double>(m) / static_cast<double>(train_idx.size());
            train_acc.total += w * terms.total;
            train_acc.nll += w * terms.nll;
            train_acc.kl += w * terms.kl;
        }
        result.log.push_back(
            {epoch, "train", train_acc.nll, train_acc.kl, train_acc.total});

        const ElboTerms v = eval_terms(val);
        result.log.push_back({epoch, "val", v.nll, v.kl, v.total});
        if (v.nll < best_val - 1e-12) {
            best_val = v.nll;
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

CovTrainResult train_covnet(const std::vector<dataset::TrackletWindow>& windows,
                            const ParamStore& goal_params,
                            const goalnet::GoalNetConfig& goal_cfg,
                            const sfm::SfmParams& sfm_params,
                            const covnet::CovNetConfig& cfg,
                            const TrainConfig& tc) {
    return train_covnet(plan_windows(windows, goal_params, goal_cfg, sfm_params),
                        cfg, tc);
}

std::vector<dataset::TrackletWindow> make_synthetic(const SyntheticSpec& spec) {
    if (spec.count < 1)
        throw std::invalid_argument("make_synthetic: count < 1");
    if (!(spec.dt > 0.0))
        throw std::invalid_argument("make_synthetic: dt must be positive");
    if (spec.kind == CorpusKind::kHeteroscedastic) {
        if (spec.sigma_schedule.size() != static_cast<std::size_t>(dataset::kPredLen))
            throw std::invalid_argument(
                "make_synthetic: sigma_schedule must cover the horizon");
        for (double s : spec.sigma_schedule)
            if (!(s > 0.0))
                throw std::invalid_argument(
                    "make_synthetic: sigma_schedule entries must be positive");
    }

    Rng rng(spec.seed);
    std::vector<dataset::TrackletWindow> windows;
    windows.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double speed = rng.uniform(0.5, 1.5);
        const Vec2 start(rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0));
        const Vec2 v(speed * std::cos(heading), speed * std::sin(heading));

        std::array<Vec2, dataset::kObsLen> obs;
        for (int t = 0; t < dataset::kObsLen; ++t)
            obs[t] = start + t * spec.dt * v;
        std::array<Vec2, dataset::kPredLen> fut;
        Vec2 walk(0.0, 0.0);
        for (int t = 0; t < dataset::kPredLen; ++t) {
            fut[t] = obs.back() + (t + 1) * spec.dt * v;
            if (spec.kind == CorpusKind::kHeteroscedastic) {
                walk += spec.sigma_schedule[t] * Vec2(rng.normal(), rng.normal());
                fut[t] += walk;
            }
        }
        windows.emplace_back(i, obs, fut, std::vector<dataset::NeighborTrack>{},
                             spec.dt);
    }
    return windows;
}

std::vector<double> accumulated_variance(const std::vector<double>& sigma_schedule) {
    std::vector<double> out;
    out.reserve(sigma_schedule.size());
    double acc = 0.0;
    for (double s : sigma_schedule) {
        acc += s * s;
        out.push_back(acc);
    }
    return out;
}

double mean_true_entropy(const std::vector<double>& sigma_schedule) {
    if (sigma_schedule.empty())
        throw std::invalid_argument("mean_true_entropy: empty schedule");
    const double log_two_pi_e = std::log(2.0 * std::numbers::pi) + 1.0;
    double sum = 0.0;
    for (double v : accumulated_variance(sigma_schedule))
        sum += log_two_pi_e + std::log(v);
    return sum / static_cast<double>(sigma_schedule.size());
}

}  // namespace covpred::train
