#pragma once

#include <string>
#include <vector>

#include "covpred/covnet.hpp"
#include "covpred/dataset.hpp"
#include "covpred/goalnet.hpp"
#include "covpred/sfm.hpp"

namespace covpred::train {

/// Which distribution the posterior is regularized against. kPrior trains
/// the history-conditioned prior the inference path samples from; kStandard
/// regularizes against N(0, I) and leaves the prior untouched.
enum class KlTarget { kStandard, kPrior };

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    double lr = 1e-3;
    double alpha = 1.0;  ///< NLL weight; total = alpha * nll + kl
    double val_fraction = 0.2;
    int patience = 10;
    unsigned seed = 1;
    KlTarget kl_target = KlTarget::kPrior;

    void validate() const;
};

/// One window with everything the loss consumes precomputed: kinematics and
/// the mean rollout the decoded uncertainty wraps around.
struct WindowPlan {
    dataset::TrackletWindow window;
    dataset::Kinematics kinematics;
    std::vector<Vec2> sfm_means;
};

/// Mean observed speed, clipped to the model's cap. Used as the agent's
/// desired speed in the mean rollout.
double desired_speed(const dataset::Kinematics& kin);

/// Constant-velocity stand-ins for the rollout: position and velocity from
/// the last observed frames of each neighbor, goal a horizon-length
/// extrapolation. Neighbors absent at the last observed step are dropped.
std::vector<sfm::RolloutAgent> neighbor_agents(const dataset::TrackletWindow& w);

/// Rolls the social-force mean forward toward an explicit goal. The agent's
/// desired speed is its mean observed speed (clipped to the model's cap);
/// neighbors walk toward constant-velocity extrapolations of their tracks.
/// The window's dt overrides params.dt.
WindowPlan plan_window(const dataset::TrackletWindow& w, const Vec2& goal,
                       const sfm::SfmParams& params);

/// Same, with the goal taken from the learned predictor.
WindowPlan plan_window(const dataset::TrackletWindow& w,
                       const neural::ParamStore& goal_params,
                       const goalnet::GoalNetConfig& goal_cfg,
                       const sfm::SfmParams& params);

std::vector<WindowPlan> plan_windows(
    const std::vector<dataset::TrackletWindow>& windows,
    const neural::ParamStore& goal_params,
    const goalnet::GoalNetConfig& goal_cfg, const sfm::SfmParams& params);

/// Batch loss components as plain numbers (per-window averages).
struct ElboTerms {
    double total = 0.0;
    double nll = 0.0;
    double kl = 0.0;
};

/// Builds alpha * nll + kl for the batch on the caller's tape and returns
/// the root node. Per window: mean step NLL of the decoded Gaussians at the
/// ground-truth residuals plus the configured KL; both averaged over the
/// batch. The latent is sampled through the posterior when `train` is set
/// and fixed to the posterior mean otherwise; `train` also drives dropout.
/// The mean rollout enters only as data, so no gradient reaches it.
neural::Var elbo_loss(neural::Tape& t, neural::ParamBinder& p,
                      const covnet::CovNetConfig& cfg, const TrainConfig& tc,
                      const std::vector<WindowPlan>& batch, bool train,
                      Rng& rng, ElboTerms* terms = nullptr);

struct TrainLogRow {
    int epoch = 0;
    std::string split;  ///< "train" or "val"
    double nll = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

struct CovTrainResult {
    neural::ParamStore params;  ///< best-validation snapshot
    std::vector<TrainLogRow> log;
    int best_epoch = -1;
};

/// Adam over elbo_loss with early stopping on validation NLL. Deterministic
/// for a fixed seed. Throws on an empty plan list or a non-finite loss
/// (naming the epoch and batch).
CovTrainResult train_covnet(const std::vector<WindowPlan>& plans,
                            const covnet::CovNetConfig& cfg,
                            const TrainConfig& tc);

/// Plans every window with the learned goal model, then trains.
CovTrainResult train_covnet(const std::vector<dataset::TrackletWindow>& windows,
                            const neural::ParamStore& goal_params,
                            const goalnet::GoalNetConfig& goal_cfg,
                            const sfm::SfmParams& sfm_params,
                            const covnet::CovNetConfig& cfg,
                            const TrainConfig& tc);

enum class CorpusKind { kConstantVelocity, kHeteroscedastic };

/// Straight constant-velocity walkers with noise-free observations. The
/// heteroscedastic kind adds a Gaussian random walk to the future steps:
/// independent per-step increments with std sigma_schedule[t], so the
/// marginal covariance at step t is the accumulated sum of squares.
struct SyntheticSpec {
    CorpusKind kind = CorpusKind::kConstantVelocity;
    std::vector<double> sigma_schedule;  ///< meters per step, horizon-long
    int count = 100;
    unsigned seed = 1;
    double dt = dataset::kDefaultDt;
};

std::vector<dataset::TrackletWindow> make_synthetic(const SyntheticSpec& spec);

/// Per-axis marginal variance of the random walk at each horizon step.
std::vector<double> accumulated_variance(const std::vector<double>& sigma_schedule);

/// Mean over the horizon of the differential entropy of the true future
/// distribution; the NLL of a perfectly calibrated predictor converges to
/// this value.
double mean_true_entropy(const std::vector<double>& sigma_schedule);

}  // namespace covpred::train
