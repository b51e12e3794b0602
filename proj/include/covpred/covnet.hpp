#pragma once

#include <optional>
#include <vector>

#include "covpred/dataset.hpp"
#include "covpred/gauss.hpp"
#include "covpred/neural/layers.hpp"

namespace covpred::covnet {

/// Uncertainty head around the model-based mean rollout: history and
/// neighborhood are encoded, a latent captures residual modes, and a GRU
/// decodes one (sigma_x, sigma_y, rho) triple per horizon step. The means
/// are pass-through and never touched by the network.
struct CovNetConfig {
    int hidden = 64;      ///< LSTM/GRU state size
    int latent = 16;
    int attn = 32;        ///< neighbor embedding and attention size
    int mlp_hidden = 64;
    double dropout = 0.1;
};

/// Creates all "cov.*" parameters.
void init_cov_model(neural::ParamStore& store, const CovNetConfig& cfg, Rng& rng);

/// Network-ready views of one window. All positions are relative (agent
/// history to its last observed position, neighbors to the agent's
/// concurrent position), which makes the decoded (sigma, rho) exactly
/// translation invariant.
struct WindowInputs {
    Eigen::MatrixXd rel_obs;  ///< 2 x 8
    Eigen::MatrixXd vel;      ///< 2 x 8
    Eigen::MatrixXd acc;      ///< 2 x 8
    /// Per neighbor 3 x 8: rows are (rel x, rel y, present flag); the
    /// relative position is zeroed at absent steps.
    std::vector<Eigen::MatrixXd> neighbor_feat;
    Eigen::MatrixXd rel_fut;  ///< 2 x 12, training targets
    std::vector<Vec2> sfm_rel;  ///< mean rollout relative to last obs
    std::vector<Vec2> sfm_abs;  ///< mean rollout as supplied
    Vec2 last_obs{0.0, 0.0};
};

WindowInputs make_inputs(const dataset::TrackletWindow& w,
                         const dataset::Kinematics& k,
                         const std::vector<Vec2>& sfm_means);

struct EncodedScene {
    neural::Var e_hist;   ///< sum of the three history LSTM final states
    neural::Var e_neigh;  ///< neighbor LSTM final state
    neural::Var e_scene;  ///< e_hist + e_neigh
    neural::Var e_fut;    ///< valid only when encoded with the future
};

EncodedScene encode_scene(neural::Tape& t, neural::ParamBinder& p,
                          const CovNetConfig& cfg, const WindowInputs& in,
                          bool with_future);

/// Diagonal Gaussian with tape-resident parameters (latent x 1 each).
struct LatentGaussian {
    neural::Var mu;
    neural::Var sigma;
};

/// mu = MLP(e), sigma = exp(log-sigma MLP clamped to [-5, 2]).
LatentGaussian prior(neural::Tape& t, neural::ParamBinder& p, const CovNetConfig& cfg,
                     neural::Var e_scene, bool train, Rng& rng);
LatentGaussian posterior(neural::Tape& t, neural::ParamBinder& p,
                         const CovNetConfig& cfg, neural::Var e_scene,
                         neural::Var e_fut, bool train, Rng& rng);

gauss::DiagGaussianN latent_values(const neural::Tape& t, const LatentGaussian& q);

/// z = mu + sigma .* eps; pathwise differentiable through mu and sigma.
neural::Var reparameterize(neural::Tape& t, const LatentGaussian& q,
                           const Eigen::VectorXd& eps);

/// KL(q || N(0, I)) and KL(q || p) for diagonal Gaussians, as 1x1 nodes.
neural::Var kl_standard(neural::Tape& t, const LatentGaussian& q);
neural::Var kl_between(neural::Tape& t, const LatentGaussian& q,
                       const LatentGaussian& p);

struct DecodedStep {
    neural::Var sigma;  ///< 2 x 1, each >= kSigmaFloor by construction
    neural::Var rho;    ///< 1 x 1, |rho| <= kRhoMax by construction
};

/// GRU decode along the horizon; step input is the previous mean (relative
/// to the last observation) plus z, so decoding is identical in training
/// and inference.
std::vector<DecodedStep> decode(neural::Tape& t, neural::ParamBinder& p,
                                const CovNetConfig& cfg, neural::Var z,
                                neural::Var e_scene,
                                const std::vector<Vec2>& sfm_rel, bool train,
                                Rng& rng);

/// Negative log density of a bi-variate Gaussian with the supplied residual
/// (truth minus mean); the mean itself never enters the tape.
neural::Var nll_step(neural::Tape& t, const DecodedStep& d, const Vec2& residual);

using PredictedDistribution = std::vector<gauss::Gaussian2D>;

enum class LatentMode { kPriorSample, kPriorMean };

/// Full inference path. Output means are bit-identical to sfm_means.
PredictedDistribution predict_distribution(const neural::ParamStore& store,
                                           const CovNetConfig& cfg,
                                           const dataset::TrackletWindow& w,
                                           const std::vector<Vec2>& sfm_means,
                                           LatentMode mode, Rng& rng);

}  // namespace covpred::covnet
