#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "covpred/gauss.hpp"
#include "covpred/sfm.hpp"

namespace covpred::covprop {

/// Gaussian belief over a packed (pos, vel) state.
struct StateGaussian {
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();

    StateGaussian() = default;
    StateGaussian(const Eigen::Vector4d& mu, const Eigen::Matrix4d& sigma);
};

/// Default belief seed: isotropic position noise (0.05 m) and velocity
/// noise (0.1 m/s), uncorrelated.
StateGaussian default_initial(const sfm::AgentState& s);

using StateTransition =
    std::function<Eigen::Vector4d(const Eigen::Vector4d&)>;

/// Central-difference Jacobian of an arbitrary state transition.
Eigen::Matrix4d numeric_jacobian(const StateTransition& transition,
                                 const Eigen::Vector4d& x, double h = 1e-5);

/// First-order propagation: mean' = T(mean), cov' = G cov G^T (symmetrized),
/// with G the finite-difference Jacobian of `transition` at the mean.
StateGaussian propagate_step(const StateGaussian& sg,
                             const StateTransition& transition,
                             double h = 1e-5);

/// propagate_step through one social-force step.
StateGaussian propagate_step(const StateGaussian& sg,
                             const std::vector<sfm::AgentState>& neighbors,
                             const Vec2& goal, const sfm::SfmParams& p);

/// Iterates propagate_step over the horizon, rolling neighbors forward
/// jointly, and extracts the position block of each belief into a
/// Gaussian2D (sigma floor applied).
std::vector<gauss::Gaussian2D> rollout_with_covariance(
    const StateGaussian& initial,
    const std::vector<sfm::RolloutAgent>& neighbors, const Vec2& goal,
    int horizon, const sfm::SfmParams& p);

/// Position block of a belief as a floored Gaussian2D. Inflates the diagonal
/// by 1e-6 and warns on a non-PSD block.
gauss::Gaussian2D position_marginal(const StateGaussian& sg);

}  // namespace covpred::covprop
