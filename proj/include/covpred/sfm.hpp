#pragma once

#include <Eigen/Dense>
#include <vector>

#include "covpred/gauss.hpp"

namespace covpred::sfm {

/// Hard cap on pedestrian speed (m/s).
inline constexpr double kMaxSpeed = 2.5;
/// Combined personal radius used in the repulsion term (m).
inline constexpr double kBodyRadius = 0.4;
/// Below this distance to the goal the desired velocity is zero.
inline constexpr double kGoalEps = 0.05;

/// Instantaneous kinematic state of one pedestrian.
struct AgentState {
    Vec2 pos{0.0, 0.0};
    Vec2 vel{0.0, 0.0};
};

/// Physical parameters of the social-force transition.
struct SfmParams {
    double tau = 0.5;          ///< relaxation time (s)
    double v_desired = 1.34;   ///< desired walking speed (m/s)
    double repulsion_a = 2.1;  ///< repulsion strength (m/s^2)
    double repulsion_b = 0.3;  ///< repulsion range (m)
    double lambda_aniso = 0.4; ///< anisotropy weight in [0, 1]
    double dt = 0.4;           ///< integration step (s)

    void validate() const;
};

/// One agent in a joint rollout: state plus its own goal and desired speed.
struct RolloutAgent {
    AgentState state;
    Vec2 goal{0.0, 0.0};
    double v_desired = 1.34;
};

/// Sum of the goal-relaxation force and anisotropic pairwise repulsions.
Vec2 social_force(const AgentState& s, const std::vector<AgentState>& neighbors,
                  const Vec2& goal, const SfmParams& p);

/// Semi-implicit Euler: vel' = clip(vel + F*dt), pos' = pos + vel'*dt.
AgentState step(const AgentState& s, const std::vector<AgentState>& neighbors,
                const Vec2& goal, const SfmParams& p);

/// Rolls the agent and all neighbors forward jointly for `horizon` steps,
/// every agent advancing from the same previous-step snapshot toward its own
/// goal. Returns the agent's predicted positions.
std::vector<Vec2> rollout(const AgentState& s,
                          const std::vector<RolloutAgent>& neighbors,
                          const Vec2& goal, int horizon, const SfmParams& p);

/// Central-finite-difference Jacobian of `step` with respect to the agent's
/// packed state (pos.x, pos.y, vel.x, vel.y); neighbors held fixed.
Eigen::Matrix4d jacobian(const AgentState& s,
                         const std::vector<AgentState>& neighbors,
                         const Vec2& goal, const SfmParams& p, double h = 1e-5);

inline Eigen::Vector4d pack(const AgentState& s) {
    return Eigen::Vector4d(s.pos.x(), s.pos.y(), s.vel.x(), s.vel.y());
}

inline AgentState unpack(const Eigen::Vector4d& x) {
    return AgentState{Vec2(x[0], x[1]), Vec2(x[2], x[3])};
}

}  // namespace covpred::sfm
