#include "covpred/sfm.hpp"

#include <cmath>
#include <stdexcept>

namespace covpred::sfm {

namespace {

Vec2 clip_speed(const Vec2& v, double max_speed) {
    const double speed = v.norm();
    if (speed <= max_speed) return v;
    return v * (max_speed / speed);
}

}  // namespace

void SfmParams::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("SfmParams: tau <= 0");
    if (!(repulsion_b > 0.0))
        throw std::invalid_argument("SfmParams: repulsion_b <= 0");
    if (!(dt > 0.0)) throw std::invalid_argument("SfmParams: dt <= 0");
    if (repulsion_a < 0.0)
        throw std::invalid_argument("SfmParams: repulsion_a < 0");
    if (lambda_aniso < 0.0 || lambda_aniso > 1.0)
        throw std::invalid_argument("SfmParams: lambda_aniso outside [0, 1]");
}

Vec2 social_force(const AgentState& s, const std::vector<AgentState>& neighbors,
                  const Vec2& goal, const SfmParams& p) {
    p.validate();

    // Goal attraction: relax toward v_desired * e_goal. Degenerate goal
    // (already there) means the desired velocity is zero.
    Vec2 to_goal = goal - s.pos;
    Vec2 desired_vel = Vec2::Zero();
    if (to_goal.norm() >= kGoalEps)
        desired_vel = p.v_desired * to_goal.normalized();
    Vec2 force = (desired_vel - s.vel) / p.tau;

    // Motion direction for the anisotropy weight; falls back to the goal
    // direction when the agent is at rest.
    Vec2 heading = Vec2::Zero();
    if (s.vel.norm() > 1e-9)
        heading = s.vel.normalized();
    else if (to_goal.norm() >= kGoalEps)
        heading = to_goal.normalized();

    for (const auto& nb : neighbors) {
        Vec2 away = s.pos - nb.pos;
        if (away.norm() < 1e-12) away = Vec2(1e-6, 0.0);  // coincident agents
        const double dist = away.norm();
        const Vec2 n_hat = away / dist;
        const double cos_phi = heading.dot(-n_hat);
        const double aniso =
            p.lambda_aniso + (1.0 - p.lambda_aniso) * (1.0 + cos_phi) / 2.0;
        force += p.repulsion_a * std::exp((kBodyRadius - dist) / p.repulsion_b) *
                 aniso * n_hat;
    }
    return force;
}

AgentState step(const AgentState& s, const std::vector<AgentState>& neighbors,
                const Vec2& goal, const SfmParams& p) {
    const Vec2 force = social_force(s, neighbors, goal, p);
    AgentState next;
    next.vel = clip_speed(s.vel + force * p.dt, kMaxSpeed);
    next.pos = s.pos + next.vel * p.dt;
    return next;
}

std::vector<Vec2> rollout(const AgentState& s,
                          const std::vector<RolloutAgent>& neighbors,
                          const Vec2& goal, int horizon, const SfmParams& p) {
    if (horizon < 0) throw std::invalid_argument("rollout: horizon < 0");

    std::vector<RolloutAgent> agents;
    agents.reserve(neighbors.size() + 1);
    agents.push_back(RolloutAgent{s, goal, p.v_desired});
    agents.insert(agents.end(), neighbors.begin(), neighbors.end());

    std::vector<Vec2> track;
    track.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
        const std::vector<RolloutAgent> snapshot = agents;
        for (std::size_t i = 0; i < agents.size(); ++i) {
            std::vector<AgentState> others;
            others.reserve(snapshot.size() - 1);
            for (std::size_t j = 0; j < snapshot.size(); ++j)
                if (j != i) others.push_back(snapshot[j].state);
            SfmParams pi = p;
            pi.v_desired = agents[i].v_desired;
            agents[i].state = step(snapshot[i].state, others, agents[i].goal, pi);
        }
        track.push_back(agents[0].state.pos);
    }
    return track;
}

Eigen::Matrix4d jacobian(const AgentState& s,
                         const std::vector<AgentState>& neighbors,
                         const Vec2& goal, const SfmParams& p, double h) {
    Eigen::Matrix4d j;
    const Eigen::Vector4d x0 = pack(s);
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d xp = x0, xm = x0;
        xp[k] += h;
        xm[k] -= h;
        const Eigen::Vector4d fp = pack(step(unpack(xp), neighbors, goal, p));
        const Eigen::Vector4d fm = pack(step(unpack(xm), neighbors, goal, p));
        j.col(k) = (fp - fm) / (xp[k] - xm[k]);
    }
    return j;
}

}  // namespace covpred::sfm
