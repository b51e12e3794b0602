#include "covpred/covprop.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace covpred::covprop {

StateGaussian::StateGaussian(const Eigen::Vector4d& mu,
                             const Eigen::Matrix4d& sigma)
    : mean(mu), cov(sigma) {
    if (!mean.allFinite() || !cov.allFinite())
        throw std::invalid_argument("StateGaussian: non-finite");
    if (((cov - cov.transpose()).array().abs() > 1e-9).any())
        throw std::invalid_argument("StateGaussian: covariance not symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(cov);
    if (es.eigenvalues().minCoeff() < -1e-9)
        throw std::invalid_argument("StateGaussian: covariance not PSD");
}

StateGaussian default_initial(const sfm::AgentState& s) {
    Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
    cov(0, 0) = cov(1, 1) = 0.05 * 0.05;
    cov(2, 2) = cov(3, 3) = 0.1 * 0.1;
    return StateGaussian(sfm::pack(s), cov);
}

Eigen::Matrix4d numeric_jacobian(const StateTransition& transition,
                                 const Eigen::Vector4d& x, double h) {
    Eigen::Matrix4d j;
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        j.col(k) = (transition(xp) - transition(xm)) / (xp[k] - xm[k]);
    }
    return j;
}

StateGaussian propagate_step(const StateGaussian& sg,
                             const StateTransition& transition, double h) {
    const Eigen::Matrix4d g = numeric_jacobian(transition, sg.mean, h);
    const Eigen::Matrix4d pushed = g * sg.cov * g.transpose();
    StateGaussian out;
    out.mean = transition(sg.mean);
    out.cov = 0.5 * (pushed + pushed.transpose());
    return out;
}

StateGaussian propagate_step(const StateGaussian& sg,
                             const std::vector<sfm::AgentState>& neighbors,
                             const Vec2& goal, const sfm::SfmParams& p) {
    return propagate_step(
        sg,
        [&](const Eigen::Vector4d& x) {
            return sfm::pack(sfm::step(sfm::unpack(x), neighbors, goal, p));
        },
        1e-5);
}

gauss::Gaussian2D position_marginal(const StateGaussian& sg) {
    const Eigen::Matrix2d block = sg.cov.topLeftCorner<2, 2>();
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(block);
    Eigen::Matrix2d pos_cov = block;
    if (es.eigenvalues().minCoeff() < -1e-9) {
        std::cerr << "covprop: non-PSD position block, inflating diagonal\n";
        pos_cov += 1e-6 * Eigen::Matrix2d::Identity();
    }
    const double sx_raw = std::sqrt(std::max(pos_cov(0, 0), 0.0));
    const double sy_raw = std::sqrt(std::max(pos_cov(1, 1), 0.0));
    double rho = 0.0;
    if (sx_raw > 0.0 && sy_raw > 0.0)
        rho = std::clamp(pos_cov(0, 1) / (sx_raw * sy_raw), -kRhoMax, kRhoMax);
    return gauss::Gaussian2D(Vec2(sg.mean[0], sg.mean[1]),
                             std::max(sx_raw, kSigmaFloor),
                             std::max(sy_raw, kSigmaFloor), rho);
}

std::vector<gauss::Gaussian2D> rollout_with_covariance(
    const StateGaussian& initial,
    const std::vector<sfm::RolloutAgent>& neighbors, const Vec2& goal,
    int horizon, const sfm::SfmParams& p) {
    if (horizon < 1)
        throw std::invalid_argument("rollout_with_covariance: horizon < 1");

    StateGaussian belief = initial;
    std::vector<sfm::RolloutAgent> others = neighbors;

    std::vector<gauss::Gaussian2D> track;
    track.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
        std::vector<sfm::AgentState> snapshot;
        snapshot.reserve(others.size());
        for (const auto& a : others) snapshot.push_back(a.state);

        const StateGaussian next = propagate_step(belief, snapshot, goal, p);

        // Neighbors advance from the same snapshot, each seeing the agent's
        // mean state and the other neighbors.
        const sfm::AgentState agent_mean = sfm::unpack(belief.mean);
        std::vector<sfm::RolloutAgent> advanced = others;
        for (std::size_t i = 0; i < others.size(); ++i) {
            std::vector<sfm::AgentState> rest;
            rest.reserve(snapshot.size());
            rest.push_back(agent_mean);
            for (std::size_t j = 0; j < snapshot.size(); ++j)
                if (j != i) rest.push_back(snapshot[j]);
            sfm::SfmParams pi = p;
            pi.v_desired = others[i].v_desired;
            advanced[i].state =
                sfm::step(others[i].state, rest, others[i].goal, pi);
        }
        others = std::move(advanced);
        belief = next;
        track.push_back(position_marginal(belief));
    }
    return track;
}

}  // namespace covpred::covprop
