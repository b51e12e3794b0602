#pragma once

#include <functional>
#include <string>

#include "covpred/neural/param_store.hpp"

namespace covpred::neural {

/// Builds the scalar loss node for the current parameter values. Must be
/// deterministic so the same builder can be replayed under perturbation.
using LossBuilder = std::function<Var(Tape&, ParamBinder&)>;

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst_param;
    Eigen::Index worst_row = 0;
    Eigen::Index worst_col = 0;
    long entries_checked = 0;
};

/// One taped forward/backward pass; returns d(loss)/d(param) per name.
GradMap analytic_gradients(const ParamStore& store, const LossBuilder& build,
                           double* loss_out = nullptr);

/// Central differences over every parameter scalar, compared to `analytic`
/// with rel err |fd - an| / max(1, |fd|, |an|). The unit floor keeps noise
/// on near-zero gradients from dominating the ratio.
GradCheckReport grad_check_against(ParamStore& store, const LossBuilder& build,
                                   const GradMap& analytic, double h = 1e-5,
                                   double tol = 1e-4);

GradCheckReport grad_check(ParamStore& store, const LossBuilder& build,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace covpred::neural
