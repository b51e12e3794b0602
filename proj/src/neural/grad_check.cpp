#include "covpred/neural/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace covpred::neural {

namespace {

double eval_loss(const ParamStore& store, const LossBuilder& build) {
    Tape tape;
    ParamBinder bind(tape, store);
    Var loss = build(tape, bind);
    if (tape.value(loss).size() != 1)
        throw std::invalid_argument("loss builder must produce a scalar");
    return tape.value(loss)(0, 0);
}

}  // namespace

GradMap analytic_gradients(const ParamStore& store, const LossBuilder& build,
                           double* loss_out) {
    Tape tape;
    ParamBinder bind(tape, store);
    Var loss = build(tape, bind);
    tape.backward(loss);
    if (loss_out) *loss_out = tape.value(loss)(0, 0);
    GradMap grads;
    bind.add_grads_to(grads);
    return grads;
}

GradCheckReport grad_check_against(ParamStore& store, const LossBuilder& build,
                                   const GradMap& analytic, double h, double tol) {
    GradCheckReport report;
    store.for_each([&](const std::string& name, Mat& value) {
        const auto it = analytic.find(name);
        for (Eigen::Index c = 0; c < value.cols(); ++c) {
            for (Eigen::Index r = 0; r < value.rows(); ++r) {
                const double saved = value(r, c);
                value(r, c) = saved + h;
                const double up = eval_loss(store, build);
                value(r, c) = saved - h;
                const double down = eval_loss(store, build);
                value(r, c) = saved;

                const double fd = (up - down) / (2.0 * h);
                const double an = it == analytic.end() ? 0.0 : it->second(r, c);
                const double rel =
                    std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
                ++report.entries_checked;
                if (rel > report.max_rel_err) {
                    report.max_rel_err = rel;
                    report.worst_param = name;
                    report.worst_row = r;
                    report.worst_col = c;
                }
            }
        }
    });
    report.pass = report.max_rel_err <= tol;
    return report;
}

GradCheckReport grad_check(ParamStore& store, const LossBuilder& build,
                           double h, double tol) {
    const GradMap analytic = analytic_gradients(store, build);
    return grad_check_against(store, build, analytic, h, tol);
}

}  // namespace covpred::neural
