#include "covpred/neural/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace covpred::neural {

Mat& ParamStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (entries_.count(name))
        throw std::invalid_argument("param '" + name + "' already exists");
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument("param '" + name + "' needs positive shape");
    Entry e;
    e.value = Mat::Zero(rows, cols);
    e.m = Mat::Zero(rows, cols);
    e.v = Mat::Zero(rows, cols);
    return entries_.emplace(name, std::move(e)).first->second.value;
}

bool ParamStore::contains(const std::string& name) const {
    return entries_.count(name) > 0;
}

Mat& ParamStore::value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::invalid_argument("unknown param '" + name + "'");
    return it->second.value;
}

const Mat& ParamStore::value(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::invalid_argument("unknown param '" + name + "'");
    return it->second.value;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
}

void ParamStore::adam_step(const GradMap& grads, const AdamConfig& cfg, long t) {
    if (t < 1) throw std::invalid_argument("adam step count must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (const auto& [name, g] : grads) {
        auto it = entries_.find(name);
        if (it == entries_.end())
            throw std::invalid_argument("gradient for unknown param '" + name + "'");
        Entry& e = it->second;
        if (g.rows() != e.value.rows() || g.cols() != e.value.cols())
            throw std::invalid_argument("gradient shape mismatch for '" + name + "'");
        e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
        e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const Mat mhat = e.m / bc1;
        const Mat vhat = e.v / bc2;
        e.value.array() -= cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
    }
}

ParamStore ParamStore::snapshot_values() const {
    ParamStore out;
    for (const auto& [name, e] : entries_) {
        out.create(name, e.value.rows(), e.value.cols()) = e.value;
    }
    return out;
}

Var ParamBinder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_->constant(store_->value(name));
    bound_.emplace(name, v);
    return v;
}

void ParamBinder::add_grads_to(GradMap& out) const {
    for (const auto& [name, var] : bound_) {
        const Mat& g = tape_->grad(var);
        auto it = out.find(name);
        if (it == out.end())
            out.emplace(name, g);
        else
            it->second += g;
    }
}

}  // namespace covpred::neural
