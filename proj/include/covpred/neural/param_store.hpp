#pragma once

#include <map>
#include <string>

#include "covpred/neural/tape.hpp"

namespace covpred::neural {

/// Named gradient accumulator; iteration order matches ParamStore.
using GradMap = std::map<std::string, Mat>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named parameter tensors plus Adam first/second moments. std::map keeps
/// iteration order stable across runs, which keeps training deterministic.
class ParamStore {
public:
    /// Zero-initialized tensor; throws if the name is taken.
    Mat& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);

    bool contains(const std::string& name) const;
    Mat& value(const std::string& name);
    const Mat& value(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    template <typename Fn>
    void for_each(Fn&& fn) {
        for (auto& [name, e] : entries_) fn(name, e.value);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& [name, e] : entries_) fn(name, e.value);
    }

    /// One Adam update; t is the 1-based step count used for bias correction.
    /// Every gradient name must exist in the store with a matching shape.
    void adam_step(const GradMap& grads, const AdamConfig& cfg, long t);

    /// Copies values only; Adam moments reset to zero.
    ParamStore snapshot_values() const;

private:
    struct Entry {
        Mat value;
        Mat m;
        Mat v;
    };
    std::map<std::string, Entry> entries_;
};

/// Lazily places store parameters on a tape, one node per name per pass,
/// and harvests their gradients after backward().
class ParamBinder {
public:
    ParamBinder(Tape& tape, const ParamStore& store) : tape_(&tape), store_(&store) {}

    Var operator()(const std::string& name);

    /// Accumulates tape grads of every bound parameter into out.
    void add_grads_to(GradMap& out) const;

private:
    Tape* tape_;
    const ParamStore* store_;
    std::map<std::string, Var> bound_;
};

}  // namespace covpred::neural
