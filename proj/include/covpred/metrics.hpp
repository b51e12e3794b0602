#pragma once

#include <array>
#include <string>
#include <vector>

#include "covpred/covnet.hpp"
#include "covpred/dataset.hpp"

namespace covpred::metrics {

/// chi-squared(2) references a perfectly calibrated predictor converges to:
/// P(MD < 1), P(MD < 3), and the median Mahalanobis distance sqrt(2 ln 2).
inline constexpr double kPpei1Ref = 0.39346934028736658;
inline constexpr double kPpei3Ref = 0.98889100346175773;
inline constexpr double kMdMedianRef = 1.1774100225154747;

/// One scored window: the predicted per-step Gaussians and what actually
/// happened.
struct EvalRecord {
    covnet::PredictedDistribution predicted;
    std::array<Vec2, dataset::kPredLen> truth{};
};

struct PerStep {
    std::vector<double> per_step;  ///< one entry per horizon step
    double mean = 0.0;
};

/// Mean Euclidean error between truth and predicted mean, per step and
/// averaged over the horizon.
PerStep ade(const std::vector<EvalRecord>& records);

/// Mean final-step Euclidean error; equals ade().per_step.back().
double fde(const std::vector<EvalRecord>& records);

/// Per step, the fraction of records whose truth lies strictly inside the
/// alpha-sigma ellipse (Mahalanobis distance < alpha).
std::vector<double> ppei(const std::vector<EvalRecord>& records, double alpha);

/// Mahalanobis-distance quartiles per step plus the median pooled over all
/// steps. Percentiles interpolate linearly between order statistics.
struct MdStats {
    std::vector<double> p25;
    std::vector<double> p50;
    std::vector<double> p75;
    double pooled_median = 0.0;
};

MdStats md_stats(const std::vector<EvalRecord>& records);

struct CalibrationReport {
    std::vector<double> ade_t;
    std::vector<double> ppei1_t;
    std::vector<double> ppei3_t;
    MdStats md;

    double mean_ade = 0.0;
    double final_de = 0.0;
    double ppei1_mean = 0.0;
    double ppei1_std = 0.0;  ///< across horizon steps
    double ppei3_mean = 0.0;
    double ppei3_std = 0.0;
    double md_median = 0.0;

    /// Signed differences from the calibrated references above.
    double ppei1_delta = 0.0;
    double ppei3_delta = 0.0;
    double md_median_delta = 0.0;
};

/// Assembles every metric. Throws on empty input or records whose horizon
/// lengths disagree.
CalibrationReport build_report(const std::vector<EvalRecord>& records);

/// Deterministic serializations: JSON object with sorted keys, and a CSV
/// with one row per horizon step.
std::string to_json(const CalibrationReport& report);
std::string to_csv(const CalibrationReport& report);

}  // namespace covpred::metrics
