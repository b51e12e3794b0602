#include "covpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace covpred::metrics {

namespace {

void validate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw std::invalid_argument("metrics: empty records");
    for (const auto& r : records)
        if (r.predicted.size() != static_cast<std::size_t>(dataset::kPredLen))
            throw std::invalid_argument("metrics: prediction horizon mismatch");
}

/// Linear interpolation between order statistics (the common "type 7" rule).
double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

/// Mahalanobis distances laid out as distances[t][record].
std::vector<std::vector<double>> distance_table(
    const std::vector<EvalRecord>& records) {
    std::vector<std::vector<double>> out(dataset::kPredLen);
    for (auto& row : out) row.reserve(records.size());
    for (const auto& r : records)
        for (int t = 0; t < dataset::kPredLen; ++t)
            out[t].push_back(gauss::mahalanobis(r.predicted[t], r.truth[t]));
    return out;
}

void mean_std(const std::vector<double>& v, double& mean, double& std_dev) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    std_dev = std::sqrt(ss / static_cast<double>(v.size()));
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

PerStep ade(const std::vector<EvalRecord>& records) {
    validate(records);
    PerStep out;
    out.per_step.assign(dataset::kPredLen, 0.0);
    for (const auto& r : records)
        for (int t = 0; t < dataset::kPredLen; ++t)
            out.per_step[t] += (r.truth[t] - r.predicted[t].mu).norm();
    for (double& x : out.per_step) x /= static_cast<double>(records.size());
    for (double x : out.per_step) out.mean += x;
    out.mean /= static_cast<double>(dataset::kPredLen);
    return out;
}

double fde(const std::vector<EvalRecord>& records) {
    return ade(records).per_step.back();
}

std::vector<double> ppei(const std::vector<EvalRecord>& records, double alpha) {
    validate(records);
    if (!(alpha > 0.0)) throw std::invalid_argument("metrics: alpha must be positive");
    std::vector<double> out(dataset::kPredLen, 0.0);
    for (const auto& r : records)
        for (int t = 0; t < dataset::kPredLen; ++t)
            if (gauss::mahalanobis(r.predicted[t], r.truth[t]) < alpha)
                out[t] += 1.0;
    for (double& x : out) x /= static_cast<double>(records.size());
    return out;
}

MdStats md_stats(const std::vector<EvalRecord>& records) {
    validate(records);
    const auto table = distance_table(records);
    MdStats out;
    std::vector<double> pooled;
    pooled.reserve(records.size() * dataset::kPredLen);
    for (const auto& row : table) {
        out.p25.push_back(percentile(row, 0.25));
        out.p50.push_back(percentile(row, 0.50));
        out.p75.push_back(percentile(row, 0.75));
        pooled.insert(pooled.end(), row.begin(), row.end());
    }
    out.pooled_median = percentile(pooled, 0.50);
    return out;
}

CalibrationReport build_report(const std::vector<EvalRecord>& records) {
    validate(records);
    CalibrationReport report;
    report.ade_t = ade(records).per_step;
    report.ppei1_t = ppei(records, 1.0);
    report.ppei3_t = ppei(records, 3.0);
    report.md = md_stats(records);

    double mean = 0.0;
    for (double x : report.ade_t) mean += x;
    report.mean_ade = mean / static_cast<double>(report.ade_t.size());
    report.final_de = report.ade_t.back();
    mean_std(report.ppei1_t, report.ppei1_mean, report.ppei1_std);
    mean_std(report.ppei3_t, report.ppei3_mean, report.ppei3_std);
    report.md_median = report.md.pooled_median;

    report.ppei1_delta = report.ppei1_mean - kPpei1Ref;
    report.ppei3_delta = report.ppei3_mean - kPpei3Ref;
    report.md_median_delta = report.md_median - kMdMedianRef;
    return report;
}

std::string to_json(const CalibrationReport& report) {
    nlohmann::json j;
    j["ade_per_step"] = report.ade_t;
    j["ppei1_per_step"] = report.ppei1_t;
    j["ppei3_per_step"] = report.ppei3_t;
    j["md_p25_per_step"] = report.md.p25;
    j["md_p50_per_step"] = report.md.p50;
    j["md_p75_per_step"] = report.md.p75;
    j["mean_ade"] = report.mean_ade;
    j["fde"] = report.final_de;
    j["ppei1_mean"] = report.ppei1_mean;
    j["ppei1_std"] = report.ppei1_std;
    j["ppei3_mean"] = report.ppei3_mean;
    j["ppei3_std"] = report.ppei3_std;
    j["md_median"] = report.md_median;
    j["references"] = {{"ppei1", kPpei1Ref},
                       {"ppei3", kPpei3Ref},
                       {"md_median", kMdMedianRef}};
    j["deltas"] = {{"ppei1", report.ppei1_delta},
                   {"ppei3", report.ppei3_delta},
                   {"md_median", report.md_median_delta}};
    return j.dump(2) + "\n";
}

std::string to_csv(const CalibrationReport& report) {
    std::string out = "t,ade,ppei1,ppei3,md_p25,md_p50,md_p75\n";
    for (int t = 0; t < dataset::kPredLen; ++t) {
        out += std::to_string(t + 1);
        for (const double x : {report.ade_t[t], report.ppei1_t[t], report.ppei3_t[t],
                               report.md.p25[t], report.md.p50[t], report.md.p75[t]}) {
            out += ',';
            out += format_double(x);
        }
        out += '\n';
    }
    return out;
}

}  // namespace covpred::metrics
