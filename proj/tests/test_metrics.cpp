#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "covpred/metrics.hpp"
#include "covpred/rng.hpp"

using covpred::Rng;
using covpred::Vec2;
namespace ds = covpred::dataset;
namespace gs = covpred::gauss;
using namespace covpred::metrics;

namespace {

EvalRecord record_with_offset(const Vec2& offset, double sx = 1.0,
                              double sy = 1.0, double rho = 0.0) {
    EvalRecord r;
    for (int t = 0; t < ds::kPredLen; ++t) {
        const Vec2 mu(0.3 * t, -0.1 * t);
        r.predicted.emplace_back(mu, sx, sy, rho);
        r.truth[t] = mu + offset;
    }
    return r;
}

gs::Gaussian2D transformed(const gs::Gaussian2D& g, const Eigen::Matrix2d& R,
                           const Vec2& shift) {
    Eigen::Matrix2d S;
    S << g.sigma_x * g.sigma_x, g.rho * g.sigma_x * g.sigma_y,
        g.rho * g.sigma_x * g.sigma_y, g.sigma_y * g.sigma_y;
    const Eigen::Matrix2d S2 = R * S * R.transpose();
    const double sx = std::sqrt(S2(0, 0));
    const double sy = std::sqrt(S2(1, 1));
    return {R * g.mu + shift, sx, sy, S2(0, 1) / (sx * sy)};
}

std::vector<EvalRecord> oracle_records(int count, unsigned seed) {
    Rng rng(seed);
    std::vector<EvalRecord> records;
    records.reserve(count);
    for (int i = 0; i < count; ++i) {
        EvalRecord r;
        for (int t = 0; t < ds::kPredLen; ++t) {
            const gs::Gaussian2D g(Vec2(0.5 * t, 1.0 - 0.2 * t),
                                   0.4 + 0.1 * (t % 4), 0.7 + 0.05 * t,
                                   0.5 * std::sin(0.7 * t));
            r.predicted.push_back(g);
            r.truth[t] = gs::sample(g, rng);
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace

TEST_CASE("exact predictions score perfectly") {
    const std::vector<EvalRecord> records(3, record_with_offset({0.0, 0.0}));
    const auto a = ade(records);
    for (double x : a.per_step) CHECK(x == 0.0);
    CHECK(a.mean == 0.0);
    CHECK(fde(records) == 0.0);
    for (double x : ppei(records, 1.0)) CHECK(x == 1.0);
    const auto md = md_stats(records);
    for (int t = 0; t < ds::kPredLen; ++t) {
        CHECK(md.p25[t] == 0.0);
        CHECK(md.p50[t] == 0.0);
        CHECK(md.p75[t] == 0.0);
    }
    CHECK(md.pooled_median == 0.0);
}

TEST_CASE("constant offsets produce the textbook errors") {
    const std::vector<EvalRecord> records{record_with_offset({3.0, 4.0})};
    const auto a = ade(records);
    for (double x : a.per_step) CHECK(x == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.mean == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(fde(records) == doctest::Approx(5.0).epsilon(1e-12));

    // Offset at the final step only: FDE sees it, earlier steps do not.
    EvalRecord final_only = record_with_offset({0.0, 0.0});
    final_only.truth.back() += Vec2(0.0, 2.0);
    const std::vector<EvalRecord> fr{final_only};
    CHECK(fde(fr) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ade(fr).per_step[0] == 0.0);
    CHECK(fde(fr) == ade(fr).per_step.back());
}

TEST_CASE("two-record case matches a direct recomputation") {
    const auto r1 = record_with_offset({0.5, -0.2});
    const auto r2 = record_with_offset({-1.0, 0.7});
    const std::vector<EvalRecord> records{r1, r2};
    const auto a = ade(records);
    for (int t = 0; t < ds::kPredLen; ++t) {
        const double expected = ((r1.truth[t] - r1.predicted[t].mu).norm() +
                                 (r2.truth[t] - r2.predicted[t].mu).norm()) /
                                2.0;
        CHECK(a.per_step[t] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("self-sampled truths reproduce the chi-squared references") {
    const auto records = oracle_records(8334, 99);  // ~1e5 pooled draws

    double p1 = 0.0, p3 = 0.0;
    for (double x : ppei(records, 1.0)) p1 += x;
    for (double x : ppei(records, 3.0)) p3 += x;
    p1 /= ds::kPredLen;
    p3 /= ds::kPredLen;
    CHECK(p1 == doctest::Approx(kPpei1Ref).epsilon(0.0).scale(0.0).epsilon(0.026));
    CHECK(std::abs(p1 - kPpei1Ref) < 0.01);
    CHECK(std::abs(p3 - kPpei3Ref) < 0.005);

    const auto md = md_stats(records);
    CHECK(std::abs(md.pooled_median - kMdMedianRef) < 0.02);
    for (int t = 0; t < ds::kPredLen; ++t) {
        CHECK(md.p25[t] <= md.p50[t]);
        CHECK(md.p50[t] <= md.p75[t]);
    }
}

TEST_CASE("sigma inflation is detected as under-confidence") {
    auto records = oracle_records(2000, 7);
    for (auto& r : records)
        for (auto& g : r.predicted)
            g = gs::Gaussian2D(g.mu, 10.0 * g.sigma_x, 10.0 * g.sigma_y, g.rho);
    double p1 = 0.0;
    for (double x : ppei(records, 1.0)) p1 += x;
    CHECK(p1 / ds::kPredLen > 0.99);
}

TEST_CASE("ppei is monotone in alpha") {
    const auto records = oracle_records(500, 3);
    const auto p1 = ppei(records, 1.0);
    const auto p3 = ppei(records, 3.0);
    for (int t = 0; t < ds::kPredLen; ++t) {
        CHECK(p3[t] >= p1[t]);
        CHECK(p1[t] >= 0.0);
        CHECK(p3[t] <= 1.0);
    }
}

TEST_CASE("rigid transforms leave calibration metrics unchanged") {
    const auto records = oracle_records(300, 17);
    const double angle = 0.83;
    Eigen::Matrix2d R;
    R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    const Vec2 shift(12.0, -7.0);

    std::vector<EvalRecord> moved;
    moved.reserve(records.size());
    for (const auto& r : records) {
        EvalRecord m;
        for (int t = 0; t < ds::kPredLen; ++t) {
            m.predicted.push_back(transformed(r.predicted[t], R, shift));
            m.truth[t] = R * r.truth[t] + shift;
        }
        moved.push_back(std::move(m));
    }

    const auto p_orig = ppei(records, 1.0);
    const auto p_moved = ppei(moved, 1.0);
    for (int t = 0; t < ds::kPredLen; ++t)
        CHECK(p_orig[t] == doctest::Approx(p_moved[t]).epsilon(1e-12));
    CHECK(md_stats(records).pooled_median ==
          doctest::Approx(md_stats(moved).pooled_median).epsilon(1e-9));
}

TEST_CASE("percentiles interpolate between order statistics") {
    std::vector<EvalRecord> records;
    for (const double d : {1.0, 2.0, 3.0}) {
        EvalRecord r = record_with_offset({0.0, 0.0});
        for (int t = 0; t < ds::kPredLen; ++t) r.truth[t] += Vec2(d, 0.0);
        records.push_back(std::move(r));
    }
    const auto md = md_stats(records);  // unit sigmas: MD = offset
    CHECK(md.p25[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(md.p50[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(md.p75[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(md.pooled_median == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("the assembled report is consistent and validated") {
    CHECK_THROWS_AS(build_report({}), std::invalid_argument);

    EvalRecord bad = record_with_offset({0.0, 0.0});
    bad.predicted.pop_back();
    CHECK_THROWS_AS(build_report({bad}), std::invalid_argument);

    const auto records = oracle_records(400, 23);
    const auto report = build_report(records);
    REQUIRE(report.ade_t.size() == static_cast<std::size_t>(ds::kPredLen));
    for (int t = 0; t < ds::kPredLen; ++t) {
        CHECK(report.ppei1_t[t] >= 0.0);
        CHECK(report.ppei1_t[t] <= 1.0);
        CHECK(report.ppei3_t[t] >= report.ppei1_t[t]);
    }
    CHECK(report.final_de == report.ade_t.back());
    CHECK(report.ppei1_delta ==
          doctest::Approx(report.ppei1_mean - kPpei1Ref).epsilon(1e-14));
    CHECK(report.md_median == report.md.pooled_median);
}

TEST_CASE("serializations are deterministic and well-formed") {
    const auto report = build_report(oracle_records(50, 31));

    const std::string json_a = to_json(report);
    const std::string json_b = to_json(report);
    CHECK(json_a == json_b);
    CHECK(json_a.find("\"ppei1_mean\"") != std::string::npos);
    CHECK(json_a.find("\"references\"") != std::string::npos);

    const std::string csv = to_csv(report);
    CHECK(csv == to_csv(report));
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 13);  // header + one row per step
    CHECK(csv.rfind("t,ade,ppei1,ppei3,md_p25,md_p50,md_p75\n", 0) == 0);
}
