#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "covpred/gauss.hpp"

using covpred::Rng;
using covpred::Vec2;
using covpred::kRhoMax;
using covpred::kSigmaFloor;
using namespace covpred::gauss;

namespace {

Gaussian2D random_gaussian(Rng& rng) {
    return Gaussian2D(Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5)),
                      rng.uniform(0.05, 3.0), rng.uniform(0.05, 3.0),
                      rng.uniform(-0.95, 0.95));
}

}  // namespace

TEST_CASE("nll matches a hand-computed density") {
    const Gaussian2D g(Vec2(1.0, 2.0), 0.5, 2.0, 0.3);
    CHECK(nll(g, Vec2(1.4, 1.0)) == doctest::Approx(2.4116008475528457).epsilon(1e-14));
    CHECK(nll(g, g.mu) == doctest::Approx(1.7907217266737248).epsilon(1e-14));
}

TEST_CASE("nll at the mean is the log normalizer") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const Gaussian2D g = random_gaussian(rng);
        const double expected = std::log(
            2.0 * M_PI * g.sigma_x * g.sigma_y * std::sqrt(1.0 - g.rho * g.rho));
        CHECK(nll(g, g.mu) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("nll decomposes into normalizer plus half squared mahalanobis") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        const Gaussian2D g = random_gaussian(rng);
        const Vec2 p(rng.uniform(-10, 10), rng.uniform(-10, 10));
        const double md = mahalanobis(g, p);
        CHECK(nll(g, p) - nll(g, g.mu) ==
              doctest::Approx(0.5 * md * md).epsilon(1e-10));
    }
}

TEST_CASE("mahalanobis equals unit distance on a constructed point") {
    // For sx=2, sy=1, rho=0.5 the displacement (1, 1) has squared form
    // (0.25 - 2*0.5*0.5 + 1) / 0.75 = 1.
    const Gaussian2D g(Vec2(0.0, 0.0), 2.0, 1.0, 0.5);
    CHECK(mahalanobis(g, Vec2(1.0, 1.0)) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("mahalanobis is translation invariant and zero at the mean") {
    Rng rng(13);
    for (int i = 0; i < 200; ++i) {
        const Gaussian2D g = random_gaussian(rng);
        const Vec2 p(rng.uniform(-10, 10), rng.uniform(-10, 10));
        const Vec2 shift(rng.uniform(-20, 20), rng.uniform(-20, 20));
        const Gaussian2D moved(g.mu + shift, g.sigma_x, g.sigma_y, g.rho);
        CHECK(mahalanobis(moved, p + shift) ==
              doctest::Approx(mahalanobis(g, p)).epsilon(1e-9));
        CHECK(mahalanobis(g, g.mu) == 0.0);
    }
}

TEST_CASE("cov and chol are consistent") {
    Rng rng(14);
    for (int i = 0; i < 200; ++i) {
        const Gaussian2D g = random_gaussian(rng);
        const Eigen::Matrix2d c = g.cov();
        CHECK(c(0, 1) == c(1, 0));
        CHECK(c(0, 0) == doctest::Approx(g.sigma_x * g.sigma_x));
        const Eigen::Matrix2d L = g.chol();
        CHECK(L(0, 1) == 0.0);  // lower triangular
        CHECK((L * L.transpose() - c).cwiseAbs().maxCoeff() < 1e-12);
        // PSD: both eigenvalues of a 2x2 symmetric matrix are nonnegative
        // iff trace >= 0 and det >= 0.
        CHECK(c.trace() >= 0.0);
        CHECK(c.determinant() >= -1e-12);
    }
}

TEST_CASE("constructor rejects invalid parameters") {
    const Vec2 mu(0.0, 0.0);
    CHECK_THROWS_AS(Gaussian2D(mu, 0.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(Gaussian2D(mu, -1.0, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(Gaussian2D(mu, 1.0, 0.5 * kSigmaFloor, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(Gaussian2D(mu, 1.0, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(Gaussian2D(mu, 1.0, 1.0, -1.5), std::invalid_argument);
    const double nan = std::nan("");
    CHECK_THROWS_AS(Gaussian2D(mu, nan, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(Gaussian2D(Vec2(nan, 0.0), 1.0, 1.0, 0.0), std::invalid_argument);
    CHECK_NOTHROW(Gaussian2D(mu, kSigmaFloor, 1.0, kRhoMax));
    CHECK_NOTHROW(Gaussian2D(mu, kSigmaFloor, 1.0, -kRhoMax));
}

TEST_CASE("kl_diag_vs_standard matches the closed form oracle") {
    Eigen::VectorXd mu(3), sigma(3);
    mu << 0.3, -1.2, 0.5;
    sigma << 0.7, 1.5, 1.1;
    CHECK(kl_diag_vs_standard({mu, sigma}) ==
          doctest::Approx(1.2208996560262433).epsilon(1e-14));
}

TEST_CASE("kl_diag_vs_standard is nonnegative and zero at the standard normal") {
    CHECK(kl_diag_vs_standard({Eigen::VectorXd::Zero(5),
                               Eigen::VectorXd::Ones(5)}) == 0.0);
    Rng rng(15);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd mu(4), sigma(4);
        for (int k = 0; k < 4; ++k) {
            mu[k] = rng.uniform(-3, 3);
            sigma[k] = rng.uniform(0.05, 4.0);
        }
        CHECK(kl_diag_vs_standard({mu, sigma}) >= 0.0);
    }
}

TEST_CASE("samples reproduce mean and covariance") {
    const Gaussian2D g(Vec2(1.5, -0.5), 0.8, 1.6, -0.6);
    Rng rng(1234);
    const int n = 200000;
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i) {
        const Vec2 s = sample(g, rng);
        mean += s;
        second += s * s.transpose();
    }
    mean /= n;
    const Eigen::Matrix2d cov = second / n - mean * mean.transpose();
    CHECK((mean - g.mu).cwiseAbs().maxCoeff() < 0.02);
    CHECK((cov - g.cov()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("fraction of samples inside the unit mahalanobis contour") {
    // P(MD < 1) for a 2D Gaussian is 1 - exp(-1/2) regardless of parameters.
    const Gaussian2D g(Vec2(-2.0, 3.0), 1.3, 0.4, 0.7);
    Rng rng(99);
    const int n = 100000;
    int inside = 0;
    for (int i = 0; i < n; ++i)
        if (mahalanobis(g, sample(g, rng)) < 1.0) ++inside;
    CHECK(static_cast<double>(inside) / n ==
          doctest::Approx(0.39346934028736658).epsilon(0.03));
}

TEST_CASE("ellipse_points lie on the contour and match frozen coordinates") {
    const Gaussian2D g(Vec2(1.0, -2.0), 2.0, 1.0, 0.5);
    const auto pts = ellipse_points(g, 2.0, 4);
    REQUIRE(pts.size() == 4);
    CHECK(pts[0].x() == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(pts[0].y() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pts[1].x() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pts[1].y() == doctest::Approx(-0.26794919243112281).epsilon(1e-12));
    for (const Vec2& p : pts)
        CHECK(mahalanobis(g, p) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK_THROWS_AS(ellipse_points(g, 0.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(ellipse_points(g, 1.0, 2), std::invalid_argument);
}

TEST_CASE("sampling near the correlation cap stays finite") {
    const Gaussian2D g(Vec2(0.0, 0.0), 1.0, 1.0, kRhoMax);
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const Vec2 s = sample(g, rng);
        CHECK(s.allFinite());
        CHECK(std::isfinite(mahalanobis(g, s)));
    }
}
