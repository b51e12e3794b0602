#include "covpred/gauss.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace covpred::gauss {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

/// (p-mu)^T Sigma^-1 (p-mu), shared by nll and mahalanobis so the
/// identity nll(g,p) = nll(g,mu) + md^2/2 holds exactly.
double quad_form(const Gaussian2D& g, const Vec2& p) {
    const double dx = p.x() - g.mu.x();
    const double dy = p.y() - g.mu.y();
    const double zx = dx / g.sigma_x;
    const double zy = dy / g.sigma_y;
    const double one_minus_r2 = 1.0 - g.rho * g.rho;
    return (zx * zx - 2.0 * g.rho * zx * zy + zy * zy) / one_minus_r2;
}

}  // namespace

Gaussian2D::Gaussian2D(const Vec2& mean, double sx, double sy, double r)
    : mu(mean), sigma_x(sx), sigma_y(sy), rho(r) {
    require(mu.allFinite(), "Gaussian2D: non-finite mean");
    require(std::isfinite(sx) && sx >= kSigmaFloor,
            "Gaussian2D: sigma_x below floor");
    require(std::isfinite(sy) && sy >= kSigmaFloor,
            "Gaussian2D: sigma_y below floor");
    require(std::isfinite(r) && std::abs(r) <= kRhoMax,
            "Gaussian2D: |rho| above cap");
}

Eigen::Matrix2d Gaussian2D::cov() const {
    Eigen::Matrix2d s;
    const double off = rho * sigma_x * sigma_y;
    s << sigma_x * sigma_x, off, off, sigma_y * sigma_y;
    return s;
}

Eigen::Matrix2d Gaussian2D::chol() const {
    Eigen::Matrix2d l;
    l << sigma_x, 0.0, sigma_y * rho, sigma_y * std::sqrt(1.0 - rho * rho);
    return l;
}

DiagGaussianN::DiagGaussianN(Eigen::VectorXd mean, Eigen::VectorXd stddev)
    : mu(std::move(mean)), sigma(std::move(stddev)) {
    require(mu.size() == sigma.size(), "DiagGaussianN: size mismatch");
    require((sigma.array() > 0.0).all(), "DiagGaussianN: sigma must be > 0");
}

double nll(const Gaussian2D& g, const Vec2& p) {
    require(p.allFinite(), "nll: non-finite point");
    const double one_minus_r2 = 1.0 - g.rho * g.rho;
    const double log_norm = std::log(2.0 * std::numbers::pi * g.sigma_x *
                                     g.sigma_y * std::sqrt(one_minus_r2));
    return log_norm + 0.5 * quad_form(g, p);
}

double mahalanobis(const Gaussian2D& g, const Vec2& p) {
    require(p.allFinite(), "mahalanobis: non-finite point");
    return std::sqrt(quad_form(g, p));
}

Vec2 sample(const Gaussian2D& g, Rng& rng) {
    const Eigen::Vector2d eps(rng.normal(), rng.normal());
    return g.mu + g.chol() * eps;
}

double kl_diag_vs_standard(const DiagGaussianN& q) {
    const auto s2 = q.sigma.array().square();
    return 0.5 * (s2 + q.mu.array().square() - 1.0 - s2.log()).sum();
}

std::vector<Vec2> ellipse_points(const Gaussian2D& g, double k_sigma, int n) {
    require(k_sigma > 0.0, "ellipse_points: k_sigma must be > 0");
    require(n >= 3, "ellipse_points: need at least 3 points");
    const Eigen::Matrix2d l = g.chol();
    std::vector<Vec2> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double theta = 2.0 * std::numbers::pi * i / n;
        const Eigen::Vector2d u(std::cos(theta), std::sin(theta));
        pts.emplace_back(g.mu + k_sigma * (l * u));
    }
    return pts;
}

}  // namespace covpred::gauss
