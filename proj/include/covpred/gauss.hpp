#pragma once

#include <Eigen/Dense>
#include <vector>

#include "covpred/rng.hpp"

namespace covpred {

using Vec2 = Eigen::Vector2d;

/// Lower bound applied to every predicted standard deviation (meters).
inline constexpr double kSigmaFloor = 1e-3;
/// Cap on |rho| so the implied covariance stays positive definite.
inline constexpr double kRhoMax = 0.999;

namespace gauss {

/// Bi-variate Gaussian parameterized as (mu, sigma_x, sigma_y, rho).
/// The implied covariance is [[sx^2, r*sx*sy], [r*sx*sy, sy^2]].
struct Gaussian2D {
    Vec2 mu{0.0, 0.0};
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double rho = 0.0;

    Gaussian2D() = default;
    Gaussian2D(const Vec2& mean, double sx, double sy, double r);

    Eigen::Matrix2d cov() const;
    /// Lower-triangular Cholesky factor of the covariance.
    Eigen::Matrix2d chol() const;
};

/// Diagonal Gaussian over R^n; used for the CVAE latent distributions.
struct DiagGaussianN {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;

    DiagGaussianN() = default;
    DiagGaussianN(Eigen::VectorXd mean, Eigen::VectorXd stddev);
};

/// Negative log density -log N(p; mu, Sigma).
double nll(const Gaussian2D& g, const Vec2& p);

/// sqrt((p-mu)^T Sigma^-1 (p-mu)).
double mahalanobis(const Gaussian2D& g, const Vec2& p);

/// Draw one point via the Cholesky factor applied to two standard normals.
Vec2 sample(const Gaussian2D& g, Rng& rng);

/// Closed-form KL(q || N(0, I)) for a diagonal Gaussian q.
double kl_diag_vs_standard(const DiagGaussianN& q);

/// n points on the iso-Mahalanobis contour at level k_sigma.
std::vector<Vec2> ellipse_points(const Gaussian2D& g, double k_sigma, int n);

}  // namespace gauss
}  // namespace covpred
