// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared fixtures for the test suite: relative-error metrics, finite
// differences, deterministic random cameras/scenes/maps.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/gaussian.hpp"
#include "splatsem/rng.hpp"

namespace testutil {

inline constexpr double kFdStep = 1e-6;
inline constexpr double kGradTol = 1e-4;

/// Round a double through f32 precision. The volatile blocks GCC's -O3 loop
/// vectorizer, which otherwise elides the narrowing round trip entirely.
inline double snap_f32(double v) {
    volatile float f = static_cast<float>(v);
    return static_cast<double>(f);
}

/// Relative L2 distance between two flat vectors, guarded for zero norms.
inline double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

inline std::vector<double> flatten(const Eigen::MatrixXd& m) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    return v;
}

/// Central finite differences of a scalar objective over a parameter vector.
inline std::vector<double> finite_diff(std::vector<double>& params,
                                       const std::function<double()>& objective,
                                       double h = kFdStep) {
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        double orig = params[i];
        params[i] = orig + h;
        double hi = objective();
        params[i] = orig - h;
        double lo = objective();
        params[i] = orig;
        grad[i] = (hi - lo) / (2.0 * h);
    }
    return grad;
}

inline Eigen::Matrix3d rotation_xyz(double ax, double ay, double az) {
    Eigen::Matrix3d rx, ry, rz;
    rx << 1, 0, 0, 0, std::cos(ax), -std::sin(ax), 0, std::sin(ax), std::cos(ax);
    ry << std::cos(ay), 0, std::sin(ay), 0, 1, 0, -std::sin(ay), 0, std::cos(ay);
    rz << std::cos(az), -std::sin(az), 0, std::sin(az), std::cos(az), 0, 0, 0, 1;
    return rz * ry * rx;
}

/// Camera with a small random rotation/translation; power-of-two focals keep
/// identity round trips exact.
inline splatsem::CameraView random_camera(splatsem::Xoshiro256ss& rng, int width, int height,
                                          double max_angle = 0.15) {
    Eigen::Matrix3d rot = rotation_xyz(rng.uniform(-max_angle, max_angle),
                                       rng.uniform(-max_angle, max_angle),
                                       rng.uniform(-max_angle, max_angle));
    Eigen::Vector3d t(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
    return splatsem::make_camera(16.0, 16.0, width / 2.0, height / 2.0, width, height, rot, t);
}

inline splatsem::DenseMap random_map(splatsem::Xoshiro256ss& rng, int h, int w, int c,
                                     double lo = 0.2, double hi = 1.2) {
    splatsem::DenseMap map(h, w, c);
    for (double& v : map.data) v = rng.uniform(lo, hi);
    return map;
}

/// Random well-conditioned PSD covariance with scale around `scale`.
inline Eigen::Matrix3d random_covariance(splatsem::Xoshiro256ss& rng, double scale) {
    Eigen::Matrix3d a;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
    Eigen::Matrix3d cov = scale * scale * (a * a.transpose());
    cov += 0.1 * scale * scale * Eigen::Matrix3d::Identity();
    return cov;
}

/// Random scene of n primitives inside [-1,1]^3 with the given feature dim.
inline splatsem::GaussianScene random_scene(splatsem::Xoshiro256ss& rng, int n, int feature_dim,
                                            int sh_degree = 0, double cov_scale = 0.05) {
    splatsem::GaussianScene scene;
    scene.feature_dim = feature_dim;
    scene.sh_degree = sh_degree;
    const int n_sh = splatsem::sh_coeff_count(sh_degree);
    for (int i = 0; i < n; ++i) {
        splatsem::GaussianPrimitive p;
        p.center = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        p.covariance = random_covariance(rng, cov_scale);
        p.sh_color.resize(n_sh, 3);
        for (int r = 0; r < n_sh; ++r)
            for (int c = 0; c < 3; ++c)
                p.sh_color(r, c) = r == 0 ? rng.uniform(0.0, 1.0) / splatsem::kSh0
                                          : rng.uniform(-0.3, 0.3);
        p.opacity = rng.uniform(0.2, 0.9);
        p.confidence = rng.uniform(0.2, 1.0);
        p.feature = Eigen::VectorXd::Zero(feature_dim);
        for (int c = 0; c < feature_dim; ++c) p.feature(c) = rng.uniform(-1.0, 1.0);
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

/// Identity-orientation camera whose translation puts the world origin at
/// depth `radius` on the optical axis.
inline splatsem::CameraView front_camera(int size, double radius = 4.0, double focal = 0.0) {
    if (focal <= 0.0) focal = 0.9 * size;
    return splatsem::make_camera(focal, focal, size / 2.0, size / 2.0, size, size,
                                 Eigen::Matrix3d::Identity(),
                                 Eigen::Vector3d(0, 0, radius));
}

/// Two views of the fronto-parallel world plane z = plane_z: the target sits at
/// the origin with identity orientation, the context is rotated about y and
/// shifted. Depth maps are exact plane intersections along each pixel ray, so
/// warped target pixels pass depth-consistency up to interpolation error.
struct PlaneSetup {
    splatsem::CameraView target, context;
    splatsem::DenseMap target_depth, context_depth;
};

inline PlaneSetup plane_setup(int height, int width, double plane_z = 3.0,
                              double context_angle = 0.02,
                              const Eigen::Vector3d& context_shift = {0.05, 0.0, 0.0}) {
    PlaneSetup s{splatsem::make_camera(16.0, 16.0, width / 2.0, height / 2.0, width, height),
                 splatsem::make_camera(16.0, 16.0, width / 2.0, height / 2.0, width, height,
                                       rotation_xyz(0.0, context_angle, 0.0), context_shift),
                 splatsem::DenseMap(height, width, 1, plane_z),
                 splatsem::DenseMap(height, width, 1)};
    const Eigen::Vector3d center = s.context.camera_center_world();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            Eigen::Vector3d ray((x + 0.5 - s.context.cx()) / s.context.fx(),
                                (y + 0.5 - s.context.cy()) / s.context.fy(), 1.0);
            Eigen::Vector3d dir = s.context.rotation.transpose() * ray;
            // camera-frame z equals the ray multiplier because ray.z() == 1
            s.context_depth.at(y, x, 0) = (plane_z - center.z()) / dir.z();
        }
    }
    return s;
}

}  // namespace testutil
