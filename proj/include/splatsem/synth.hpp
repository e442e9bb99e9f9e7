// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"
#include "splatsem/gaussian.hpp"
#include "splatsem/rng.hpp"

namespace splatsem {

struct SynthConfig {
    int n_objects = 6;
    int n_classes = 4;
    int feature_dim = 8;
    int n_cameras = 4;
    int image_size = 96;
    double orbit_radius = 4.0;
    // Sampling density: each box face carries a face_grid x face_grid point grid.
    int face_grid = 37;
    double base_scale = 0.02;  // isotropic stddev of every generated Gaussian
    // Outlier injection (off by default): a fraction of samples take the next
    // class's feature/color, get a confidence boost, and sink into the box so
    // the clean surface occludes them.
    double outlier_fraction = 0.0;
    double outlier_confidence_boost = 2.0;
    double outlier_inset = 0.02;
};

struct SyntheticScene {
    std::uint64_t seed = 0;
    SynthConfig config;
    GaussianScene gaussians;
    std::vector<int> labels;               // per-primitive class id
    Eigen::MatrixXd class_features;        // n_classes x feature_dim, orthonormal rows
    std::vector<CameraView> cameras;
    std::vector<std::vector<int>> gt_labels;  // per camera, H*W row-major, -1 = background
};

namespace detail {

/// Distinct class colors from an HSV hue wheel (s = 0.75, v = 0.9).
inline Eigen::Vector3d class_color(int k, int n_classes) {
    double h = 6.0 * k / n_classes;
    double s = 0.75, v = 0.9;
    int sector = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

inline CameraView orbit_camera(double azimuth, double elevation, double radius, int size) {
    Eigen::Vector3d eye(radius * std::cos(elevation) * std::cos(azimuth),
                        radius * std::cos(elevation) * std::sin(azimuth),
                        radius * std::sin(elevation));
    Eigen::Vector3d forward = (-eye).normalized();  // look at the origin
    Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ()).normalized();
    Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d rot;
    rot.row(0) = right;
    rot.row(1) = down;
    rot.row(2) = forward;
    double f = 0.9 * size;
    return make_camera(f, f, size / 2.0, size / 2.0, size, size, rot, -rot * eye);
}

}  // namespace detail

/// Nearest-primitive label grid: every center is projected and a depth buffer
/// keeps the closest primitive's class per pixel (-1 where nothing lands).
inline std::vector<int> projected_label_grid(const GaussianScene& scene,
                                             const std::vector<int>& labels,
                                             const CameraView& view) {
    if (labels.size() != scene.primitives.size())
        throw LengthMismatch("one label per primitive required");
    std::vector<int> grid(static_cast<std::size_t>(view.height) * view.width, -1);
    std::vector<double> zbuf(grid.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        Eigen::Vector3d p = view.rotation * scene.primitives[i].center + view.translation;
        if (p.z() <= 1e-8) continue;
        int px = static_cast<int>(std::floor(view.fx() * p.x() / p.z() + view.cx()));
        int py = static_cast<int>(std::floor(view.fy() * p.y() / p.z() + view.cy()));
        if (px < 0 || px >= view.width || py < 0 || py >= view.height) continue;
        std::size_t idx = static_cast<std::size_t>(py) * view.width + px;
        if (p.z() < zbuf[idx]) {
            zbuf[idx] = p.z();
            grid[idx] = labels[i];
        }
    }
    return grid;
}

/// Labels a rendered feature map by the class feature with the largest cosine
/// similarity; pixels at or below the alpha threshold get -1.
inline std::vector<int> argmax_cosine_labels(const DenseMap& features, const DenseMap& alpha,
                                             const Eigen::MatrixXd& class_features,
                                             double alpha_threshold = 0.5) {
    if (features.height != alpha.height || features.width != alpha.width ||
        alpha.channels != 1)
        throw ShapeMismatch("feature map and single-channel alpha must align");
    if (features.channels != class_features.cols())
        throw ShapeMismatch("feature dimension does not match the class features");
    std::vector<int> grid(static_cast<std::size_t>(features.height) * features.width, -1);
    Eigen::VectorXd f(features.channels);
    std::size_t i = 0;
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x, ++i) {
            if (!(alpha.at(y, x, 0) > alpha_threshold)) continue;
            for (int c = 0; c < features.channels; ++c) f(c) = features.at(y, x, c);
            double nf = f.norm();
            if (nf <= 1e-12) continue;
            int best = -1;
            double best_cos = -std::numeric_limits<double>::infinity();
            for (Eigen::Index k = 0; k < class_features.rows(); ++k) {
                double nk = class_features.row(k).norm();
                if (nk <= 1e-12) continue;
                double cosv = class_features.row(k).dot(f) / (nf * nk);
                if (cosv > best_cos) {
                    best_cos = cosv;
                    best = static_cast<int>(k);
                }
            }
            grid[i] = best;
        }
    }
    return grid;
}

/// Deterministic multi-view scene: axis-aligned boxes sampled as dense
/// isotropic Gaussians, one semantic class per object (orthonormal class
/// features), cameras on an orbit around the origin, plus nearest-primitive
/// ground-truth label grids. Identical (seed, config) inputs reproduce the
/// scene bit-for-bit.
inline SyntheticScene generate(std::uint64_t seed, const SynthConfig& cfg = {}) {
    if (cfg.n_objects <= 0 || cfg.n_classes <= 0 || cfg.feature_dim <= 0 ||
        cfg.n_cameras <= 0 || cfg.image_size <= 0 || cfg.face_grid <= 0)
        throw ConfigError("synthetic config fields must be positive");
    if (cfg.n_classes > cfg.feature_dim)
        throw ConfigError("orthonormal class features require n_classes <= feature_dim");
    if (!(cfg.orbit_radius > 0.0) || !(cfg.base_scale > 0.0))
        throw ConfigError("orbit_radius and base_scale must be positive");
    if (cfg.outlier_fraction < 0.0 || cfg.outlier_fraction >= 1.0)
        throw ConfigError("outlier_fraction must lie in [0, 1)");

    SyntheticScene out;
    out.seed = seed;
    out.config = cfg;
    out.class_features = Eigen::MatrixXd::Identity(cfg.n_classes, cfg.feature_dim);
    out.gaussians.feature_dim = cfg.feature_dim;
    out.gaussians.sh_degree = 0;

    Xoshiro256ss rng(seed);
    const Eigen::Matrix3d cov = cfg.base_scale * cfg.base_scale * Eigen::Matrix3d::Identity();

    // Objects sit on a ring wide enough that their silhouettes stay separated
    // from the orbit cameras; with overlapping boxes, blended feature rims at
    // occlusion boundaries erode argmax label recovery.
    const double ring = 1.2;
    for (int obj = 0; obj < cfg.n_objects; ++obj) {
        double theta = 2.0 * std::numbers::pi * obj / cfg.n_objects;
        Eigen::Vector3d center(ring * std::cos(theta), ring * std::sin(theta),
                               rng.uniform(-0.25, 0.25));
        Eigen::Vector3d half(rng.uniform(0.16, 0.26), rng.uniform(0.16, 0.26),
                             rng.uniform(0.16, 0.26));
        int cls = obj % cfg.n_classes;

        for (int axis = 0; axis < 3; ++axis) {
            for (int sign = -1; sign <= 1; sign += 2) {
                Eigen::Vector3d normal = Eigen::Vector3d::Zero();
                normal(axis) = sign;
                int t1 = (axis + 1) % 3, t2 = (axis + 2) % 3;
                for (int i = 0; i < cfg.face_grid; ++i) {
                    for (int j = 0; j < cfg.face_grid; ++j) {
                        double u = -1.0 + 2.0 * (i + 0.5) / cfg.face_grid;
                        double v = -1.0 + 2.0 * (j + 0.5) / cfg.face_grid;
                        Eigen::Vector3d pos = center + normal * half(axis);
                        pos(t1) += u * half(t1);
                        pos(t2) += v * half(t2);

                        double opacity = rng.uniform(0.7, 0.9);
                        double confidence = rng.uniform(0.2, 1.0);
                        Eigen::Vector3d noise(rng.uniform(-0.03, 0.03),
                                              rng.uniform(-0.03, 0.03),
                                              rng.uniform(-0.03, 0.03));
                        bool outlier = cfg.outlier_fraction > 0.0 &&
                                       rng.uniform() < cfg.outlier_fraction;
                        int point_cls = cls;
                        if (outlier) {
                            point_cls = (cls + 1) % cfg.n_classes;
                            confidence += cfg.outlier_confidence_boost;
                            pos -= normal * cfg.outlier_inset;
                        }
                        Eigen::Vector3d color =
                            (detail::class_color(point_cls, cfg.n_classes) + noise)
                                .cwiseMax(0.0)
                                .cwiseMin(1.0);

                        GaussianPrimitive p;
                        p.center = pos;
                        p.covariance = cov;
                        p.sh_color = (color / kSh0).transpose();
                        p.opacity = opacity;
                        p.confidence = confidence;
                        p.feature = out.class_features.row(point_cls);
                        out.gaussians.primitives.push_back(std::move(p));
                        out.labels.push_back(point_cls);
                    }
                }
            }
        }
    }

    const double elevation = 0.9;  // radians above the orbit plane
    for (int c = 0; c < cfg.n_cameras; ++c) {
        double azimuth = 2.0 * std::numbers::pi * c / cfg.n_cameras;
        out.cameras.push_back(detail::orbit_camera(azimuth, elevation, cfg.orbit_radius,
                                                   cfg.image_size));
    }
    for (const CameraView& cam : out.cameras)
        out.gt_labels.push_back(projected_label_grid(out.gaussians, out.labels, cam));
    return out;
}

}  // namespace splatsem
