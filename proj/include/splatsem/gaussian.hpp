// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"

namespace splatsem {

// Degree-0 real spherical harmonic basis value.
inline constexpr double kSh0 = 0.28209479177387814;

/// One splat: G = (center, covariance, sh color, opacity, feature, confidence).
/// Covariance is a full symmetric PSD 3x3; sh_color has (degree+1)^2 rows of
/// RGB coefficients.
struct GaussianPrimitive {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
    Eigen::MatrixX3d sh_color = Eigen::MatrixX3d::Zero(1, 3);
    double opacity = 1.0;
    Eigen::VectorXd feature;
    double confidence = 0.0;
};

struct GaussianScene {
    std::vector<GaussianPrimitive> primitives;
    int feature_dim = 0;
    int sh_degree = 0;

    std::size_t size() const { return primitives.size(); }
};

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

inline void validate_primitive(const GaussianPrimitive& p, int feature_dim,
                               int sh_degree, long index) {
    if ((p.covariance - p.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw InvariantViolation("covariance not symmetric", index);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(p.covariance);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw InvariantViolation("covariance not PSD", index);
    if (!(p.opacity >= 0.0 && p.opacity <= 1.0))
        throw InvariantViolation("opacity outside [0,1]", index);
    if (p.feature.size() != feature_dim)
        throw InvariantViolation("feature dimension mismatch", index);
    if (p.sh_color.rows() != sh_coeff_count(sh_degree))
        throw InvariantViolation("sh coefficient count mismatch", index);
    if (!(p.confidence >= 0.0))
        throw InvariantViolation("confidence must be >= 0", index);
    if (!p.center.allFinite() || !p.covariance.allFinite() || !p.sh_color.allFinite() ||
        !p.feature.allFinite() || !std::isfinite(p.opacity) || !std::isfinite(p.confidence))
        throw InvariantViolation("non-finite primitive attribute", index);
}

inline void validate_scene(const GaussianScene& scene) {
    for (std::size_t g = 0; g < scene.primitives.size(); ++g)
        validate_primitive(scene.primitives[g], scene.feature_dim, scene.sh_degree,
                           static_cast<long>(g));
}

/// One primitive per valid-depth pixel: center from depth unprojection,
/// isotropic covariance (base_scale * depth / fx)^2 * I so the screen-space
/// footprint stays constant, degree-0 SH from the color map.
inline GaussianScene pixel_aligned_scene(const CameraView& view, const DenseMap& depth,
                                         const DenseMap& colors, const DenseMap& features,
                                         const DenseMap& opacities, const DenseMap& confidences,
                                         double base_scale) {
    if (depth.channels != 1)
        throw ShapeMismatch("pixel_aligned_scene expects single-channel depth");
    auto same_hw = [&](const DenseMap& m) {
        return m.height == depth.height && m.width == depth.width;
    };
    if (!same_hw(colors) || colors.channels != 3)
        throw ShapeMismatch("color map must be HxWx3 matching depth");
    if (!same_hw(features) || !same_hw(opacities) || !same_hw(confidences) ||
        opacities.channels != 1 || confidences.channels != 1)
        throw ShapeMismatch("attribute maps must share HxW with depth");

    GaussianScene scene;
    scene.feature_dim = features.channels;
    scene.sh_degree = 0;
    UnprojectResult up = unproject_depth(view, depth);
    std::size_t i = 0;
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x, ++i) {
            if (!up.valid[i]) continue;
            GaussianPrimitive p;
            p.center = up.points[i];
            double sigma = base_scale * depth.at(y, x, 0) / view.fx();
            p.covariance = sigma * sigma * Eigen::Matrix3d::Identity();
            p.sh_color.resize(1, 3);
            for (int c = 0; c < 3; ++c) p.sh_color(0, c) = colors.at(y, x, c) / kSh0;
            p.opacity = opacities.at(y, x, 0);
            p.feature.resize(features.channels);
            for (int c = 0; c < features.channels; ++c) p.feature(c) = features.at(y, x, c);
            p.confidence = confidences.at(y, x, 0);
            scene.primitives.push_back(std::move(p));
        }
    }
    return scene;
}

// Scene file: magic "FGSC", u32 version=1, u32 N, u32 D, u32 sh_degree, then
// per primitive [3 center][6 covariance upper triangle row-major]
// [(deg+1)^2*3 sh][opacity][confidence][D feature], all f32 little-endian.
inline void save_scene(const GaussianScene& scene, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open for write: " + path);
    os.write("FGSC", 4);
    detail::write_u32le(os, 1);
    detail::write_u32le(os, static_cast<std::uint32_t>(scene.primitives.size()));
    detail::write_u32le(os, static_cast<std::uint32_t>(scene.feature_dim));
    detail::write_u32le(os, static_cast<std::uint32_t>(scene.sh_degree));
    for (const auto& p : scene.primitives) {
        for (int i = 0; i < 3; ++i) detail::write_f32le(os, static_cast<float>(p.center(i)));
        const int upper[6][2] = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
        for (auto& idx : upper)
            detail::write_f32le(os, static_cast<float>(p.covariance(idx[0], idx[1])));
        for (Eigen::Index r = 0; r < p.sh_color.rows(); ++r)
            for (int c = 0; c < 3; ++c)
                detail::write_f32le(os, static_cast<float>(p.sh_color(r, c)));
        detail::write_f32le(os, static_cast<float>(p.opacity));
        detail::write_f32le(os, static_cast<float>(p.confidence));
        for (Eigen::Index i = 0; i < p.feature.size(); ++i)
            detail::write_f32le(os, static_cast<float>(p.feature(i)));
    }
    if (!os) throw Error("write failed: " + path);
}

inline GaussianScene load_scene(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FGSC", 4) != 0)
        throw ParseError("bad FGSC magic in " + path, 0);
    std::size_t offset = 4;
    std::uint32_t version = detail::read_u32le(is, offset);
    if (version != 1)
        throw ParseError("unsupported FGSC version " + std::to_string(version), 4);
    std::uint32_t n = detail::read_u32le(is, offset);
    std::uint32_t d = detail::read_u32le(is, offset);
    std::uint32_t sh_degree = detail::read_u32le(is, offset);
    if (sh_degree > 3) throw ParseError("sh degree above 3 in " + path, 16);

    GaussianScene scene;
    scene.feature_dim = static_cast<int>(d);
    scene.sh_degree = static_cast<int>(sh_degree);
    scene.primitives.reserve(n);
    const int n_sh = sh_coeff_count(scene.sh_degree);
    for (std::uint32_t g = 0; g < n; ++g) {
        GaussianPrimitive p;
        for (int i = 0; i < 3; ++i) p.center(i) = detail::read_f32le(is, offset);
        double cov[6];
        for (double& v : cov) v = detail::read_f32le(is, offset);
        p.covariance << cov[0], cov[1], cov[2], cov[1], cov[3], cov[4], cov[2], cov[4], cov[5];
        p.sh_color.resize(n_sh, 3);
        for (int r = 0; r < n_sh; ++r)
            for (int c = 0; c < 3; ++c) p.sh_color(r, c) = detail::read_f32le(is, offset);
        p.opacity = detail::read_f32le(is, offset);
        p.confidence = detail::read_f32le(is, offset);
        p.feature.resize(scene.feature_dim);
        for (int i = 0; i < scene.feature_dim; ++i) p.feature(i) = detail::read_f32le(is, offset);
        validate_primitive(p, scene.feature_dim, scene.sh_degree, static_cast<long>(g));
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

}  // namespace splatsem
