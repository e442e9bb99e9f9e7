// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/gaussian.hpp"

namespace splatsem {

// Rendering constants. The low-pass term matches the usual EWA dilation;
// falloff is clamped below 1 so a splat never becomes fully opaque.
inline constexpr double kNearPlane = 0.01;
inline constexpr double kLowPass = 0.3;               // px^2, added isotropically
inline constexpr double kFalloffClamp = 0.99;
inline constexpr double kMinTransmittance = 1e-4;     // early termination
inline constexpr double kSingularDet = 1e-12;
inline constexpr double kCutoffQ = 9.0;               // 3-sigma ellipse

namespace detail {
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792,
                                    0.31539156525252005, -1.0925484305920792,
                                    0.5462742152960396};
inline constexpr double kShC3[7] = {-0.5900435899266435, 2.890611442640554,
                                    -0.4570457994644658, 0.3731763325901154,
                                    -0.4570457994644658, 1.445305721320277,
                                    -0.5900435899266435};
}  // namespace detail

/// Real spherical harmonics up to the stored degree, evaluated at a unit
/// direction. Degree 0 reproduces sh.row(0) * kSh0 exactly.
inline Eigen::Vector3d eval_sh_color(int degree, const Eigen::MatrixX3d& sh,
                                     const Eigen::Vector3d& dir) {
    Eigen::Vector3d result = kSh0 * sh.row(0).transpose();
    if (degree < 1) return result;
    const double x = dir.x(), y = dir.y(), z = dir.z();
    result += detail::kShC1 * (-y * sh.row(1) + z * sh.row(2) - x * sh.row(3)).transpose();
    if (degree < 2) return result;
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    result += (detail::kShC2[0] * xy * sh.row(4) + detail::kShC2[1] * yz * sh.row(5) +
               detail::kShC2[2] * (2.0 * zz - xx - yy) * sh.row(6) +
               detail::kShC2[3] * xz * sh.row(7) +
               detail::kShC2[4] * (xx - yy) * sh.row(8)).transpose();
    if (degree < 3) return result;
    result += (detail::kShC3[0] * y * (3.0 * xx - yy) * sh.row(9) +
               detail::kShC3[1] * xy * z * sh.row(10) +
               detail::kShC3[2] * y * (4.0 * zz - xx - yy) * sh.row(11) +
               detail::kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh.row(12) +
               detail::kShC3[4] * x * (4.0 * zz - xx - yy) * sh.row(13) +
               detail::kShC3[5] * z * (xx - yy) * sh.row(14) +
               detail::kShC3[6] * x * (xx - 3.0 * yy) * sh.row(15)).transpose();
    return result;
}

struct Projected2d {
    PixelCoord mean2d;
    Eigen::Matrix2d cov2d;
    double depth = 0.0;
};

/// EWA projection of one primitive: camera-frame mean through the pose, 2D
/// covariance J R Sigma R^T J^T plus the low-pass term. Returns nullopt when
/// the primitive is behind the near plane or its 3-sigma box misses the image.
inline std::optional<Projected2d> project_gaussian_2d(const CameraView& view,
                                                      const GaussianPrimitive& prim) {
    Eigen::Vector3d t = view.rotation * prim.center + view.translation;
    if (t.z() <= kNearPlane) return std::nullopt;
    auto [mean2d, depth] = project_point(view, t);

    const double inv_z = 1.0 / t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << view.fx() * inv_z, 0.0, -view.fx() * t.x() * inv_z * inv_z,
           0.0, view.fy() * inv_z, -view.fy() * t.y() * inv_z * inv_z;
    Eigen::Matrix2d cov2d =
        jac * view.rotation * prim.covariance * view.rotation.transpose() * jac.transpose();
    cov2d += kLowPass * Eigen::Matrix2d::Identity();

    const double ru = 3.0 * std::sqrt(std::max(cov2d(0, 0), 0.0));
    const double rv = 3.0 * std::sqrt(std::max(cov2d(1, 1), 0.0));
    if (mean2d.u + ru < 0.0 || mean2d.u - ru > view.width ||
        mean2d.v + rv < 0.0 || mean2d.v - rv > view.height)
        return std::nullopt;
    return Projected2d{mean2d, cov2d, depth};
}

struct RenderOutput {
    DenseMap color;    // H x W x 3, composited over background
    DenseMap feature;  // H x W x D
    DenseMap depth;    // H x W x 1, alpha-weighted expected depth
    DenseMap alpha;    // H x W x 1, accumulated opacity
    long n_culled = 0;
    long n_singular = 0;  // skipped with near-singular 2D covariance
};

namespace detail {

struct Splat {
    double mean_u, mean_v;
    double inv_a, inv_b, inv_c;  // inverse 2D covariance [[a,b],[b,c]]
    double depth;
    double opacity;
    Eigen::Vector3d color;
    std::uint32_t index;  // into scene.primitives
    int x_min, x_max, y_min, y_max;
};

}  // namespace detail

/// Front-to-back alpha compositing of depth-sorted splats; color, feature and
/// depth all share the per-primitive weights w_i = alpha_i g_i T_i. Compositing
/// is per-pixel independent, so any thread count gives bit-identical output.
inline RenderOutput render(const GaussianScene& scene, const CameraView& view,
                           const Eigen::Vector3d& background, int n_threads = 1) {
    const int w = view.width, h = view.height;
    const int d = std::max(scene.feature_dim, 1);
    RenderOutput out;
    out.color = DenseMap(h, w, 3);
    out.feature = DenseMap(h, w, d);
    out.depth = DenseMap(h, w, 1);
    out.alpha = DenseMap(h, w, 1);

    // Project every primitive; keep the survivors.
    std::vector<detail::Splat> splats;
    splats.reserve(scene.primitives.size());
    const Eigen::Vector3d cam_center = view.camera_center_world();
    for (std::uint32_t g = 0; g < scene.primitives.size(); ++g) {
        const auto& prim = scene.primitives[g];
        auto proj = project_gaussian_2d(view, prim);
        if (!proj) {
            ++out.n_culled;
            continue;
        }
        const Eigen::Matrix2d& cov = proj->cov2d;
        double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
        if (det < kSingularDet) {
            ++out.n_singular;
            continue;
        }
        detail::Splat s;
        s.mean_u = proj->mean2d.u;
        s.mean_v = proj->mean2d.v;
        double inv_det = 1.0 / det;
        s.inv_a = cov(1, 1) * inv_det;
        s.inv_b = -cov(0, 1) * inv_det;
        s.inv_c = cov(0, 0) * inv_det;
        s.depth = proj->depth;
        s.opacity = prim.opacity;
        Eigen::Vector3d dir = prim.center - cam_center;
        double norm = dir.norm();
        if (norm > 0.0) dir /= norm;
        s.color = eval_sh_color(scene.sh_degree, prim.sh_color, dir);
        s.index = g;
        // pixels whose center can fall inside the 3-sigma box
        double ru = 3.0 * std::sqrt(cov(0, 0));
        double rv = 3.0 * std::sqrt(cov(1, 1));
        s.x_min = std::max(0, static_cast<int>(std::ceil(s.mean_u - ru - 0.5)));
        s.x_max = std::min(w - 1, static_cast<int>(std::floor(s.mean_u + ru - 0.5)));
        s.y_min = std::max(0, static_cast<int>(std::ceil(s.mean_v - rv - 0.5)));
        s.y_max = std::min(h - 1, static_cast<int>(std::floor(s.mean_v + rv - 0.5)));
        if (s.x_min > s.x_max || s.y_min > s.y_max) continue;
        splats.push_back(s);
    }

    // Canonical order: ascending depth, ties by primitive index.
    std::sort(splats.begin(), splats.end(), [](const auto& a, const auto& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
    });

    // Bucket splat ids per pixel; filling in sorted order keeps each bucket
    // depth-sorted for free.
    const std::size_t n_px = static_cast<std::size_t>(w) * h;
    std::vector<std::uint32_t> counts(n_px + 1, 0);
    for (const auto& s : splats)
        for (int y = s.y_min; y <= s.y_max; ++y)
            for (int x = s.x_min; x <= s.x_max; ++x)
                ++counts[static_cast<std::size_t>(y) * w + x + 1];
    for (std::size_t i = 1; i <= n_px; ++i) counts[i] += counts[i - 1];
    std::vector<std::uint32_t> buckets(counts[n_px]);
    std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
    for (std::uint32_t si = 0; si < splats.size(); ++si) {
        const auto& s = splats[si];
        for (int y = s.y_min; y <= s.y_max; ++y)
            for (int x = s.x_min; x <= s.x_max; ++x)
                buckets[cursor[static_cast<std::size_t>(y) * w + x]++] = si;
    }

    auto composite_rows = [&](int y_begin, int y_end) {
        std::vector<double> feat_acc(d);
        for (int y = y_begin; y < y_end; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t px = static_cast<std::size_t>(y) * w + x;
                double transmittance = 1.0;
                double alpha_acc = 0.0, depth_acc = 0.0;
                double col_acc[3] = {0.0, 0.0, 0.0};
                std::fill(feat_acc.begin(), feat_acc.end(), 0.0);
                const double pu = x + 0.5, pv = y + 0.5;
                for (std::uint32_t bi = counts[px]; bi < counts[px + 1]; ++bi) {
                    const auto& s = splats[buckets[bi]];
                    const double du = pu - s.mean_u, dv = pv - s.mean_v;
                    double q = s.inv_a * du * du + 2.0 * s.inv_b * du * dv + s.inv_c * dv * dv;
                    if (q > kCutoffQ) continue;
                    if (q < 0.0) q = 0.0;
                    double falloff = std::min(std::exp(-0.5 * q), kFalloffClamp);
                    double a_eff = s.opacity * falloff;
                    double weight = a_eff * transmittance;
                    col_acc[0] += weight * s.color(0);
                    col_acc[1] += weight * s.color(1);
                    col_acc[2] += weight * s.color(2);
                    const Eigen::VectorXd& f = scene.primitives[s.index].feature;
                    for (int c = 0; c < d && c < f.size(); ++c) feat_acc[c] += weight * f(c);
                    depth_acc += weight * s.depth;
                    alpha_acc += weight;
                    transmittance *= 1.0 - a_eff;
                    if (transmittance < kMinTransmittance) break;
                }
                for (int c = 0; c < 3; ++c)
                    out.color.at(y, x, c) = col_acc[c] + transmittance * background(c);
                for (int c = 0; c < d; ++c) out.feature.at(y, x, c) = feat_acc[c];
                out.depth.at(y, x, 0) = depth_acc;
                out.alpha.at(y, x, 0) = alpha_acc;
            }
        }
    };

    n_threads = std::max(1, n_threads);
    if (n_threads == 1 || h < 2) {
        composite_rows(0, h);
    } else {
        std::vector<std::thread> workers;
        int per = (h + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            int y0 = t * per, y1 = std::min(h, y0 + per);
            if (y0 >= y1) break;
            workers.emplace_back(composite_rows, y0, y1);
        }
        for (auto& worker : workers) worker.join();
    }
    return out;
}

struct FeaturePca {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // D x D pixel-feature covariance
    Eigen::MatrixXd basis;       // D x 3, descending variance, sign-fixed
    Eigen::Vector3d variances;
    bool degenerate = false;     // exactly zero feature variance
};

/// Mean, covariance and leading three principal directions of the pixel
/// features. Sign convention: each component's largest-magnitude loading is
/// positive (ties resolved toward the lowest channel).
inline FeaturePca compute_feature_pca(const DenseMap& feature) {
    if (feature.channels < 3)
        throw ShapeMismatch("PCA preview needs at least 3 feature channels");
    const int d = feature.channels;
    const std::size_t n = static_cast<std::size_t>(feature.height) * feature.width;

    FeaturePca pca;
    pca.mean = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) pca.mean(c) += feature.data[i * d + c];
    pca.mean /= static_cast<double>(n);

    pca.covariance = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd f(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) f(c) = feature.data[i * d + c] - pca.mean(c);
        pca.covariance.noalias() += f * f.transpose();
    }
    pca.covariance /= static_cast<double>(n);
    pca.variances.setZero();

    if (pca.covariance.cwiseAbs().maxCoeff() == 0.0) {
        pca.degenerate = true;
        return pca;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pca.covariance);
    pca.basis.resize(d, 3);
    for (int k = 0; k < 3; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);  // descending eigenvalue
        pca.variances(k) = es.eigenvalues()(d - 1 - k);
        int peak = 0;
        for (int c = 1; c < d; ++c)
            if (std::abs(v(c)) > std::abs(v(peak))) peak = c;
        if (v(peak) < 0.0) v = -v;
        pca.basis.col(k) = v;
    }
    return pca;
}

/// Top-3 principal components of the pixel-feature matrix mapped affinely to
/// [0,1]^3. A constant feature map degenerates to mid-gray.
inline DenseMap render_feature_pca_preview(const DenseMap& feature) {
    FeaturePca pca = compute_feature_pca(feature);
    const int d = feature.channels;
    const std::size_t n = static_cast<std::size_t>(feature.height) * feature.width;
    DenseMap preview(feature.height, feature.width, 3, 0.5);
    if (pca.degenerate) return preview;

    Eigen::VectorXd f(d);
    Eigen::MatrixXd projected(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < d; ++c) f(c) = feature.data[i * d + c] - pca.mean(c);
        projected.row(i) = (pca.basis.transpose() * f).transpose();
    }
    for (int k = 0; k < 3; ++k) {
        double lo = projected.col(k).minCoeff();
        double hi = projected.col(k).maxCoeff();
        for (std::size_t i = 0; i < n; ++i)
            preview.data[i * 3 + k] = hi > lo ? (projected(i, k) - lo) / (hi - lo) : 0.5;
    }
    return preview;
}

}  // namespace splatsem
