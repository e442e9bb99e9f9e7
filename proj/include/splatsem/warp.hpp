// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"

namespace splatsem {

inline constexpr double kNormEps = 1e-12;  // zero-norm guard for cosine terms

struct WarpCoordinates {
    int height = 0, width = 0;
    std::vector<PixelCoord> coords;          // sampling coordinate in the context view
    std::vector<double> projected_depth;     // z of the transformed camera-frame point
    std::vector<std::uint8_t> valid;         // depth input > 0 and projected z > 0
};

/// Reprojects every target pixel center into the context view through the
/// target depth: x_c = project(K_c (R_rel * D_t K_t^-1 x_t + T_rel)).
inline WarpCoordinates warp_coordinates(const CameraView& target, const CameraView& context,
                                        const DenseMap& target_depth) {
    if (target_depth.channels != 1)
        throw ShapeMismatch("warp_coordinates expects single-channel depth");
    if (target_depth.height != target.height || target_depth.width != target.width)
        throw ShapeMismatch("depth map does not match the target view size");

    auto [r_rel, t_rel] = relative_pose(target, context);
    WarpCoordinates out;
    out.height = target.height;
    out.width = target.width;
    const std::size_t n = static_cast<std::size_t>(target.height) * target.width;
    out.coords.assign(n, PixelCoord{-1.0, -1.0});
    out.projected_depth.assign(n, 0.0);
    out.valid.assign(n, 0);

    const double fx_t = target.fx(), fy_t = target.fy(), cx_t = target.cx(), cy_t = target.cy();
    const double fx_c = context.fx(), fy_c = context.fy(), cx_c = context.cx(), cy_c = context.cy();
    std::size_t i = 0;
    for (int y = 0; y < target.height; ++y) {
        for (int x = 0; x < target.width; ++x, ++i) {
            double d = target_depth.at(y, x, 0);
            if (!(d > 0.0)) continue;
            Eigen::Vector3d p_t(d * (x + 0.5 - cx_t) / fx_t, d * (y + 0.5 - cy_t) / fy_t, d);
            Eigen::Vector3d p_c = r_rel * p_t + t_rel;
            if (p_c.z() <= 1e-8) continue;
            out.coords[i] = PixelCoord{fx_c * p_c.x() / p_c.z() + cx_c,
                                       fy_c * p_c.y() / p_c.z() + cy_c};
            out.projected_depth[i] = p_c.z();
            out.valid[i] = 1;
        }
    }
    return out;
}

struct WarpMask {
    int height = 0, width = 0;
    std::vector<std::uint8_t> valid;  // passed in-bounds AND depth-consistency
    int in_bounds_count = 0;
    int depth_consistent_count = 0;   // == number of valid pixels
};

struct WarpLossResult {
    double loss = 0.0;
    WarpMask mask;
    DenseMap grad_target_features;
    DenseMap grad_context_features;
};

/// Masked mean cosine distance between the target feature map and the
/// warped context features — one direction of the bidirectional warping
/// loss. Gradients flow through the cosine and through the bilinear
/// sampling weights into the context map; sampling coordinates are constants.
inline WarpLossResult warp_distance(const CameraView& target_view, const CameraView& context_view,
                                    const DenseMap& target_features,
                                    const DenseMap& context_features,
                                    const DenseMap& target_depth, const DenseMap& context_depth,
                                    double depth_tol) {
    if (!(depth_tol > 0.0)) throw NonPositiveTolerance("depth_tol must be > 0");
    if (target_features.channels != context_features.channels)
        throw ShapeMismatch("feature maps must share the channel count");
    if (target_features.height != target_view.height || target_features.width != target_view.width)
        throw ShapeMismatch("target features do not match the target view size");
    if (context_features.height != context_view.height ||
        context_features.width != context_view.width)
        throw ShapeMismatch("context features do not match the context view size");
    if (context_depth.channels != 1 || context_depth.height != context_view.height ||
        context_depth.width != context_view.width)
        throw ShapeMismatch("context depth does not match the context view size");

    const int d = target_features.channels;
    WarpCoordinates wc = warp_coordinates(target_view, context_view, target_depth);

    WarpLossResult out;
    out.mask.height = wc.height;
    out.mask.width = wc.width;
    out.mask.valid.assign(wc.valid.size(), 0);
    out.grad_target_features = DenseMap(target_features.height, target_features.width, d);
    out.grad_context_features = DenseMap(context_features.height, context_features.width, d);

    double loss_sum = 0.0;
    int n_valid = 0;
    Eigen::VectorXd f_t(d), f_c(d);
    std::size_t i = 0;
    for (int y = 0; y < wc.height; ++y) {
        for (int x = 0; x < wc.width; ++x, ++i) {
            if (!wc.valid[i]) continue;
            BilinearTap tap = bilinear_tap(context_features.width, context_features.height,
                                           wc.coords[i]);
            if (!tap.valid) continue;
            ++out.mask.in_bounds_count;

            double sampled_depth =
                tap.w00 * context_depth.at(tap.y0, tap.x0, 0) +
                tap.w10 * context_depth.at(tap.y0, tap.x1, 0) +
                tap.w01 * context_depth.at(tap.y1, tap.x0, 0) +
                tap.w11 * context_depth.at(tap.y1, tap.x1, 0);
            double z = wc.projected_depth[i];
            if (!(std::abs(z - sampled_depth) / z < depth_tol)) continue;
            ++out.mask.depth_consistent_count;
            out.mask.valid[i] = 1;
            ++n_valid;

            for (int c = 0; c < d; ++c) {
                f_t(c) = target_features.at(y, x, c);
                f_c(c) = tap.w00 * context_features.at(tap.y0, tap.x0, c) +
                         tap.w10 * context_features.at(tap.y0, tap.x1, c) +
                         tap.w01 * context_features.at(tap.y1, tap.x0, c) +
                         tap.w11 * context_features.at(tap.y1, tap.x1, c);
            }
            double na = f_t.norm(), nb = f_c.norm();
            if (na <= kNormEps || nb <= kNormEps) {
                loss_sum += 1.0;  // zero-norm: distance 1, zero gradient
                continue;
            }
            double cosv = f_t.dot(f_c) / (na * nb);
            loss_sum += 1.0 - cosv;

            Eigen::VectorXd grad_t = cosv / (na * na) * f_t - f_c / (na * nb);
            Eigen::VectorXd grad_c = cosv / (nb * nb) * f_c - f_t / (na * nb);
            for (int c = 0; c < d; ++c) {
                out.grad_target_features.at(y, x, c) += grad_t(c);
                out.grad_context_features.at(tap.y0, tap.x0, c) += tap.w00 * grad_c(c);
                out.grad_context_features.at(tap.y0, tap.x1, c) += tap.w10 * grad_c(c);
                out.grad_context_features.at(tap.y1, tap.x0, c) += tap.w01 * grad_c(c);
                out.grad_context_features.at(tap.y1, tap.x1, c) += tap.w11 * grad_c(c);
            }
        }
    }

    if (n_valid > 0) {
        double scale = 1.0 / n_valid;
        out.loss = loss_sum * scale;
        for (double& v : out.grad_target_features.data) v *= scale;
        for (double& v : out.grad_context_features.data) v *= scale;
    }
    return out;
}

struct ViewBundle {
    CameraView view;
    DenseMap features;
    DenseMap depth;
};

struct DirectedWarpTerm {
    int target = 0, context = 0;
    double loss = 0.0;
    int valid_px = 0;
};

struct WarpTotal {
    double loss = 0.0;
    std::vector<DirectedWarpTerm> terms;
};

/// Bidirectional sum over view pairs: each (t, c) entry contributes
/// L_dist(t, c) + L_dist(c, t).
inline WarpTotal warp_loss_total(std::span<const ViewBundle> bundles,
                                 std::span<const std::pair<int, int>> pairs,
                                 double depth_tol) {
    if (pairs.empty()) throw EmptyPairSet("warp_loss_total needs at least one pair");
    WarpTotal out;
    for (auto [t, c] : pairs) {
        if (t < 0 || c < 0 || t >= static_cast<int>(bundles.size()) ||
            c >= static_cast<int>(bundles.size()))
            throw ConfigError("pair index out of range");
        for (auto [a, b] : {std::pair{t, c}, std::pair{c, t}}) {
            WarpLossResult r = warp_distance(bundles[a].view, bundles[b].view,
                                             bundles[a].features, bundles[b].features,
                                             bundles[a].depth, bundles[b].depth, depth_tol);
            out.loss += r.loss;
            out.terms.push_back({a, b, r.loss, r.mask.depth_consistent_count});
        }
    }
    return out;
}

}  // namespace splatsem
