// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"
#include "splatsem/warp.hpp"  // kNormEps

namespace splatsem {

struct LossWeights {
    double lambda_lpips = 0.05;
    double lambda_feat = 0.1;
    double lambda_warp = 0.1;
    double lambda_depth = 1.0;
    double lambda_pose = 10.0;
    double huber_delta = 1.0;
    double depth_mask_fraction = 0.9;
};

inline void validate_weights(const LossWeights& w) {
    if (w.lambda_lpips < 0 || w.lambda_feat < 0 || w.lambda_warp < 0 || w.lambda_depth < 0 ||
        w.lambda_pose < 0 || w.huber_delta < 0)
        throw ConfigError("loss weights must be >= 0");
    if (!(w.depth_mask_fraction > 0.0) || w.depth_mask_fraction > 1.0)
        throw ConfigError("depth_mask_fraction must lie in (0, 1]");
}

/// Optional perceptual term: maps (rendered, target) to a score and its
/// gradient with respect to the rendered image. Null means score 0.
using PerceptualScorer =
    std::function<std::pair<double, DenseMap>(const DenseMap&, const DenseMap&)>;

struct ScalarLossResult {
    double loss = 0.0;
    DenseMap grad;  // with respect to the first (rendered) argument
};

/// Mean absolute color error plus an optional weighted perceptual score.
inline ScalarLossResult rgb_loss(const DenseMap& rendered, const DenseMap& target,
                                 const PerceptualScorer& perceptual = nullptr,
                                 double lambda_lpips = 0.05) {
    if (rendered.channels != 3 || !rendered.same_shape(target))
        throw ShapeMismatch("rgb_loss expects two 3-channel maps of equal size");
    ScalarLossResult out;
    out.grad = DenseMap(rendered.height, rendered.width, 3);
    const std::size_t n = rendered.data.size();
    double scale = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double diff = rendered.data[i] - target.data[i];
        acc += std::abs(diff);
        out.grad.data[i] = (diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0));
    }
    out.loss = acc * scale;
    if (perceptual && lambda_lpips != 0.0) {
        auto [score, grad] = perceptual(rendered, target);
        if (!grad.same_shape(rendered))
            throw ShapeMismatch("perceptual scorer returned a mismatched gradient");
        out.loss += lambda_lpips * score;
        for (std::size_t i = 0; i < n; ++i) out.grad.data[i] += lambda_lpips * grad.data[i];
    }
    return out;
}

/// Mean over pixels of (1 - cosine) between the two feature maps.
inline ScalarLossResult feature_loss(const DenseMap& rendered_feat, const DenseMap& target_feat) {
    if (!rendered_feat.same_shape(target_feat))
        throw ShapeMismatch("feature_loss expects maps of equal shape");
    const int d = rendered_feat.channels;
    const int n_px = rendered_feat.height * rendered_feat.width;
    ScalarLossResult out;
    out.grad = DenseMap(rendered_feat.height, rendered_feat.width, d);
    double acc = 0.0;
    Eigen::VectorXd a(d), b(d);
    for (int y = 0; y < rendered_feat.height; ++y) {
        for (int x = 0; x < rendered_feat.width; ++x) {
            for (int c = 0; c < d; ++c) {
                a(c) = rendered_feat.at(y, x, c);
                b(c) = target_feat.at(y, x, c);
            }
            double na = a.norm(), nb = b.norm();
            if (na <= kNormEps || nb <= kNormEps) {
                acc += 1.0;  // zero-norm guard: distance 1, zero gradient
                continue;
            }
            double cosv = a.dot(b) / (na * nb);
            acc += 1.0 - cosv;
            Eigen::VectorXd g = cosv / (na * na) * a - b / (na * nb);
            for (int c = 0; c < d; ++c) out.grad.at(y, x, c) = g(c) / n_px;
        }
    }
    out.loss = acc / n_px;
    return out;
}

struct DepthLossResult {
    double loss = 0.0;
    DenseMap grad;                    // zero off-mask
    std::vector<std::uint8_t> mask;   // row-major H*W
    int n_masked = 0;
};

/// Squared depth error restricted to the most confident pixels: the mask keeps
/// every pixel whose confidence reaches the (1 - mask_fraction) quantile
/// (ties admitted), so at least mask_fraction of the finite-confidence pixels
/// survive.
inline DepthLossResult depth_distill_loss(const DenseMap& rendered, const DenseMap& pseudo,
                                          const DenseMap& confidence, double mask_fraction) {
    if (rendered.channels != 1 || !rendered.same_shape(pseudo) ||
        !rendered.same_shape(confidence))
        throw ShapeMismatch("depth_distill_loss expects three single-channel maps of equal size");
    if (!(mask_fraction > 0.0) || mask_fraction > 1.0)
        throw ConfigError("mask_fraction must lie in (0, 1]");

    std::vector<double> finite_conf;
    finite_conf.reserve(confidence.data.size());
    for (double c : confidence.data)
        if (std::isfinite(c)) finite_conf.push_back(c);
    if (finite_conf.empty()) throw EmptyMask("no finite confidence values");

    std::sort(finite_conf.begin(), finite_conf.end());
    std::size_t cut = static_cast<std::size_t>(
        std::floor((1.0 - mask_fraction) * static_cast<double>(finite_conf.size())));
    cut = std::min(cut, finite_conf.size() - 1);
    double threshold = finite_conf[cut];

    DepthLossResult out;
    out.grad = DenseMap(rendered.height, rendered.width, 1);
    out.mask.assign(rendered.data.size(), 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        double c = confidence.data[i];
        if (!(std::isfinite(c) && c >= threshold)) continue;
        out.mask[i] = 1;
        ++out.n_masked;
        acc += (rendered.data[i] - pseudo.data[i]) * (rendered.data[i] - pseudo.data[i]);
    }
    out.loss = acc / out.n_masked;
    double scale = 2.0 / out.n_masked;
    for (std::size_t i = 0; i < rendered.data.size(); ++i)
        if (out.mask[i]) out.grad.data[i] = scale * (rendered.data[i] - pseudo.data[i]);
    return out;
}

struct PoseLossResult {
    double loss = 0.0;
    std::vector<Eigen::VectorXd> grad;  // with respect to pred
};

/// Mean over encodings of the elementwise Huber penalty on (pred - pseudo):
/// quadratic within huber_delta, linear outside.
inline PoseLossResult pose_distill_loss(const std::vector<Eigen::VectorXd>& pred,
                                        const std::vector<Eigen::VectorXd>& pseudo,
                                        double huber_delta) {
    if (pred.size() != pseudo.size() || pred.empty())
        throw LengthMismatch("pose lists must be nonempty and equal length");
    PoseLossResult out;
    out.grad.reserve(pred.size());
    double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != pseudo[i].size())
            throw LengthMismatch("pose encodings must share their dimension");
        Eigen::VectorXd g = Eigen::VectorXd::Zero(pred[i].size());
        for (Eigen::Index j = 0; j < pred[i].size(); ++j) {
            double r = pred[i](j) - pseudo[i](j);
            if (std::abs(r) <= huber_delta) {
                out.loss += 0.5 * r * r / n;
                g(j) = r / n;
            } else {
                out.loss += huber_delta * (std::abs(r) - 0.5 * huber_delta) / n;
                g(j) = (r > 0 ? huber_delta : -huber_delta) / n;
            }
        }
        out.grad.push_back(std::move(g));
    }
    return out;
}

struct LossReport {
    double rgb = 0, feat = 0, warp = 0, depth = 0, pose = 0;
    double total = 0;
    // d(total)/d(component): the configured weights, recorded for callers
    // chaining gradients through the composition.
    double d_rgb = 1, d_feat = 0, d_warp = 0, d_depth = 0, d_pose = 0;
};

inline LossReport total_loss(double rgb, double feat, double warp, double depth, double pose,
                             const LossWeights& weights = {}) {
    validate_weights(weights);
    for (double v : {rgb, feat, warp, depth, pose})
        if (!std::isfinite(v)) throw NonFiniteComponent("loss components must be finite");
    LossReport r;
    r.rgb = rgb;
    r.feat = feat;
    r.warp = warp;
    r.depth = depth;
    r.pose = pose;
    r.total = rgb + weights.lambda_feat * feat + weights.lambda_warp * warp +
              weights.lambda_depth * depth + weights.lambda_pose * pose;
    r.d_feat = weights.lambda_feat;
    r.d_warp = weights.lambda_warp;
    r.d_depth = weights.lambda_depth;
    r.d_pose = weights.lambda_pose;
    return r;
}

}  // namespace splatsem
