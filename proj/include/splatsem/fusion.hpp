// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "splatsem/errors.hpp"

namespace splatsem {

/// Rows are tokens, columns are the model dimension.
using TokenMatrix = Eigen::MatrixXd;

struct FusionParams {
    Eigen::MatrixXd w_q;  // d   x d_k
    Eigen::MatrixXd w_k;  // d_s x d_k
    Eigen::MatrixXd w_v;  // d_s x d_v
};

namespace detail {

inline void check_fusion_shapes(const TokenMatrix& geometry, const TokenMatrix& semantic,
                                const FusionParams& params) {
    if (params.w_q.cols() != params.w_k.cols() || params.w_q.cols() <= 0)
        throw DimensionMismatch("W_Q and W_K must share a positive key dimension");
    if (geometry.cols() != params.w_q.rows())
        throw DimensionMismatch("geometry token dimension does not match W_Q rows");
    if (semantic.cols() != params.w_k.rows() || semantic.cols() != params.w_v.rows())
        throw DimensionMismatch("semantic token dimension does not match W_K/W_V rows");
    if (semantic.rows() == 0) throw DimensionMismatch("semantic token set must be nonempty");
    if (!geometry.allFinite() || !semantic.allFinite() || !params.w_q.allFinite() ||
        !params.w_k.allFinite() || !params.w_v.allFinite())
        throw NonFiniteComponent("fusion inputs must be finite");
}

/// Row-wise softmax with per-row max subtraction.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double row_max = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - row_max).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

}  // namespace detail

struct FusionResult {
    TokenMatrix output;        // N_p x d_v
    Eigen::MatrixXd attention;  // N_p x N_s, rows sum to 1
};

/// Cross-attention where geometry tokens query the semantic tokens:
/// Softmax((X W_Q)(S W_K)^T / sqrt(d_k)) (S W_V). Also returns the attention
/// matrix for diagnostics.
inline FusionResult fuse_with_attention(const TokenMatrix& geometry, const TokenMatrix& semantic,
                                        const FusionParams& params) {
    detail::check_fusion_shapes(geometry, semantic, params);
    double scale = 1.0 / std::sqrt(static_cast<double>(params.w_q.cols()));
    Eigen::MatrixXd q = geometry * params.w_q;
    Eigen::MatrixXd k = semantic * params.w_k;
    Eigen::MatrixXd v = semantic * params.w_v;
    FusionResult res;
    res.attention = detail::softmax_rows(q * k.transpose() * scale);
    res.output = res.attention * v;
    return res;
}

inline TokenMatrix fuse(const TokenMatrix& geometry, const TokenMatrix& semantic,
                        const FusionParams& params) {
    return fuse_with_attention(geometry, semantic, params).output;
}

struct FusionGradients {
    TokenMatrix grad_geometry;
    TokenMatrix grad_semantic;
    Eigen::MatrixXd grad_w_q, grad_w_k, grad_w_v;
};

/// Exact gradients of fuse() contracted with upstream_grad, for all five
/// inputs (both token matrices and the three projections).
inline FusionGradients fuse_backward(const TokenMatrix& geometry, const TokenMatrix& semantic,
                                     const FusionParams& params,
                                     const Eigen::MatrixXd& upstream_grad) {
    detail::check_fusion_shapes(geometry, semantic, params);
    if (upstream_grad.rows() != geometry.rows() || upstream_grad.cols() != params.w_v.cols())
        throw DimensionMismatch("upstream gradient shape does not match the fuse output");

    double scale = 1.0 / std::sqrt(static_cast<double>(params.w_q.cols()));
    Eigen::MatrixXd q = geometry * params.w_q;
    Eigen::MatrixXd k = semantic * params.w_k;
    Eigen::MatrixXd v = semantic * params.w_v;
    Eigen::MatrixXd attn = detail::softmax_rows(q * k.transpose() * scale);

    Eigen::MatrixXd grad_v = attn.transpose() * upstream_grad;
    Eigen::MatrixXd grad_attn = upstream_grad * v.transpose();
    // Softmax Jacobian per row: dL_i = A_i .* (dA_i - <dA_i, A_i>).
    Eigen::MatrixXd grad_logits(attn.rows(), attn.cols());
    for (Eigen::Index i = 0; i < attn.rows(); ++i) {
        double dot = grad_attn.row(i).dot(attn.row(i));
        grad_logits.row(i) = (attn.row(i).array() * (grad_attn.row(i).array() - dot)).matrix();
    }
    Eigen::MatrixXd grad_q = grad_logits * k * scale;
    Eigen::MatrixXd grad_k = grad_logits.transpose() * q * scale;

    FusionGradients g;
    g.grad_w_q = geometry.transpose() * grad_q;
    g.grad_w_k = semantic.transpose() * grad_k;
    g.grad_w_v = semantic.transpose() * grad_v;
    g.grad_geometry = grad_q * params.w_q.transpose();
    g.grad_semantic = grad_k * params.w_k.transpose() + grad_v * params.w_v.transpose();
    return g;
}

}  // namespace splatsem
