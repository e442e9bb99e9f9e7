// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference implementations used only by the test suite. Every
// routine here is written as plain nested scalar loops against the domain
// types; nothing is shared with the operational code paths they check, so an
// arithmetic or indexing bug in either side surfaces as a disagreement.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "splatsem/camera.hpp"
#include "splatsem/dense_map.hpp"
#include "splatsem/gaussian.hpp"

namespace splatsem::oracle {

// ---------------------------------------------------------------------------
// Small scalar linear algebra, local to the oracles.

inline void mat3_mul_vec(const double m[3][3], const double v[3], double out[3]) {
    for (int i = 0; i < 3; ++i)
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
}

inline void mat3_from(const Eigen::Matrix3d& src, double dst[3][3]) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) dst[i][j] = src(i, j);
}

// ---------------------------------------------------------------------------
// Warp oracles.

struct OracleWarpCoords {
    std::vector<PixelCoord> coords;
    std::vector<double> projected_depth;
    std::vector<std::uint8_t> valid;
};

inline OracleWarpCoords oracle_warp_coordinates(const CameraView& target,
                                                const CameraView& context,
                                                const DenseMap& target_depth) {
    double rt[3][3], rc[3][3], rrel[3][3], trel[3];
    mat3_from(target.rotation, rt);
    mat3_from(context.rotation, rc);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            rrel[i][j] = 0.0;
            for (int k = 0; k < 3; ++k) rrel[i][j] += rc[i][k] * rt[j][k];  // Rc * Rt^T
        }
    double tt[3] = {target.translation(0), target.translation(1), target.translation(2)};
    double rtt[3];
    mat3_mul_vec(rrel, tt, rtt);
    for (int i = 0; i < 3; ++i) trel[i] = context.translation(i) - rtt[i];

    const double fx_t = target.intrinsics(0, 0), fy_t = target.intrinsics(1, 1);
    const double cx_t = target.intrinsics(0, 2), cy_t = target.intrinsics(1, 2);
    const double fx_c = context.intrinsics(0, 0), fy_c = context.intrinsics(1, 1);
    const double cx_c = context.intrinsics(0, 2), cy_c = context.intrinsics(1, 2);

    OracleWarpCoords out;
    std::size_t n = static_cast<std::size_t>(target.height) * target.width;
    out.coords.assign(n, PixelCoord{-1.0, -1.0});
    out.projected_depth.assign(n, 0.0);
    out.valid.assign(n, 0);
    std::size_t i = 0;
    for (int y = 0; y < target.height; ++y) {
        for (int x = 0; x < target.width; ++x, ++i) {
            double d = target_depth.data[i];
            if (!(d > 0.0)) continue;
            double pt[3] = {d * (x + 0.5 - cx_t) / fx_t, d * (y + 0.5 - cy_t) / fy_t, d};
            double pc[3];
            mat3_mul_vec(rrel, pt, pc);
            for (int k = 0; k < 3; ++k) pc[k] += trel[k];
            if (pc[2] <= 1e-8) continue;
            out.coords[i] = PixelCoord{fx_c * pc[0] / pc[2] + cx_c,
                                       fy_c * pc[1] / pc[2] + cy_c};
            out.projected_depth[i] = pc[2];
            out.valid[i] = 1;
        }
    }
    return out;
}

struct OracleWarpResult {
    double loss = 0.0;
    DenseMap grad_target;
    DenseMap grad_context;
    std::vector<std::uint8_t> valid;
    int n_valid = 0;
};

inline OracleWarpResult oracle_warp_distance(const CameraView& target_view,
                                             const CameraView& context_view,
                                             const DenseMap& target_features,
                                             const DenseMap& context_features,
                                             const DenseMap& target_depth,
                                             const DenseMap& context_depth, double depth_tol) {
    const int d = target_features.channels;
    const int cw = context_features.width, ch = context_features.height;
    OracleWarpCoords wc = oracle_warp_coordinates(target_view, context_view, target_depth);

    OracleWarpResult out;
    out.grad_target = DenseMap(target_features.height, target_features.width, d);
    out.grad_context = DenseMap(ch, cw, d);
    out.valid.assign(wc.valid.size(), 0);

    double loss_sum = 0.0;
    std::size_t i = 0;
    for (int y = 0; y < target_features.height; ++y) {
        for (int x = 0; x < target_features.width; ++x, ++i) {
            if (!wc.valid[i]) continue;
            double sx = wc.coords[i].u - 0.5, sy = wc.coords[i].v - 0.5;
            if (!(sx >= 0.0 && sx <= cw - 1 && sy >= 0.0 && sy <= ch - 1)) continue;
            int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            int x1 = x0 + 1 <= cw - 1 ? x0 + 1 : x0;
            int y1 = y0 + 1 <= ch - 1 ? y0 + 1 : y0;
            double fx = sx - x0, fy = sy - y0;
            double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
            double w01 = (1 - fx) * fy, w11 = fx * fy;

            double sampled_d = w00 * context_depth.at(y0, x0, 0) +
                               w10 * context_depth.at(y0, x1, 0) +
                               w01 * context_depth.at(y1, x0, 0) +
                               w11 * context_depth.at(y1, x1, 0);
            double z = wc.projected_depth[i];
            if (!(std::abs(z - sampled_d) / z < depth_tol)) continue;
            out.valid[i] = 1;
            ++out.n_valid;

            std::vector<double> a(d), b(d);
            double dot = 0, na2 = 0, nb2 = 0;
            for (int c = 0; c < d; ++c) {
                a[c] = target_features.at(y, x, c);
                b[c] = w00 * context_features.at(y0, x0, c) +
                       w10 * context_features.at(y0, x1, c) +
                       w01 * context_features.at(y1, x0, c) +
                       w11 * context_features.at(y1, x1, c);
                dot += a[c] * b[c];
                na2 += a[c] * a[c];
                nb2 += b[c] * b[c];
            }
            double na = std::sqrt(na2), nb = std::sqrt(nb2);
            if (na <= 1e-12 || nb <= 1e-12) {
                loss_sum += 1.0;
                continue;
            }
            double cosv = dot / (na * nb);
            loss_sum += 1.0 - cosv;
            for (int c = 0; c < d; ++c) {
                double ga = cosv * a[c] / na2 - b[c] / (na * nb);
                double gb = cosv * b[c] / nb2 - a[c] / (na * nb);
                out.grad_target.at(y, x, c) += ga;
                out.grad_context.at(y0, x0, c) += w00 * gb;
                out.grad_context.at(y0, x1, c) += w10 * gb;
                out.grad_context.at(y1, x0, c) += w01 * gb;
                out.grad_context.at(y1, x1, c) += w11 * gb;
            }
        }
    }
    if (out.n_valid > 0) {
        out.loss = loss_sum / out.n_valid;
        for (double& v : out.grad_target.data) v /= out.n_valid;
        for (double& v : out.grad_context.data) v /= out.n_valid;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Voxelizer oracles: hash-free grouping by linear key comparison.

struct OracleVoxel {
    std::array<std::int64_t, 3> key{};
    std::vector<int> members;
    std::vector<double> distances;
    std::vector<double> weights;
    GaussianPrimitive merged;
};

inline std::array<std::int64_t, 3> oracle_voxel_key(const Eigen::Vector3d& center, double eps) {
    return {static_cast<std::int64_t>(std::ceil(center(0) / eps)),
            static_cast<std::int64_t>(std::ceil(center(1) / eps)),
            static_cast<std::int64_t>(std::ceil(center(2) / eps))};
}

inline std::vector<OracleVoxel> oracle_group(const GaussianScene& scene, double eps) {
    std::vector<OracleVoxel> cells;
    for (int i = 0; i < static_cast<int>(scene.primitives.size()); ++i) {
        auto key = oracle_voxel_key(scene.primitives[i].center, eps);
        bool placed = false;
        for (OracleVoxel& cell : cells) {
            if (cell.key == key) {
                cell.members.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) {
            OracleVoxel cell;
            cell.key = key;
            cell.members.push_back(i);
            cells.push_back(std::move(cell));
        }
    }
    std::sort(cells.begin(), cells.end(),
              [](const OracleVoxel& a, const OracleVoxel& b) { return a.key < b.key; });
    return cells;
}

inline void oracle_fill_cell(OracleVoxel& cell, const GaussianScene& scene, double lambda,
                             bool use_distance) {
    const int d = scene.feature_dim;
    const int m = static_cast<int>(cell.members.size());
    // Prototype: plain mean feature.
    std::vector<double> proto(d, 0.0);
    for (int g : cell.members)
        for (int c = 0; c < d; ++c) proto[c] += scene.primitives[g].feature(c);
    for (int c = 0; c < d; ++c) proto[c] /= m;
    double np2 = 0.0;
    for (int c = 0; c < d; ++c) np2 += proto[c] * proto[c];
    double np = std::sqrt(np2);

    cell.distances.assign(m, 0.0);
    for (int k = 0; k < m; ++k) {
        const Eigen::VectorXd& f = scene.primitives[cell.members[k]].feature;
        double dot = 0, nf2 = 0;
        for (int c = 0; c < d; ++c) {
            dot += f(c) * proto[c];
            nf2 += f(c) * f(c);
        }
        double nf = std::sqrt(nf2);
        cell.distances[k] = (nf <= 1e-12 || np <= 1e-12) ? 1.0 : 1.0 - dot / (nf * np);
    }

    cell.weights.assign(m, 0.0);
    double denom = 0.0;
    for (int k = 0; k < m; ++k) {
        double logit = scene.primitives[cell.members[k]].confidence;
        if (use_distance) logit -= lambda * cell.distances[k];
        cell.weights[k] = std::exp(logit);
        denom += cell.weights[k];
    }
    for (int k = 0; k < m; ++k) cell.weights[k] /= denom;

    const int n_sh = (scene.sh_degree + 1) * (scene.sh_degree + 1);
    GaussianPrimitive& mg = cell.merged;
    mg.center.setZero();
    mg.covariance.setZero();
    mg.sh_color = Eigen::MatrixX3d::Zero(n_sh, 3);
    mg.opacity = 0.0;
    mg.confidence = 0.0;
    mg.feature = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < m; ++k) {
        const GaussianPrimitive& p = scene.primitives[cell.members[k]];
        double w = cell.weights[k];
        for (int c = 0; c < 3; ++c) mg.center(c) += w * p.center(c);
        for (int r = 0; r < n_sh; ++r)
            for (int c = 0; c < 3; ++c) mg.sh_color(r, c) += w * p.sh_color(r, c);
        mg.opacity += w * p.opacity;
        mg.confidence += w * p.confidence;
        for (int c = 0; c < d; ++c) mg.feature(c) += w * p.feature(c);
    }
    for (int k = 0; k < m; ++k) {
        const GaussianPrimitive& p = scene.primitives[cell.members[k]];
        double w = cell.weights[k];
        double delta[3] = {p.center(0) - mg.center(0), p.center(1) - mg.center(1),
                           p.center(2) - mg.center(2)};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                mg.covariance(r, c) += w * (p.covariance(r, c) + delta[r] * delta[c]);
    }
}

/// Full reference voxelization: group, distance, weight, merge.
inline std::vector<OracleVoxel> oracle_voxelize(const GaussianScene& scene, double eps,
                                                double lambda) {
    std::vector<OracleVoxel> cells = oracle_group(scene, eps);
    for (OracleVoxel& cell : cells) oracle_fill_cell(cell, scene, lambda, true);
    return cells;
}

/// Confidence-only reference: softmax over confidences alone, no semantic
/// term anywhere in the weight computation.
inline std::vector<OracleVoxel> oracle_confidence_only_aggregate(const GaussianScene& scene,
                                                                 double eps) {
    std::vector<OracleVoxel> cells = oracle_group(scene, eps);
    for (OracleVoxel& cell : cells) oracle_fill_cell(cell, scene, 0.0, false);
    return cells;
}

// ---------------------------------------------------------------------------
// Attention oracle: explicit triple loops, softmax without stabilization.

inline Eigen::MatrixXd oracle_attention(const Eigen::MatrixXd& x, const Eigen::MatrixXd& s,
                                        const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk,
                                        const Eigen::MatrixXd& wv) {
    const int n = static_cast<int>(x.rows()), m = static_cast<int>(s.rows());
    const int dk = static_cast<int>(wq.cols()), dv = static_cast<int>(wv.cols());
    auto matmul = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.cols());
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < b.cols(); ++j)
                for (int k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
        return out;
    };
    Eigen::MatrixXd q = matmul(x, wq), k = matmul(s, wk), v = matmul(s, wv);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, dv);
    double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (int i = 0; i < n; ++i) {
        std::vector<double> e(m);
        double denom = 0.0;
        for (int j = 0; j < m; ++j) {
            double logit = 0.0;
            for (int t = 0; t < dk; ++t) logit += q(i, t) * k(j, t);
            e[j] = std::exp(logit * scale);
            denom += e[j];
        }
        for (int j = 0; j < m; ++j)
            for (int t = 0; t < dv; ++t) out(i, t) += e[j] / denom * v(j, t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Compositing oracle: per-pixel loop over every primitive, no bounding boxes,
// no buckets. Small scenes only.

inline void oracle_sh_color(int degree, const Eigen::MatrixX3d& sh, const double dir[3],
                            double out[3]) {
    const double c0 = 0.28209479177387814;
    const double c1 = 0.4886025119029199;
    const double c2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
    const double c3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};
    double x = dir[0], y = dir[1], z = dir[2];
    for (int c = 0; c < 3; ++c) out[c] = c0 * sh(0, c);
    if (degree < 1) return;
    for (int c = 0; c < 3; ++c)
        out[c] += c1 * (-y * sh(1, c) + z * sh(2, c) - x * sh(3, c));
    if (degree < 2) return;
    double xx = x * x, yy = y * y, zz = z * z;
    for (int c = 0; c < 3; ++c)
        out[c] += c2[0] * x * y * sh(4, c) + c2[1] * y * z * sh(5, c) +
                  c2[2] * (2 * zz - xx - yy) * sh(6, c) + c2[3] * x * z * sh(7, c) +
                  c2[4] * (xx - yy) * sh(8, c);
    if (degree < 3) return;
    for (int c = 0; c < 3; ++c)
        out[c] += c3[0] * y * (3 * xx - yy) * sh(9, c) + c3[1] * x * y * z * sh(10, c) +
                  c3[2] * y * (4 * zz - xx - yy) * sh(11, c) +
                  c3[3] * z * (2 * zz - 3 * xx - 3 * yy) * sh(12, c) +
                  c3[4] * x * (4 * zz - xx - yy) * sh(13, c) +
                  c3[5] * z * (xx - yy) * sh(14, c) + c3[6] * x * (xx - 3 * yy) * sh(15, c);
}

struct OracleRender {
    DenseMap color, feature, depth, alpha;
    DenseMap residual;  // leftover transmittance per pixel
};

inline OracleRender oracle_compositing(const GaussianScene& scene, const CameraView& view,
                                       const Eigen::Vector3d& background) {
    const int w = view.width, h = view.height;
    const int d = std::max(scene.feature_dim, 1);
    OracleRender out{DenseMap(h, w, 3), DenseMap(h, w, d), DenseMap(h, w, 1),
                     DenseMap(h, w, 1), DenseMap(h, w, 1, 1.0)};

    struct Proj {
        bool ok = false;
        double mu, mv, ia, ib, ic, z;
        double color[3];
        int index;
    };
    double rot[3][3];
    mat3_from(view.rotation, rot);
    const double fx = view.intrinsics(0, 0), fy = view.intrinsics(1, 1);
    const double cx = view.intrinsics(0, 2), cy = view.intrinsics(1, 2);
    // camera center: -R^T * T
    double cam[3];
    for (int i = 0; i < 3; ++i) {
        cam[i] = 0.0;
        for (int j = 0; j < 3; ++j) cam[i] -= rot[j][i] * view.translation(j);
    }

    std::vector<Proj> projs(scene.primitives.size());
    for (std::size_t g = 0; g < scene.primitives.size(); ++g) {
        const GaussianPrimitive& p = scene.primitives[g];
        double pw[3] = {p.center(0), p.center(1), p.center(2)};
        double t[3];
        mat3_mul_vec(rot, pw, t);
        for (int i = 0; i < 3; ++i) t[i] += view.translation(i);
        if (t[2] <= 0.01) continue;

        // M = R * Sigma * R^T, scalar
        double rs[3][3], m3[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                rs[i][j] = 0.0;
                for (int k = 0; k < 3; ++k) rs[i][j] += rot[i][k] * p.covariance(k, j);
            }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                m3[i][j] = 0.0;
                for (int k = 0; k < 3; ++k) m3[i][j] += rs[i][k] * rot[j][k];
            }
        double iz = 1.0 / t[2];
        double jac[2][3] = {{fx * iz, 0.0, -fx * t[0] * iz * iz},
                            {0.0, fy * iz, -fy * t[1] * iz * iz}};
        double jm[2][3];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) {
                jm[i][j] = 0.0;
                for (int k = 0; k < 3; ++k) jm[i][j] += jac[i][k] * m3[k][j];
            }
        double v2[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                v2[i][j] = 0.0;
                for (int k = 0; k < 3; ++k) v2[i][j] += jm[i][k] * jac[j][k];
            }
        v2[0][0] += 0.3;
        v2[1][1] += 0.3;
        double det = v2[0][0] * v2[1][1] - v2[0][1] * v2[1][0];
        if (det < 1e-12) continue;

        Proj& pr = projs[g];
        pr.ok = true;
        pr.mu = fx * t[0] / t[2] + cx;
        pr.mv = fy * t[1] / t[2] + cy;
        pr.ia = v2[1][1] / det;
        pr.ib = -v2[0][1] / det;
        pr.ic = v2[0][0] / det;
        pr.z = t[2];
        pr.index = static_cast<int>(g);
        double dir[3] = {pw[0] - cam[0], pw[1] - cam[1], pw[2] - cam[2]};
        double nn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
        if (nn > 0)
            for (double& c : dir) c /= nn;
        oracle_sh_color(scene.sh_degree, p.sh_color, dir, pr.color);
    }

    std::vector<int> order;
    for (std::size_t g = 0; g < projs.size(); ++g)
        if (projs[g].ok) order.push_back(static_cast<int>(g));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return projs[a].z != projs[b].z ? projs[a].z < projs[b].z : a < b;
    });

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double trans = 1.0, alpha = 0.0, depth = 0.0;
            double col[3] = {0, 0, 0};
            std::vector<double> feat(d, 0.0);
            for (int gi : order) {
                const Proj& pr = projs[gi];
                double du = x + 0.5 - pr.mu, dv = y + 0.5 - pr.mv;
                double q = pr.ia * du * du + 2.0 * pr.ib * du * dv + pr.ic * dv * dv;
                if (q > 9.0) continue;
                double falloff = std::exp(-0.5 * q);
                if (falloff > 0.99) falloff = 0.99;
                double a_eff = scene.primitives[gi].opacity * falloff;
                double weight = a_eff * trans;
                for (int c = 0; c < 3; ++c) col[c] += weight * pr.color[c];
                const Eigen::VectorXd& f = scene.primitives[gi].feature;
                for (int c = 0; c < d && c < f.size(); ++c) feat[c] += weight * f(c);
                depth += weight * pr.z;
                alpha += weight;
                trans *= 1.0 - a_eff;
                if (trans < 1e-4) break;
            }
            for (int c = 0; c < 3; ++c)
                out.color.at(y, x, c) = col[c] + trans * background(c);
            for (int c = 0; c < d; ++c) out.feature.at(y, x, c) = feat[c];
            out.depth.at(y, x, 0) = depth;
            out.alpha.at(y, x, 0) = alpha;
            out.residual.at(y, x, 0) = trans;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigensolver for symmetric matrices (reference for the PCA
// path, which uses a different algorithm).

struct OracleEigen {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // columns match values
};

inline OracleEigen oracle_jacobi_eigen(const Eigen::MatrixXd& sym) {
    const int n = static_cast<int>(sym.rows());
    std::vector<std::vector<double>> a(n, std::vector<double>(n));
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        v[i][i] = 1.0;
        for (int j = 0; j < n; ++j) a[i][j] = sym(i, j);
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-30) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });
    OracleEigen out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (int k = 0; k < n; ++k) {
        out.values(k) = a[idx[k]][idx[k]];
        for (int r = 0; r < n; ++r) out.vectors(r, k) = v[r][idx[k]];
    }
    return out;
}

}  // namespace splatsem::oracle
