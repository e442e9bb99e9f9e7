// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "splatsem/errors.hpp"
#include "splatsem/gaussian.hpp"
#include "splatsem/warp.hpp"  // kNormEps

namespace splatsem {

using VoxelKey = std::array<std::int64_t, 3>;

struct VoxelCell {
    VoxelKey key{};
    std::vector<int> members;       // ascending scene indices
    Eigen::VectorXd prototype;      // unweighted mean of member features
    std::vector<double> weights;    // empty until fusion_weights
};

struct VoxelTable {
    double voxel_size = 0.0;
    std::vector<VoxelCell> cells;   // ascending lexicographic key order
    std::vector<int> cell_of;       // scene index -> cell index
};

/// Quantizes centers to voxel keys (elementwise ceiling of center / voxel_size)
/// and groups primitives per key. Prototypes are filled; weights are not.
inline VoxelTable assign_voxels(const GaussianScene& scene, double voxel_size) {
    if (!(voxel_size > 0.0)) throw NonPositiveVoxelSize("voxel_size must be > 0");

    const int n = static_cast<int>(scene.primitives.size());
    std::vector<std::pair<VoxelKey, int>> keyed(n);
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d& c = scene.primitives[i].center;
        keyed[i] = {VoxelKey{static_cast<std::int64_t>(std::ceil(c.x() / voxel_size)),
                             static_cast<std::int64_t>(std::ceil(c.y() / voxel_size)),
                             static_cast<std::int64_t>(std::ceil(c.z() / voxel_size))},
                    i};
    }
    std::sort(keyed.begin(), keyed.end());

    VoxelTable table;
    table.voxel_size = voxel_size;
    table.cell_of.assign(n, -1);
    for (int i = 0; i < n;) {
        VoxelCell cell;
        cell.key = keyed[i].first;
        int j = i;
        while (j < n && keyed[j].first == cell.key) cell.members.push_back(keyed[j++].second);
        cell.prototype = Eigen::VectorXd::Zero(scene.feature_dim);
        for (int g : cell.members) cell.prototype += scene.primitives[g].feature;
        cell.prototype /= static_cast<double>(cell.members.size());
        for (int g : cell.members) table.cell_of[g] = static_cast<int>(table.cells.size());
        table.cells.push_back(std::move(cell));
        i = j;
    }
    return table;
}

/// Per-primitive cosine distance to the prototype of its voxel.
inline std::vector<double> semantic_distances(const VoxelTable& table,
                                              const GaussianScene& scene) {
    std::vector<double> dist(scene.primitives.size(), 0.0);
    for (const VoxelCell& cell : table.cells) {
        double np = cell.prototype.norm();
        for (int g : cell.members) {
            const Eigen::VectorXd& f = scene.primitives[g].feature;
            double nf = f.norm();
            if (nf <= kNormEps || np <= kNormEps) {
                dist[g] = 1.0;
            } else {
                dist[g] = 1.0 - f.dot(cell.prototype) / (nf * np);
            }
        }
    }
    return dist;
}

/// Per-cell softmax over (confidence - lambda_sem * semantic_distance),
/// stabilized by max subtraction.
inline VoxelTable fusion_weights(const VoxelTable& table, const GaussianScene& scene,
                                 double lambda_sem) {
    if (lambda_sem < 0.0) throw ConfigError("lambda_sem must be >= 0");
    std::vector<double> dist = semantic_distances(table, scene);

    VoxelTable out = table;
    for (VoxelCell& cell : out.cells) {
        const std::size_t m = cell.members.size();
        cell.weights.assign(m, 0.0);
        double logit_max = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m; ++k) {
            int g = cell.members[k];
            double logit = scene.primitives[g].confidence - lambda_sem * dist[g];
            cell.weights[k] = logit;
            logit_max = std::max(logit_max, logit);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            cell.weights[k] = std::exp(cell.weights[k] - logit_max);
            denom += cell.weights[k];
        }
        for (std::size_t k = 0; k < m; ++k) cell.weights[k] /= denom;
    }
    return out;
}

/// Merges each voxel into one primitive: weighted sum for every attribute
/// except covariance, which is moment-matched against the weighted mixture
/// (member covariance plus center-spread outer product) so it stays PSD.
/// Output follows the table's ascending-key cell order.
inline GaussianScene aggregate(const GaussianScene& scene, const VoxelTable& table) {
    GaussianScene out;
    out.feature_dim = scene.feature_dim;
    out.sh_degree = scene.sh_degree;
    out.primitives.reserve(table.cells.size());
    const int n_sh = sh_coeff_count(scene.sh_degree);

    for (const VoxelCell& cell : table.cells) {
        if (cell.weights.size() != cell.members.size())
            throw ConfigError("aggregate requires fusion weights; run fusion_weights first");
        GaussianPrimitive merged;
        merged.center = Eigen::Vector3d::Zero();
        merged.covariance = Eigen::Matrix3d::Zero();
        merged.sh_color = Eigen::MatrixX3d::Zero(n_sh, 3);
        merged.opacity = 0.0;
        merged.confidence = 0.0;
        merged.feature = Eigen::VectorXd::Zero(scene.feature_dim);

        for (std::size_t k = 0; k < cell.members.size(); ++k) {
            const GaussianPrimitive& p = scene.primitives[cell.members[k]];
            double w = cell.weights[k];
            merged.center += w * p.center;
            merged.sh_color += w * p.sh_color;
            merged.opacity += w * p.opacity;
            merged.confidence += w * p.confidence;
            merged.feature += w * p.feature;
        }
        for (std::size_t k = 0; k < cell.members.size(); ++k) {
            const GaussianPrimitive& p = scene.primitives[cell.members[k]];
            Eigen::Vector3d delta = p.center - merged.center;
            merged.covariance += cell.weights[k] * (p.covariance + delta * delta.transpose());
        }
        out.primitives.push_back(std::move(merged));
    }
    return out;
}

/// d(weight)/d(member feature) Jacobians, one block per cell:
/// result[cell][g][h] is the D-vector d w_g / d f_h over that cell's members.
/// The prototype is treated as a function of all member features (full chain).
inline std::vector<std::vector<std::vector<Eigen::VectorXd>>> weight_gradients(
    const GaussianScene& scene, const VoxelTable& table, double lambda_sem) {
    if (lambda_sem < 0.0) throw ConfigError("lambda_sem must be >= 0");
    const int d = scene.feature_dim;
    std::vector<std::vector<std::vector<Eigen::VectorXd>>> out(table.cells.size());

    for (std::size_t ci = 0; ci < table.cells.size(); ++ci) {
        const VoxelCell& cell = table.cells[ci];
        const int m = static_cast<int>(cell.members.size());
        if (cell.weights.size() != cell.members.size())
            throw ConfigError("weight_gradients requires fusion weights; run fusion_weights first");
        out[ci].assign(m, std::vector<Eigen::VectorXd>(m, Eigen::VectorXd::Zero(d)));
        if (lambda_sem == 0.0) continue;  // weights depend only on confidences

        const Eigen::VectorXd& proto = cell.prototype;
        double np = proto.norm();
        // dd[j][h] = d(distance_j)/d(feature_h)
        std::vector<std::vector<Eigen::VectorXd>> dd(
            m, std::vector<Eigen::VectorXd>(m, Eigen::VectorXd::Zero(d)));
        for (int j = 0; j < m; ++j) {
            const Eigen::VectorXd& fj = scene.primitives[cell.members[j]].feature;
            double nj = fj.norm();
            if (nj <= kNormEps || np <= kNormEps) continue;  // guarded distance: zero grad
            double cj = fj.dot(proto) / (nj * np);
            Eigen::VectorXd dcos_dfj = proto / (nj * np) - cj * fj / (nj * nj);
            Eigen::VectorXd dcos_dproto = fj / (nj * np) - cj * proto / (np * np);
            for (int h = 0; h < m; ++h) {
                dd[j][h] = -dcos_dproto / static_cast<double>(m);
                if (h == j) dd[j][h] -= dcos_dfj;
            }
        }
        for (int g = 0; g < m; ++g) {
            for (int h = 0; h < m; ++h) {
                Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
                for (int j = 0; j < m; ++j) {
                    double dw_dd = cell.weights[g] *
                                   ((g == j ? 1.0 : 0.0) - cell.weights[j]) * (-lambda_sem);
                    acc += dw_dd * dd[j][h];
                }
                out[ci][g][h] = std::move(acc);
            }
        }
    }
    return out;
}

/// Convenience driver: assign, weight, aggregate in one call.
inline GaussianScene voxelize_scene(const GaussianScene& scene, double voxel_size,
                                    double lambda_sem, VoxelTable* table_out = nullptr) {
    VoxelTable table = fusion_weights(assign_voxels(scene, voxel_size), scene, lambda_sem);
    GaussianScene merged = aggregate(scene, table);
    if (table_out) *table_out = std::move(table);
    return merged;
}

}  // namespace splatsem
