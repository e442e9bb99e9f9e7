// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"

namespace splatsem {

/// Continuous pixel coordinate. Integer pixel (u,v) has its center at
/// (u+0.5, v+0.5).
struct PixelCoord {
    double u = 0.0;
    double v = 0.0;
};

/// Pinhole camera: zero-skew intrinsics plus a world-to-camera pose
/// (x_cam = R * x_world + T).
struct CameraView {
    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    int width = 0;
    int height = 0;

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }

    Eigen::Vector3d camera_center_world() const {
        return rotation.transpose() * (-translation);
    }

    void validate() const {
        Eigen::Matrix3d rtr = rotation.transpose() * rotation;
        if ((rtr - Eigen::Matrix3d::Identity()).norm() > 1e-9)
            throw InvariantViolation("camera rotation is not orthonormal");
        if (std::abs(rotation.determinant() - 1.0) > 1e-9)
            throw InvariantViolation("camera rotation determinant is not +1");
        if (!(fx() > 0.0) || !(fy() > 0.0))
            throw InvariantViolation("focal lengths must be positive");
        if (!(cx() > 0.0 && cx() < width) || !(cy() > 0.0 && cy() < height))
            throw InvariantViolation("principal point outside the image");
        if (width <= 0 || height <= 0)
            throw InvariantViolation("image dimensions must be positive");
    }
};

inline CameraView make_camera(double fx, double fy, double cx, double cy,
                              int width, int height,
                              const Eigen::Matrix3d& rotation = Eigen::Matrix3d::Identity(),
                              const Eigen::Vector3d& translation = Eigen::Vector3d::Zero()) {
    CameraView view;
    view.intrinsics << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    view.rotation = rotation;
    view.translation = translation;
    view.width = width;
    view.height = height;
    view.validate();
    return view;
}

inline void save_camera_json(const CameraView& view, const std::string& path) {
    nlohmann::json j;
    j["fx"] = view.fx();
    j["fy"] = view.fy();
    j["cx"] = view.cx();
    j["cy"] = view.cy();
    j["width"] = view.width;
    j["height"] = view.height;
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[r * 3 + c] = view.rotation(r, c);
    j["rotation"] = rot;
    j["translation"] = {view.translation(0), view.translation(1), view.translation(2)};
    std::ofstream os(path);
    if (!os) throw Error("cannot open for write: " + path);
    os << j.dump(2) << "\n";
}

inline CameraView load_camera_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("bad camera JSON in " + path + ": " + e.what(), e.byte);
    }
    try {
        CameraView view = make_camera(j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy"),
                                      j.at("width"), j.at("height"));
        auto rot = j.at("rotation").get<std::vector<double>>();
        auto trans = j.at("translation").get<std::vector<double>>();
        if (rot.size() != 9 || trans.size() != 3)
            throw ParseError("camera JSON rotation/translation size in " + path, 0);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) view.rotation(r, c) = rot[r * 3 + c];
        view.translation = Eigen::Vector3d(trans[0], trans[1], trans[2]);
        view.validate();
        return view;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("camera JSON field error in " + path + ": " + e.what(), 0);
    }
}

/// Pose mapping source-camera coordinates into target-camera coordinates:
/// x_target = R * x_source + T.
inline std::pair<Eigen::Matrix3d, Eigen::Vector3d>
relative_pose(const CameraView& source, const CameraView& target) {
    Eigen::Matrix3d r = target.rotation * source.rotation.transpose();
    Eigen::Vector3d t = target.translation - r * source.translation;
    return {r, t};
}

/// Perspective projection of a camera-frame point. Returns the continuous
/// pixel coordinate and the depth z.
inline std::pair<PixelCoord, double>
project_point(const CameraView& view, const Eigen::Vector3d& point_cam) {
    double z = point_cam.z();
    if (z <= 1e-8)
        throw NonPositiveDepth("cannot project point with depth " + std::to_string(z));
    PixelCoord px{view.fx() * point_cam.x() / z + view.cx(),
                  view.fy() * point_cam.y() / z + view.cy()};
    return {px, z};
}

struct UnprojectResult {
    std::vector<Eigen::Vector3d> points;  // world frame; sentinel (0,0,0) if invalid
    std::vector<std::uint8_t> valid;
};

/// Lifts each pixel center through the inverse intrinsics, scales by depth and
/// maps camera -> world. Depth <= 0 marks the pixel invalid.
inline UnprojectResult unproject_depth(const CameraView& view, const DenseMap& depth) {
    if (depth.channels != 1)
        throw ShapeMismatch("unproject_depth expects a single-channel depth map");
    UnprojectResult out;
    out.points.resize(static_cast<std::size_t>(depth.height) * depth.width,
                      Eigen::Vector3d::Zero());
    out.valid.assign(out.points.size(), 0);
    const Eigen::Matrix3d r_t = view.rotation.transpose();
    const double fx = view.fx(), fy = view.fy(), cx = view.cx(), cy = view.cy();
    std::size_t i = 0;
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x, ++i) {
            double d = depth.at(y, x, 0);
            if (!(d > 0.0)) continue;
            // closed-form K^-1 for zero skew; keeps power-of-two focals exact
            Eigen::Vector3d ray((x + 0.5 - cx) / fx, (y + 0.5 - cy) / fy, 1.0);
            out.points[i] = r_t * (d * ray - view.translation);
            out.valid[i] = 1;
        }
    }
    return out;
}

/// One bilinear sample footprint: the 4 texel indices and their weights.
/// Valid iff the coordinate lies inside the hull of texel centers,
/// [0.5, W-0.5] x [0.5, H-0.5].
struct BilinearTap {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double w00 = 0, w10 = 0, w01 = 0, w11 = 0;
    bool valid = false;
};

inline BilinearTap bilinear_tap(int width, int height, const PixelCoord& coord) {
    BilinearTap tap;
    double x = coord.u - 0.5;
    double y = coord.v - 0.5;
    if (!(x >= 0.0 && x <= width - 1 && y >= 0.0 && y <= height - 1)) return tap;
    tap.x0 = static_cast<int>(std::floor(x));
    tap.y0 = static_cast<int>(std::floor(y));
    double fx = x - tap.x0;
    double fy = y - tap.y0;
    tap.x1 = tap.x0 + 1 <= width - 1 ? tap.x0 + 1 : tap.x0;   // zero weight at the edge
    tap.y1 = tap.y0 + 1 <= height - 1 ? tap.y0 + 1 : tap.y0;
    tap.w00 = (1.0 - fx) * (1.0 - fy);
    tap.w10 = fx * (1.0 - fy);
    tap.w01 = (1.0 - fx) * fy;
    tap.w11 = fx * fy;
    tap.valid = true;
    return tap;
}

struct GridSampleResult {
    Eigen::MatrixXd values;            // n x C, zero rows where invalid
    std::vector<std::uint8_t> valid;
};

/// Bilinear interpolation of the 4 nearest texels at each coordinate; texel
/// centers sit at integer+0.5. Out-of-hull coordinates are flagged, not errors.
inline GridSampleResult grid_sample_bilinear(const DenseMap& map,
                                             const std::vector<PixelCoord>& coords) {
    GridSampleResult out;
    out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(coords.size()), map.channels);
    out.valid.assign(coords.size(), 0);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        BilinearTap tap = bilinear_tap(map.width, map.height, coords[i]);
        if (!tap.valid) continue;
        out.valid[i] = 1;
        for (int c = 0; c < map.channels; ++c) {
            out.values(static_cast<Eigen::Index>(i), c) =
                tap.w00 * map.at(tap.y0, tap.x0, c) + tap.w10 * map.at(tap.y0, tap.x1, c) +
                tap.w01 * map.at(tap.y1, tap.x0, c) + tap.w11 * map.at(tap.y1, tap.x1, c);
        }
    }
    return out;
}

}  // namespace splatsem
