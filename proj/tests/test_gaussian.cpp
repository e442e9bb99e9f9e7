// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "splatsem/gaussian.hpp"
#include "splatsem/rng.hpp"
#include "test_util.hpp"

using namespace splatsem;
namespace fs = std::filesystem;

namespace {
fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("splatsem_gs_" + name);
}

GaussianPrimitive valid_primitive(int feature_dim = 4, int sh_degree = 0) {
    GaussianPrimitive p;
    p.center = Eigen::Vector3d(0.1, -0.2, 1.5);
    p.covariance = 0.01 * Eigen::Matrix3d::Identity();
    p.sh_color = Eigen::MatrixX3d::Constant(sh_coeff_count(sh_degree), 3, 0.2);
    p.opacity = 0.7;
    p.feature = Eigen::VectorXd::Constant(feature_dim, 0.5);
    p.confidence = 0.9;
    return p;
}

void snap_to_f32(GaussianPrimitive& p) {
    auto f = [](double v) { return testutil::snap_f32(v); };
    for (int i = 0; i < 3; ++i) p.center(i) = f(p.center(i));
    // symmetrize in double first, then snap the upper triangle and mirror so the
    // stored f32 upper triangle reproduces the in-memory matrix exactly
    Eigen::Matrix3d sym = ((p.covariance + p.covariance.transpose()) / 2).eval();
    for (int r = 0; r < 3; ++r)
        for (int c = r; c < 3; ++c) {
            double v = f(sym(r, c));
            p.covariance(r, c) = v;
            p.covariance(c, r) = v;
        }
    for (Eigen::Index r = 0; r < p.sh_color.rows(); ++r)
        for (int c = 0; c < 3; ++c) p.sh_color(r, c) = f(p.sh_color(r, c));
    p.opacity = f(p.opacity);
    p.confidence = f(p.confidence);
    for (Eigen::Index i = 0; i < p.feature.size(); ++i) p.feature(i) = f(p.feature(i));
}
}  // namespace

TEST(ShBasis, CoefficientCounts) {
    EXPECT_EQ(sh_coeff_count(0), 1);
    EXPECT_EQ(sh_coeff_count(1), 4);
    EXPECT_EQ(sh_coeff_count(2), 9);
    EXPECT_EQ(sh_coeff_count(3), 16);
}

TEST(PrimitiveValidation, AcceptsValid) {
    EXPECT_NO_THROW(validate_primitive(valid_primitive(), 4, 0, 0));
}

TEST(PrimitiveValidation, RejectsAsymmetricCovariance) {
    GaussianPrimitive p = valid_primitive();
    p.covariance(0, 1) += 1e-6;
    EXPECT_THROW(validate_primitive(p, 4, 0, 0), InvariantViolation);
}

TEST(PrimitiveValidation, RejectsIndefiniteCovariance) {
    GaussianPrimitive p = valid_primitive();
    p.covariance = Eigen::Matrix3d::Identity();
    p.covariance(2, 2) = -0.5;
    EXPECT_THROW(validate_primitive(p, 4, 0, 0), InvariantViolation);
}

TEST(PrimitiveValidation, AcceptsRankDeficientCovariance) {
    GaussianPrimitive p = valid_primitive();
    p.covariance = Eigen::Matrix3d::Zero();
    p.covariance(0, 0) = 0.01;  // PSD but singular
    EXPECT_NO_THROW(validate_primitive(p, 4, 0, 0));
}

TEST(PrimitiveValidation, RejectsOpacityOutsideUnitInterval) {
    GaussianPrimitive p = valid_primitive();
    p.opacity = 1.5;
    EXPECT_THROW(validate_primitive(p, 4, 0, 0), InvariantViolation);
    p.opacity = -0.1;
    EXPECT_THROW(validate_primitive(p, 4, 0, 0), InvariantViolation);
    p.opacity = 0.0;
    EXPECT_NO_THROW(validate_primitive(p, 4, 0, 0));
    p.opacity = 1.0;
    EXPECT_NO_THROW(validate_primitive(p, 4, 0, 0));
}

TEST(PrimitiveValidation, RejectsDimensionMismatches) {
    GaussianPrimitive p = valid_primitive(4, 0);
    EXPECT_THROW(validate_primitive(p, 8, 0, 0), InvariantViolation);
    EXPECT_THROW(validate_primitive(p, 4, 1, 0), InvariantViolation);
}

TEST(PrimitiveValidation, RejectsNonFinite) {
    GaussianPrimitive p = valid_primitive();
    p.center(1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(validate_primitive(p, 4, 0, 0), InvariantViolation);
    p = valid_primitive();
    p.feature(2) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(validate_primitive(p, 4, 0, 0), InvariantViolation);
}

TEST(PrimitiveValidation, ReportsOffendingIndex) {
    GaussianScene scene;
    scene.feature_dim = 4;
    scene.primitives = {valid_primitive(), valid_primitive(), valid_primitive()};
    scene.primitives[2].opacity = 2.0;
    try {
        validate_scene(scene);
        FAIL() << "expected InvariantViolation";
    } catch (const InvariantViolation& e) {
        EXPECT_EQ(e.index, 2);
    }
}

TEST(PixelAlignedScene, OnePrimitivePerValidPixel) {
    CameraView cam = make_camera(16, 16, 1, 1, 2, 2, Eigen::Matrix3d::Identity(),
                                 Eigen::Vector3d::Zero());
    DenseMap depth(2, 2, 1, 1.0);
    DenseMap colors(2, 2, 3, 0.5);
    DenseMap features(2, 2, 4, 0.25);
    DenseMap opacities(2, 2, 1, 0.8);
    DenseMap confidences(2, 2, 1, 0.6);
    GaussianScene scene =
        pixel_aligned_scene(cam, depth, colors, features, opacities, confidences, 0.5);
    EXPECT_EQ(scene.size(), 4u);
    EXPECT_EQ(scene.feature_dim, 4);
    EXPECT_EQ(scene.sh_degree, 0);

    depth.at(0, 1, 0) = 0.0;
    scene = pixel_aligned_scene(cam, depth, colors, features, opacities, confidences, 0.5);
    EXPECT_EQ(scene.size(), 3u);
}

TEST(PixelAlignedScene, CovarianceScalesWithDepthOverFocal) {
    CameraView cam = make_camera(20, 20, 1, 1, 2, 2, Eigen::Matrix3d::Identity(),
                                 Eigen::Vector3d::Zero());
    DenseMap depth(2, 2, 1, 3.0);
    DenseMap colors(2, 2, 3, 0.5), features(2, 2, 2, 0.1);
    DenseMap opacities(2, 2, 1, 0.8), confidences(2, 2, 1, 0.6);
    GaussianScene scene =
        pixel_aligned_scene(cam, depth, colors, features, opacities, confidences, 0.5);
    double sigma = 0.5 * 3.0 / 20.0;
    for (const auto& p : scene.primitives) {
        EXPECT_LT((p.covariance - sigma * sigma * Eigen::Matrix3d::Identity()).norm(), 1e-15);
        EXPECT_NEAR(p.sh_color(0, 0) * kSh0, 0.5, 1e-15);
        EXPECT_DOUBLE_EQ(p.opacity, 0.8);
        EXPECT_DOUBLE_EQ(p.confidence, 0.6);
    }
}

TEST(PixelAlignedScene, CentersReprojectToPixelCenters) {
    Xoshiro256ss rng(11);
    CameraView cam = testutil::random_camera(rng, 6, 6, 0.3);
    DenseMap depth = testutil::random_map(rng, 6, 6, 1, 0.5, 4.0);
    DenseMap colors(6, 6, 3, 0.5), features(6, 6, 4, 0.1);
    DenseMap opacities(6, 6, 1, 0.8), confidences(6, 6, 1, 0.6);
    GaussianScene scene =
        pixel_aligned_scene(cam, depth, colors, features, opacities, confidences, 0.5);
    ASSERT_EQ(scene.size(), 36u);
    std::size_t i = 0;
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x, ++i) {
            Eigen::Vector3d cam_pt =
                cam.rotation * scene.primitives[i].center + cam.translation;
            auto [px, z] = project_point(cam, cam_pt);
            EXPECT_NEAR(px.u, x + 0.5, 1e-6);
            EXPECT_NEAR(px.v, y + 0.5, 1e-6);
            EXPECT_NEAR(z, depth.at(y, x, 0), 1e-9);
        }
    }
}

TEST(PixelAlignedScene, RejectsMismatchedShapes) {
    CameraView cam = make_camera(16, 16, 1, 1, 2, 2, Eigen::Matrix3d::Identity(),
                                 Eigen::Vector3d::Zero());
    DenseMap depth(2, 2, 1, 1.0);
    DenseMap colors(2, 2, 3, 0.5), features(2, 2, 4, 0.25);
    DenseMap opacities(2, 2, 1, 0.8), confidences(2, 2, 1, 0.6);
    DenseMap wrong_colors(2, 2, 1, 0.5);
    EXPECT_THROW(
        pixel_aligned_scene(cam, depth, wrong_colors, features, opacities, confidences, 0.5),
        ShapeMismatch);
    DenseMap wrong_depth(3, 2, 1, 1.0);
    EXPECT_THROW(
        pixel_aligned_scene(cam, wrong_depth, colors, features, opacities, confidences, 0.5),
        ShapeMismatch);
}

TEST(SceneIo, EmptySceneRoundTrip) {
    GaussianScene scene;
    scene.feature_dim = 16;
    scene.sh_degree = 2;
    fs::path path = temp_file("empty.fgsc");
    save_scene(scene, path.string());
    GaussianScene loaded = load_scene(path.string());
    EXPECT_EQ(loaded.size(), 0u);
    EXPECT_EQ(loaded.feature_dim, 16);
    EXPECT_EQ(loaded.sh_degree, 2);
    fs::remove(path);
}

TEST(SceneIo, ThousandPrimitiveRoundTripIsBitExact) {
    Xoshiro256ss rng(12);
    GaussianScene scene = testutil::random_scene(rng, 1000, 8, 2);
    for (auto& p : scene.primitives) snap_to_f32(p);
    fs::path path = temp_file("big.fgsc");
    save_scene(scene, path.string());
    GaussianScene loaded = load_scene(path.string());
    ASSERT_EQ(loaded.size(), scene.size());
    EXPECT_EQ(loaded.feature_dim, scene.feature_dim);
    EXPECT_EQ(loaded.sh_degree, scene.sh_degree);
    for (std::size_t g = 0; g < scene.size(); ++g) {
        const auto& a = scene.primitives[g];
        const auto& b = loaded.primitives[g];
        EXPECT_EQ(a.center, b.center);
        EXPECT_EQ(a.covariance, b.covariance);
        EXPECT_EQ(a.sh_color, b.sh_color);
        EXPECT_EQ(a.opacity, b.opacity);
        EXPECT_EQ(a.confidence, b.confidence);
        EXPECT_EQ(a.feature, b.feature);
    }
    fs::remove(path);
}

TEST(SceneIo, LoadValidatesPrimitives) {
    GaussianScene scene;
    scene.feature_dim = 4;
    scene.primitives = {valid_primitive(), valid_primitive()};
    scene.primitives[1].opacity = 1.5;  // save writes raw bytes, load must reject
    fs::path path = temp_file("bad_opacity.fgsc");
    save_scene(scene, path.string());
    try {
        load_scene(path.string());
        FAIL() << "expected InvariantViolation";
    } catch (const InvariantViolation& e) {
        EXPECT_EQ(e.index, 1);
    }
    fs::remove(path);
}

TEST(SceneIo, BadMagicReportsOffsetZero) {
    fs::path path = temp_file("magic.fgsc");
    std::ofstream(path.string(), std::ios::binary) << "XXXX\x01\x00\x00\x00";
    try {
        load_scene(path.string());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.byte_offset, 0u);
    }
    fs::remove(path);
}

TEST(SceneIo, TruncatedPayloadReportsOffset) {
    GaussianScene scene;
    scene.feature_dim = 4;
    scene.primitives = {valid_primitive()};
    fs::path path = temp_file("trunc.fgsc");
    save_scene(scene, path.string());
    auto full = fs::file_size(path);
    fs::resize_file(path, full - 8);
    try {
        load_scene(path.string());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_GT(e.byte_offset, 20u);  // past the header
    }
    fs::remove(path);
}

TEST(SceneIo, UnsupportedVersionRejected) {
    GaussianScene scene;
    scene.feature_dim = 4;
    fs::path path = temp_file("ver.fgsc");
    save_scene(scene, path.string());
    // patch version field (bytes 4..8) to 2
    std::fstream f(path.string(), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    char two[4] = {2, 0, 0, 0};
    f.write(two, 4);
    f.close();
    try {
        load_scene(path.string());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.byte_offset, 4u);
    }
    fs::remove(path);
}
