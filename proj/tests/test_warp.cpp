// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "splatsem/oracle.hpp"
#include "splatsem/rng.hpp"
#include "splatsem/warp.hpp"
#include "test_util.hpp"

using namespace splatsem;

namespace {

/// Randomized two-view plane problem with noisy depths so that validity varies.
struct WarpProblem {
    CameraView target, context;
    DenseMap target_features, context_features, target_depth, context_depth;
};

testutil::PlaneSetup jittered_plane(Xoshiro256ss& rng, int h, int w) {
    return testutil::plane_setup(h, w, rng.uniform(2.0, 4.0), rng.uniform(-0.04, 0.04),
                                 {rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05), 0.0});
}

WarpProblem random_problem(std::uint64_t seed, int h = 8, int w = 8, int d = 4) {
    Xoshiro256ss rng(seed);
    testutil::PlaneSetup s = jittered_plane(rng, h, w);
    WarpProblem p{s.target, s.context,
                  testutil::random_map(rng, h, w, d),
                  testutil::random_map(rng, h, w, d),
                  s.target_depth, s.context_depth};
    // mild depth noise: some pixels fail the consistency test, some pass
    for (double& v : p.target_depth.data) v *= 1.0 + rng.uniform(-0.03, 0.03);
    return p;
}

}  // namespace

TEST(WarpCoordinates, IdentityPoseGivesPixelCenters) {
    CameraView view = make_camera(16, 16, 4, 4, 8, 8);
    DenseMap depth(8, 8, 1, 2.5);
    WarpCoordinates wc = warp_coordinates(view, view, depth);
    std::size_t i = 0;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x, ++i) {
            ASSERT_TRUE(wc.valid[i]);
            EXPECT_NEAR(wc.coords[i].u, x + 0.5, 1e-10);
            EXPECT_NEAR(wc.coords[i].v, y + 0.5, 1e-10);
            EXPECT_NEAR(wc.projected_depth[i], 2.5, 1e-12);
        }
    }
}

TEST(WarpCoordinates, PureTranslationGivesKnownDisparity) {
    CameraView target = make_camera(16, 16, 4, 4, 8, 8);
    double shift = 0.3, depth_v = 2.0;
    CameraView context = make_camera(16, 16, 4, 4, 8, 8, Eigen::Matrix3d::Identity(),
                                     Eigen::Vector3d(shift, 0, 0));
    DenseMap depth(8, 8, 1, depth_v);
    WarpCoordinates wc = warp_coordinates(target, context, depth);
    double disparity = 16.0 * shift / depth_v;
    std::size_t i = 0;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x, ++i) {
            ASSERT_TRUE(wc.valid[i]);
            EXPECT_NEAR(wc.coords[i].u, x + 0.5 + disparity, 1e-10);
            EXPECT_NEAR(wc.coords[i].v, y + 0.5, 1e-10);
        }
    }
}

TEST(WarpCoordinates, NonPositiveDepthAndBehindContextInvalid) {
    CameraView target = make_camera(16, 16, 4, 4, 8, 8);
    // context far forward: plane points fall behind it
    CameraView context = make_camera(16, 16, 4, 4, 8, 8, Eigen::Matrix3d::Identity(),
                                     Eigen::Vector3d(0, 0, -10));
    DenseMap depth(8, 8, 1, 2.0);
    depth.at(0, 0, 0) = 0.0;
    depth.at(0, 1, 0) = -1.0;
    WarpCoordinates wc = warp_coordinates(target, context, depth);
    for (std::size_t i = 0; i < wc.valid.size(); ++i) EXPECT_FALSE(wc.valid[i]);

    // same depth map against an ordinary context: only the two bad pixels drop
    CameraView near_ctx = make_camera(16, 16, 4, 4, 8, 8, Eigen::Matrix3d::Identity(),
                                      Eigen::Vector3d(0.1, 0, 0));
    wc = warp_coordinates(target, near_ctx, depth);
    EXPECT_FALSE(wc.valid[0]);
    EXPECT_FALSE(wc.valid[1]);
    for (std::size_t i = 2; i < wc.valid.size(); ++i) EXPECT_TRUE(wc.valid[i]);
}

TEST(WarpCoordinates, RejectsBadShapes) {
    CameraView view = make_camera(16, 16, 4, 4, 8, 8);
    DenseMap two_channel(8, 8, 2, 1.0);
    EXPECT_THROW(warp_coordinates(view, view, two_channel), ShapeMismatch);
    DenseMap wrong_size(4, 8, 1, 1.0);
    EXPECT_THROW(warp_coordinates(view, view, wrong_size), ShapeMismatch);
}

TEST(WarpDistance, IdenticalViewsAndFeaturesGiveZero) {
    Xoshiro256ss rng(41);
    CameraView view = make_camera(16, 16, 4, 4, 8, 8);
    DenseMap features = testutil::random_map(rng, 8, 8, 4);
    DenseMap depth(8, 8, 1, 3.0);
    WarpLossResult res = warp_distance(view, view, features, features, depth, depth, 0.05);
    EXPECT_EQ(res.mask.depth_consistent_count, 64);
    EXPECT_LT(res.loss, 1e-10);
    for (double v : res.grad_target_features.data) EXPECT_NEAR(v, 0.0, 1e-9);
    for (double v : res.grad_context_features.data) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(WarpDistance, AgreesWithScalarOracle) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        WarpProblem p = random_problem(seed);
        WarpLossResult main = warp_distance(p.target, p.context, p.target_features,
                                            p.context_features, p.target_depth,
                                            p.context_depth, 0.05);
        oracle::OracleWarpResult ref = oracle::oracle_warp_distance(
            p.target, p.context, p.target_features, p.context_features, p.target_depth,
            p.context_depth, 0.05);
        EXPECT_EQ(main.mask.depth_consistent_count, ref.n_valid) << "seed " << seed;
        EXPECT_EQ(main.mask.valid, ref.valid) << "seed " << seed;
        EXPECT_NEAR(main.loss, ref.loss, 1e-10) << "seed " << seed;
        EXPECT_LT(testutil::rel_l2(main.grad_target_features.data, ref.grad_target.data), 1e-10)
            << "seed " << seed;
        EXPECT_LT(testutil::rel_l2(main.grad_context_features.data, ref.grad_context.data), 1e-10)
            << "seed " << seed;
    }
}

TEST(WarpDistance, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 100; seed < 103; ++seed) {
        WarpProblem p = random_problem(seed);
        WarpLossResult base = warp_distance(p.target, p.context, p.target_features,
                                            p.context_features, p.target_depth,
                                            p.context_depth, 0.05);
        ASSERT_GT(base.mask.depth_consistent_count, 0);

        std::vector<double> t_params = p.target_features.data;
        auto t_obj = [&]() {
            DenseMap f = p.target_features;
            f.data = t_params;
            return warp_distance(p.target, p.context, f, p.context_features, p.target_depth,
                                 p.context_depth, 0.05)
                .loss;
        };
        std::vector<double> t_fd = testutil::finite_diff(t_params, t_obj, testutil::kFdStep);
        EXPECT_LT(testutil::rel_l2(base.grad_target_features.data, t_fd), testutil::kGradTol)
            << "seed " << seed;

        std::vector<double> c_params = p.context_features.data;
        auto c_obj = [&]() {
            DenseMap f = p.context_features;
            f.data = c_params;
            return warp_distance(p.target, p.context, p.target_features, f, p.target_depth,
                                 p.context_depth, 0.05)
                .loss;
        };
        std::vector<double> c_fd = testutil::finite_diff(c_params, c_obj, testutil::kFdStep);
        EXPECT_LT(testutil::rel_l2(base.grad_context_features.data, c_fd), testutil::kGradTol)
            << "seed " << seed;
    }
}

TEST(WarpDistance, InvariantToPositiveFeatureScaling) {
    WarpProblem p = random_problem(7);
    double base = warp_distance(p.target, p.context, p.target_features, p.context_features,
                                p.target_depth, p.context_depth, 0.05)
                      .loss;
    DenseMap t_scaled = p.target_features, c_scaled = p.context_features;
    for (double& v : t_scaled.data) v *= 37.5;
    for (double& v : c_scaled.data) v *= 0.002;
    double scaled = warp_distance(p.target, p.context, t_scaled, c_scaled, p.target_depth,
                                  p.context_depth, 0.05)
                        .loss;
    EXPECT_NEAR(base, scaled, 1e-10);
}

TEST(WarpDistance, MaskGrowsMonotonicallyWithTolerance) {
    WarpProblem p = random_problem(8);
    std::vector<std::uint8_t> prev;
    int prev_count = -1;
    for (double tol : {0.004, 0.01, 0.03, 0.08, 0.2}) {
        WarpLossResult res = warp_distance(p.target, p.context, p.target_features,
                                           p.context_features, p.target_depth,
                                           p.context_depth, tol);
        EXPECT_GE(res.mask.depth_consistent_count, prev_count);
        if (!prev.empty()) {
            for (std::size_t i = 0; i < prev.size(); ++i)
                if (prev[i]) EXPECT_TRUE(res.mask.valid[i]) << "pixel " << i << " tol " << tol;
        }
        prev = res.mask.valid;
        prev_count = res.mask.depth_consistent_count;
        EXPECT_GE(res.mask.in_bounds_count, res.mask.depth_consistent_count);
    }
}

TEST(WarpDistance, EmptyMaskGivesExactZeroLossAndGradients) {
    WarpProblem p = random_problem(9);
    // all target depths invalid
    DenseMap dead_depth(8, 8, 1, 0.0);
    WarpLossResult res = warp_distance(p.target, p.context, p.target_features,
                                       p.context_features, dead_depth, p.context_depth, 0.05);
    EXPECT_EQ(res.mask.depth_consistent_count, 0);
    EXPECT_EQ(res.loss, 0.0);
    for (double v : res.grad_target_features.data) EXPECT_EQ(v, 0.0);
    for (double v : res.grad_context_features.data) EXPECT_EQ(v, 0.0);

    // valid geometry but an impossibly tight depth tolerance
    DenseMap off_depth = p.target_depth;
    for (double& v : off_depth.data) v *= 1.5;
    res = warp_distance(p.target, p.context, p.target_features, p.context_features, off_depth,
                        p.context_depth, 1e-6);
    EXPECT_EQ(res.mask.depth_consistent_count, 0);
    EXPECT_EQ(res.loss, 0.0);
}

TEST(WarpDistance, ZeroNormFeatureContributesUnitDistanceZeroGradient) {
    Xoshiro256ss rng(42);
    CameraView view = make_camera(16, 16, 4, 4, 8, 8);
    DenseMap features = testutil::random_map(rng, 8, 8, 4);
    DenseMap depth(8, 8, 1, 3.0);
    DenseMap zeroed = features;
    for (int c = 0; c < 4; ++c) zeroed.at(3, 3, c) = 0.0;
    WarpLossResult res = warp_distance(view, view, zeroed, features, depth, depth, 0.05);
    ASSERT_EQ(res.mask.depth_consistent_count, 64);
    // 63 aligned pixels contribute ~0, the zero-norm pixel contributes exactly 1
    EXPECT_NEAR(res.loss, 1.0 / 64.0, 1e-10);
    for (int c = 0; c < 4; ++c) {
        EXPECT_EQ(res.grad_target_features.at(3, 3, c), 0.0);
        EXPECT_EQ(res.grad_context_features.at(3, 3, c), 0.0);
    }
}

TEST(WarpDistance, RejectsBadToleranceAndShapes) {
    WarpProblem p = random_problem(10);
    EXPECT_THROW(warp_distance(p.target, p.context, p.target_features, p.context_features,
                               p.target_depth, p.context_depth, 0.0),
                 NonPositiveTolerance);
    EXPECT_THROW(warp_distance(p.target, p.context, p.target_features, p.context_features,
                               p.target_depth, p.context_depth, -0.1),
                 NonPositiveTolerance);
    DenseMap wrong(8, 8, 3, 0.5);
    EXPECT_THROW(warp_distance(p.target, p.context, wrong, p.context_features, p.target_depth,
                               p.context_depth, 0.05),
                 ShapeMismatch);
}

TEST(WarpDistance, LossStaysInCosineRange) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Xoshiro256ss rng(seed + 900);
        WarpProblem p = random_problem(seed);
        // allow negative features so anti-aligned pairs appear
        for (double& v : p.target_features.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : p.context_features.data) v = rng.uniform(-1.0, 1.0);
        double loss = warp_distance(p.target, p.context, p.target_features, p.context_features,
                                    p.target_depth, p.context_depth, 0.05)
                          .loss;
        EXPECT_GE(loss, 0.0);
        EXPECT_LE(loss, 2.0);
    }
}

TEST(WarpDistance, MutatedCosineSignDisagreesWithOracle) {
    // Harness sensitivity: copy of the main loop accumulating 1 + cos instead
    // of 1 - cos must be far outside the agreement tolerance.
    WarpProblem p = random_problem(11);
    oracle::OracleWarpResult ref = oracle::oracle_warp_distance(
        p.target, p.context, p.target_features, p.context_features, p.target_depth,
        p.context_depth, 0.05);
    ASSERT_GT(ref.n_valid, 0);

    WarpCoordinates wc = warp_coordinates(p.target, p.context, p.target_depth);
    const int d = p.target_features.channels;
    double loss_sum = 0.0;
    int n_valid = 0;
    std::size_t i = 0;
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x, ++i) {
            if (!wc.valid[i]) continue;
            BilinearTap tap = bilinear_tap(8, 8, wc.coords[i]);
            if (!tap.valid) continue;
            double sampled = tap.w00 * p.context_depth.at(tap.y0, tap.x0, 0) +
                             tap.w10 * p.context_depth.at(tap.y0, tap.x1, 0) +
                             tap.w01 * p.context_depth.at(tap.y1, tap.x0, 0) +
                             tap.w11 * p.context_depth.at(tap.y1, tap.x1, 0);
            if (!(std::abs(wc.projected_depth[i] - sampled) / wc.projected_depth[i] < 0.05))
                continue;
            Eigen::VectorXd a(d), b(d);
            for (int c = 0; c < d; ++c) {
                a(c) = p.target_features.at(y, x, c);
                b(c) = tap.w00 * p.context_features.at(tap.y0, tap.x0, c) +
                       tap.w10 * p.context_features.at(tap.y0, tap.x1, c) +
                       tap.w01 * p.context_features.at(tap.y1, tap.x0, c) +
                       tap.w11 * p.context_features.at(tap.y1, tap.x1, c);
            }
            loss_sum += 1.0 + a.dot(b) / (a.norm() * b.norm());  // sign flip
            ++n_valid;
        }
    }
    ASSERT_GT(n_valid, 0);
    EXPECT_GT(std::abs(loss_sum / n_valid - ref.loss), 1e-3);
}

TEST(WarpTotal, BidirectionalSumMatchesDirectedCalls) {
    std::vector<ViewBundle> bundles;
    for (std::uint64_t seed = 20; seed < 23; ++seed) {
        WarpProblem p = random_problem(seed);
        bundles.push_back({p.target, p.target_features, p.target_depth});
        if (bundles.size() == 1)
            bundles.push_back({p.context, p.context_features, p.context_depth});
    }
    std::vector<std::pair<int, int>> pairs = {{0, 1}, {1, 2}};
    WarpTotal total = warp_loss_total(bundles, pairs, 0.05);
    ASSERT_EQ(total.terms.size(), 4u);

    double expect = 0.0;
    int term = 0;
    for (auto [t, c] : pairs) {
        for (auto [a, b] : {std::pair{t, c}, std::pair{c, t}}) {
            WarpLossResult r =
                warp_distance(bundles[a].view, bundles[b].view, bundles[a].features,
                              bundles[b].features, bundles[a].depth, bundles[b].depth, 0.05);
            expect += r.loss;
            EXPECT_EQ(total.terms[term].target, a);
            EXPECT_EQ(total.terms[term].context, b);
            EXPECT_DOUBLE_EQ(total.terms[term].loss, r.loss);
            EXPECT_EQ(total.terms[term].valid_px, r.mask.depth_consistent_count);
            ++term;
        }
    }
    EXPECT_DOUBLE_EQ(total.loss, expect);
}

TEST(WarpTotal, RejectsEmptyPairsAndBadIndices) {
    WarpProblem p = random_problem(30);
    std::vector<ViewBundle> bundles = {{p.target, p.target_features, p.target_depth},
                                       {p.context, p.context_features, p.context_depth}};
    std::vector<std::pair<int, int>> none;
    EXPECT_THROW(warp_loss_total(bundles, none, 0.05), EmptyPairSet);
    std::vector<std::pair<int, int>> bad = {{0, 5}};
    EXPECT_THROW(warp_loss_total(bundles, bad, 0.05), ConfigError);
}
