// SPDX-License-Identifier: Apache-2.0
//
// splatsem: command-line front end for the splat rendering / warping /
// voxelization / fusion toolkit. Every machine-readable payload is JSON on
// stdout; images and dense maps use the binary formats of the library.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "splatsem/splatsem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatsem;

namespace {

Eigen::MatrixXd dmap_to_matrix(const DenseMap& map, const std::string& what) {
    if (map.channels != 1)
        throw ShapeMismatch(what + " must be a single-channel map (rows x cols x 1)");
    Eigen::MatrixXd m(map.height, map.width);
    for (int r = 0; r < map.height; ++r)
        for (int c = 0; c < map.width; ++c) m(r, c) = map.at(r, c, 0);
    return m;
}

DenseMap matrix_to_dmap(const Eigen::MatrixXd& m) {
    DenseMap map(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 1);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) map.at(r, c, 0) = m(r, c);
    return map;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
    std::vector<double> v;
    v.reserve(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    return v;
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
    std::string scene, camera, out, color_out, feature_out, depth_out, alpha_out, preview_out;
    std::vector<double> bg{0.0, 0.0, 0.0};
    int threads = 1;
};

void run_render(const RenderArgs& a) {
    GaussianScene scene = load_scene(a.scene);
    CameraView view = load_camera_json(a.camera);
    Eigen::Vector3d bg(a.bg[0], a.bg[1], a.bg[2]);
    RenderOutput out = render(scene, view, bg, a.threads);
    write_ppm(out.color, a.out);
    if (!a.color_out.empty()) save_dmap(out.color, a.color_out);
    if (!a.feature_out.empty()) save_dmap(out.feature, a.feature_out);
    if (!a.depth_out.empty()) save_dmap(out.depth, a.depth_out);
    if (!a.alpha_out.empty()) save_dmap(out.alpha, a.alpha_out);
    if (!a.preview_out.empty()) write_ppm(render_feature_pca_preview(out.feature), a.preview_out);
}

// ---------------------------------------------------------------------------
// voxelize

struct VoxelizeArgs {
    std::string scene, out, stats;
    double voxel_size = 0.25;
    double lambda = 2.0;
};

void run_voxelize(const VoxelizeArgs& a) {
    GaussianScene scene = load_scene(a.scene);
    VoxelTable table;
    GaussianScene merged = voxelize_scene(scene, a.voxel_size, a.lambda, &table);
    save_scene(merged, a.out);
    if (!a.stats.empty()) {
        std::size_t max_members = 0;
        for (const VoxelCell& c : table.cells) max_members = std::max(max_members, c.members.size());
        json stats = {{"n_in", scene.primitives.size()},
                      {"n_out", merged.primitives.size()},
                      {"cells", table.cells.size()},
                      {"mean_members", table.cells.empty()
                                           ? 0.0
                                           : static_cast<double>(scene.primitives.size()) /
                                                 table.cells.size()},
                      {"max_members", max_members}};
        std::ofstream os(a.stats);
        if (!os) throw Error("cannot open for write: " + a.stats);
        os << stats.dump(2) << "\n";
    }
}

// ---------------------------------------------------------------------------
// warploss

struct WarpArgs {
    std::vector<std::string> views, features, depths, pairs;
    double depth_tol = 0.05;
    bool as_json = false;
};

void run_warploss(const WarpArgs& a) {
    if (a.views.size() < 2 || a.views.size() != a.features.size() ||
        a.views.size() != a.depths.size())
        throw ConfigError("need matching --views/--features/--depths lists (>= 2 entries)");
    std::vector<ViewBundle> bundles;
    for (std::size_t i = 0; i < a.views.size(); ++i)
        bundles.push_back({load_camera_json(a.views[i]), load_dmap(a.features[i]),
                           load_dmap(a.depths[i])});

    std::vector<std::pair<int, int>> pairs;
    if (a.pairs.empty()) {
        for (int i = 0; i < static_cast<int>(bundles.size()); ++i)
            for (int j = i + 1; j < static_cast<int>(bundles.size()); ++j)
                pairs.emplace_back(i, j);
    } else {
        for (const std::string& pair_text : a.pairs) {
            auto dash = pair_text.find('-');
            if (dash == std::string::npos)
                throw ConfigError("pair must look like T-C: " + pair_text);
            pairs.emplace_back(std::stoi(pair_text.substr(0, dash)),
                               std::stoi(pair_text.substr(dash + 1)));
        }
    }
    WarpTotal total = warp_loss_total(bundles, pairs, a.depth_tol);
    if (a.as_json) {
        json terms = json::array();
        for (const DirectedWarpTerm& t : total.terms)
            terms.push_back({{"t", t.target}, {"c", t.context}, {"loss", t.loss},
                             {"valid_px", t.valid_px}});
        std::cout << json{{"loss", total.loss}, {"per_pair", terms}}.dump(2) << "\n";
    } else {
        std::cout << "loss = " << total.loss << "\n";
        for (const DirectedWarpTerm& t : total.terms)
            std::cout << "  " << t.target << " -> " << t.context << ": " << t.loss
                      << " (" << t.valid_px << " px)\n";
    }
}

// ---------------------------------------------------------------------------
// fuse

struct FuseArgs {
    std::string geometry, semantic, wq, wk, wv, out, attention_out;
};

void run_fuse(const FuseArgs& a) {
    FusionParams params{dmap_to_matrix(load_dmap(a.wq), "--wq"),
                        dmap_to_matrix(load_dmap(a.wk), "--wk"),
                        dmap_to_matrix(load_dmap(a.wv), "--wv")};
    FusionResult res = fuse_with_attention(dmap_to_matrix(load_dmap(a.geometry), "--geometry"),
                                           dmap_to_matrix(load_dmap(a.semantic), "--semantic"),
                                           params);
    save_dmap(matrix_to_dmap(res.output), a.out);
    if (!a.attention_out.empty()) save_dmap(matrix_to_dmap(res.attention), a.attention_out);
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
    std::string op = "fuse";
    std::uint64_t seed = 7;
    std::vector<int> sizes;
    bool as_json = false;
};

json gradcheck_fuse(std::uint64_t seed, int n, int d, int dk) {
    Xoshiro256ss rng(seed);
    auto rand_mat = [&](int r, int c) {
        Eigen::MatrixXd m(r, c);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
        return m;
    };
    Eigen::MatrixXd x = rand_mat(n, d), s = rand_mat(n, d);
    FusionParams params{rand_mat(d, dk), rand_mat(d, dk), rand_mat(d, dk)};
    Eigen::MatrixXd upstream = rand_mat(n, dk);

    FusionGradients analytic = fuse_backward(x, s, params, upstream);
    auto objective = [&](const Eigen::MatrixXd& xx, const Eigen::MatrixXd& ss,
                         const FusionParams& pp) {
        return (fuse(xx, ss, pp).array() * upstream.array()).sum();
    };
    const double h = 1e-6;
    auto fd = [&](Eigen::MatrixXd& target) {
        Eigen::MatrixXd grad(target.rows(), target.cols());
        for (Eigen::Index i = 0; i < target.rows(); ++i) {
            for (Eigen::Index j = 0; j < target.cols(); ++j) {
                double orig = target(i, j);
                target(i, j) = orig + h;
                double hi = objective(x, s, params);
                target(i, j) = orig - h;
                double lo = objective(x, s, params);
                target(i, j) = orig;
                grad(i, j) = (hi - lo) / (2.0 * h);
            }
        }
        return grad;
    };
    json rel = {{"geometry", rel_l2(flatten(analytic.grad_geometry), flatten(fd(x)))},
                {"semantic", rel_l2(flatten(analytic.grad_semantic), flatten(fd(s)))},
                {"w_q", rel_l2(flatten(analytic.grad_w_q), flatten(fd(params.w_q)))},
                {"w_k", rel_l2(flatten(analytic.grad_w_k), flatten(fd(params.w_k)))},
                {"w_v", rel_l2(flatten(analytic.grad_w_v), flatten(fd(params.w_v)))}};
    return rel;
}

json gradcheck_warp(std::uint64_t seed, int height, int width, int depth_ch) {
    Xoshiro256ss rng(seed);
    CameraView target = make_camera(16, 16, width / 2.0, height / 2.0, width, height,
                                    Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
    double ang = 0.02;
    Eigen::Matrix3d rot_y;
    rot_y << std::cos(ang), 0, std::sin(ang), 0, 1, 0, -std::sin(ang), 0, std::cos(ang);
    CameraView context = make_camera(16, 16, width / 2.0, height / 2.0, width, height,
                                     rot_y, Eigen::Vector3d(0.05, 0.0, 0.0));

    // Depths describe the world plane z = 3 seen from each camera, so the
    // depth-consistency check passes wherever the warp lands in bounds.
    DenseMap target_depth(height, width, 1, 3.0);
    DenseMap context_depth(height, width, 1);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            Eigen::Vector3d dir = context.rotation.transpose() *
                                  Eigen::Vector3d((x + 0.5 - context.cx()) / context.fx(),
                                                  (y + 0.5 - context.cy()) / context.fy(), 1.0);
            Eigen::Vector3d origin = context.camera_center_world();
            context_depth.at(y, x, 0) = (3.0 - origin.z()) / dir.z();
        }
    }
    DenseMap target_feat(height, width, depth_ch), context_feat(height, width, depth_ch);
    for (double& v : target_feat.data) v = rng.uniform(0.2, 1.2);
    for (double& v : context_feat.data) v = rng.uniform(0.2, 1.2);

    WarpLossResult analytic = warp_distance(target, context, target_feat, context_feat,
                                            target_depth, context_depth, 0.05);
    const double h = 1e-6;
    auto fd = [&](DenseMap& map) {
        std::vector<double> grad(map.data.size());
        for (std::size_t i = 0; i < map.data.size(); ++i) {
            double orig = map.data[i];
            map.data[i] = orig + h;
            double hi = warp_distance(target, context, target_feat, context_feat, target_depth,
                                      context_depth, 0.05).loss;
            map.data[i] = orig - h;
            double lo = warp_distance(target, context, target_feat, context_feat, target_depth,
                                      context_depth, 0.05).loss;
            map.data[i] = orig;
            grad[i] = (hi - lo) / (2.0 * h);
        }
        return grad;
    };
    json rel = {{"target_features", rel_l2(analytic.grad_target_features.data, fd(target_feat))},
                {"context_features",
                 rel_l2(analytic.grad_context_features.data, fd(context_feat))}};
    return rel;
}

void run_gradcheck(const GradcheckArgs& a) {
    if (a.sizes.size() != 3) throw ConfigError("--sizes expects three integers");
    for (int s : a.sizes)
        if (s <= 0) throw ConfigError("--sizes entries must be positive");
    json rel = a.op == "fuse" ? gradcheck_fuse(a.seed, a.sizes[0], a.sizes[1], a.sizes[2])
                              : gradcheck_warp(a.seed, a.sizes[0], a.sizes[1], a.sizes[2]);
    double max_err = 0.0;
    for (const auto& [key, value] : rel.items()) max_err = std::max(max_err, value.get<double>());
    const double tol = 1e-4;
    json out = {{"op", a.op},          {"seed", a.seed},        {"sizes", a.sizes},
                {"rel_error", rel},    {"max_rel_error", max_err},
                {"tolerance", tol},    {"pass", max_err < tol}};
    if (a.as_json)
        std::cout << out.dump(2) << "\n";
    else
        std::cout << "gradcheck " << a.op << ": max rel error " << max_err
                  << (max_err < tol ? " (pass)" : " (FAIL)") << "\n";
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
    std::string pred, gt, kind = "psnr";
    int classes = 0;  // 0 = infer from the label grids
    bool as_json = false;
};

void run_metrics(const MetricsArgs& a) {
    DenseMap pred = load_dmap(a.pred), gt = load_dmap(a.gt);
    double value = 0.0;
    int classes = a.classes;
    if (a.kind == "psnr") {
        value = psnr(pred, gt);
    } else if (a.kind == "ssim") {
        value = ssim(pred, gt);
    } else {
        if (classes <= 0) {
            double top = 0.0;
            for (double v : gt.data) top = std::max(top, v);
            for (double v : pred.data) top = std::max(top, v);
            classes = static_cast<int>(std::llround(top)) + 1;
        }
        value = miou(pred, gt, classes);
    }
    if (a.as_json) {
        json out = {{"kind", a.kind}, {"value", value}};
        if (a.kind == "miou") out["classes"] = classes;
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << a.kind << " = " << value << "\n";
    }
}

// ---------------------------------------------------------------------------
// totalloss

struct TotalLossArgs {
    std::vector<double> components;
    std::string config;
    bool as_json = false;
};

LossWeights load_weights(const std::string& path) {
    LossWeights w;
    if (path.empty()) return w;
    std::ifstream is(path);
    if (!is) throw Error("cannot open: " + path);
    json j = json::parse(is);
    auto take = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    take("lambda_lpips", w.lambda_lpips);
    take("lambda_feat", w.lambda_feat);
    take("lambda_warp", w.lambda_warp);
    take("lambda_depth", w.lambda_depth);
    take("lambda_pose", w.lambda_pose);
    take("huber_delta", w.huber_delta);
    take("depth_mask_fraction", w.depth_mask_fraction);
    validate_weights(w);
    return w;
}

void run_totalloss(const TotalLossArgs& a) {
    if (a.components.size() != 5)
        throw ConfigError("--components expects five values: rgb,feat,warp,depth,pose");
    LossWeights w = load_weights(a.config);
    LossReport r = total_loss(a.components[0], a.components[1], a.components[2],
                              a.components[3], a.components[4], w);
    if (a.as_json) {
        json out = {{"rgb", r.rgb},     {"feat", r.feat},   {"warp", r.warp},
                    {"depth", r.depth}, {"pose", r.pose},   {"total", r.total},
                    {"weights",
                     {{"lambda_lpips", w.lambda_lpips},
                      {"lambda_feat", w.lambda_feat},
                      {"lambda_warp", w.lambda_warp},
                      {"lambda_depth", w.lambda_depth},
                      {"lambda_pose", w.lambda_pose}}}};
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << "total = " << r.total << "\n";
    }
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::uint64_t seed = 0;
    std::string config, out_dir;
};

SynthConfig load_synth_config(const std::string& path) {
    SynthConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream is(path);
    if (!is) throw Error("cannot open: " + path);
    json j = json::parse(is);
    auto take_i = [&](const char* key, int& field) {
        if (j.contains(key)) field = j.at(key).get<int>();
    };
    auto take_d = [&](const char* key, double& field) {
        if (j.contains(key)) field = j.at(key).get<double>();
    };
    take_i("n_objects", cfg.n_objects);
    take_i("n_classes", cfg.n_classes);
    take_i("feature_dim", cfg.feature_dim);
    take_i("n_cameras", cfg.n_cameras);
    take_i("image_size", cfg.image_size);
    take_d("orbit_radius", cfg.orbit_radius);
    take_i("face_grid", cfg.face_grid);
    take_d("base_scale", cfg.base_scale);
    take_d("outlier_fraction", cfg.outlier_fraction);
    take_d("outlier_confidence_boost", cfg.outlier_confidence_boost);
    take_d("outlier_inset", cfg.outlier_inset);
    return cfg;
}

void run_synth(const SynthArgs& a) {
    SynthConfig cfg = load_synth_config(a.config);
    SyntheticScene scene = generate(a.seed, cfg);
    fs::create_directories(a.out_dir);
    fs::path dir(a.out_dir);
    save_scene(scene.gaussians, (dir / "scene.fgsc").string());

    char name[32];
    for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
        std::snprintf(name, sizeof(name), "cam_%03zu.json", c);
        save_camera_json(scene.cameras[c], (dir / name).string());
        std::snprintf(name, sizeof(name), "gt_%03zu.dmap", c);
        DenseMap gt(cfg.image_size, cfg.image_size, 1);
        for (std::size_t i = 0; i < gt.data.size(); ++i)
            gt.data[i] = static_cast<double>(scene.gt_labels[c][i]);
        save_dmap(gt, (dir / name).string());
    }

    DenseMap class_feat(cfg.n_classes, cfg.feature_dim, 1);
    for (int k = 0; k < cfg.n_classes; ++k)
        for (int d = 0; d < cfg.feature_dim; ++d)
            class_feat.at(k, d, 0) = scene.class_features(k, d);
    save_dmap(class_feat, (dir / "class_features.dmap").string());

    DenseMap labels(static_cast<int>(scene.labels.size()), 1, 1);
    for (std::size_t i = 0; i < scene.labels.size(); ++i)
        labels.data[i] = static_cast<double>(scene.labels[i]);
    save_dmap(labels, (dir / "labels.dmap").string());

    json meta = {{"seed", a.seed},
                 {"n_primitives", scene.gaussians.primitives.size()},
                 {"n_cameras", scene.cameras.size()},
                 {"config",
                  {{"n_objects", cfg.n_objects},
                   {"n_classes", cfg.n_classes},
                   {"feature_dim", cfg.feature_dim},
                   {"n_cameras", cfg.n_cameras},
                   {"image_size", cfg.image_size},
                   {"orbit_radius", cfg.orbit_radius},
                   {"face_grid", cfg.face_grid},
                   {"base_scale", cfg.base_scale},
                   {"outlier_fraction", cfg.outlier_fraction},
                   {"outlier_confidence_boost", cfg.outlier_confidence_boost},
                   {"outlier_inset", cfg.outlier_inset}}}};
    std::ofstream os(dir / "synth_meta.json");
    if (!os) throw Error("cannot open for write: " + (dir / "synth_meta.json").string());
    os << meta.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::string op = "render";
    int n = 10000;
    int image_size = 256;
    double voxel_size = 0.25;
    double lambda = 2.0;
    int runs = 5;
    int threads = 1;
    bool as_json = true;  // the report is the payload; plain text adds nothing
};

GaussianScene bench_scene(int n, int feature_dim) {
    Xoshiro256ss rng(42);
    GaussianScene scene;
    scene.feature_dim = feature_dim;
    scene.sh_degree = 0;
    scene.primitives.reserve(n);
    for (int i = 0; i < n; ++i) {
        GaussianPrimitive p;
        p.center = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        p.covariance = 0.0004 * Eigen::Matrix3d::Identity();
        Eigen::Vector3d color(rng.uniform(), rng.uniform(), rng.uniform());
        p.sh_color = (color / kSh0).transpose();
        p.opacity = rng.uniform(0.3, 0.9);
        p.confidence = rng.uniform(0.2, 1.0);
        p.feature = Eigen::VectorXd::Zero(feature_dim);
        for (int c = 0; c < feature_dim; ++c) p.feature(c) = rng.uniform(-1.0, 1.0);
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

void run_bench(const BenchArgs& a) {
    GaussianScene scene = bench_scene(a.n, 8);
    std::vector<double> times_ms;
    double checksum = 0.0;
    for (int r = 0; r < a.runs; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        if (a.op == "render") {
            CameraView view = detail::orbit_camera(0.3, 0.35, 4.0, a.image_size);
            RenderOutput out = render(scene, view, Eigen::Vector3d::Zero(), a.threads);
            checksum += out.alpha.data[out.alpha.data.size() / 2];
        } else {
            GaussianScene merged = voxelize_scene(scene, a.voxel_size, a.lambda);
            checksum += static_cast<double>(merged.primitives.size());
        }
        auto t1 = std::chrono::steady_clock::now();
        times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times_ms.begin(), times_ms.end());
    double median = times_ms[times_ms.size() / 2];
    if (times_ms.size() % 2 == 0)
        median = 0.5 * (median + times_ms[times_ms.size() / 2 - 1]);
    double throughput = a.op == "render"
                            ? static_cast<double>(a.image_size) * a.image_size / (median / 1000.0)
                            : static_cast<double>(a.n) / (median / 1000.0);
    json out = {{"op", a.op},
                {"n", a.n},
                {"runs", a.runs},
                {"wall_ms_median", median},
                {"throughput_per_s", throughput},
                {"throughput_unit", a.op == "render" ? "pixels/s" : "primitives/s"},
                {"checksum", checksum / a.runs}};
    if (a.op == "render") out["image_size"] = a.image_size;
    else out["voxel_size"] = a.voxel_size;
    (void)a.as_json;
    std::cout << out.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feature-splat rendering, warping, voxelization and fusion toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    int threads = 1;
    app.add_option("--threads", threads, "worker threads for parallel operations")
        ->envname("SPLATSEM_THREADS")
        ->check(CLI::PositiveNumber);

    RenderArgs render_args;
    auto* sub_render = app.add_subcommand("render", "render a scene from one camera");
    sub_render->add_option("--scene", render_args.scene, "input .fgsc scene")->required();
    sub_render->add_option("--camera", render_args.camera, "camera .json")->required();
    sub_render->add_option("--out", render_args.out, "output color .ppm")->required();
    sub_render->add_option("--color-out", render_args.color_out, "full-precision color .dmap");
    sub_render->add_option("--feature-out", render_args.feature_out, "feature .dmap");
    sub_render->add_option("--depth-out", render_args.depth_out, "depth .dmap");
    sub_render->add_option("--alpha-out", render_args.alpha_out, "alpha .dmap");
    sub_render->add_option("--preview-out", render_args.preview_out,
                           "feature PCA preview .ppm");
    sub_render->add_option("--bg", render_args.bg, "background color r,g,b")
        ->delimiter(',')
        ->expected(3);

    VoxelizeArgs vox_args;
    auto* sub_vox = app.add_subcommand("voxelize", "compact a scene into voxels");
    sub_vox->add_option("--scene", vox_args.scene, "input .fgsc scene")->required();
    sub_vox->add_option("--voxel-size", vox_args.voxel_size, "voxel edge length")
        ->required()
        ->check(CLI::PositiveNumber);
    sub_vox->add_option("--lambda", vox_args.lambda, "semantic distance weight")
        ->check(CLI::NonNegativeNumber);
    sub_vox->add_option("--out", vox_args.out, "output .fgsc scene")->required();
    sub_vox->add_option("--stats", vox_args.stats, "stats .json");

    WarpArgs warp_args;
    auto* sub_warp = app.add_subcommand("warploss", "bidirectional feature warping loss");
    sub_warp->add_option("--views", warp_args.views, "camera .json list")
        ->required()
        ->delimiter(',');
    sub_warp->add_option("--features", warp_args.features, "feature .dmap list")
        ->required()
        ->delimiter(',');
    sub_warp->add_option("--depths", warp_args.depths, "depth .dmap list")
        ->required()
        ->delimiter(',');
    sub_warp->add_option("--pairs", warp_args.pairs,
                         "T-C index pairs (default: all unordered pairs)")
        ->delimiter(',');
    sub_warp->add_option("--depth-tol", warp_args.depth_tol, "relative depth tolerance")
        ->check(CLI::PositiveNumber);
    sub_warp->add_flag("--json", warp_args.as_json, "emit JSON");

    FuseArgs fuse_args;
    auto* sub_fuse = app.add_subcommand("fuse", "token cross-attention fusion");
    sub_fuse->add_option("--geometry", fuse_args.geometry, "query tokens .dmap")->required();
    sub_fuse->add_option("--semantic", fuse_args.semantic, "key/value tokens .dmap")->required();
    sub_fuse->add_option("--wq", fuse_args.wq, "query projection .dmap")->required();
    sub_fuse->add_option("--wk", fuse_args.wk, "key projection .dmap")->required();
    sub_fuse->add_option("--wv", fuse_args.wv, "value projection .dmap")->required();
    sub_fuse->add_option("--out", fuse_args.out, "fused tokens .dmap")->required();
    sub_fuse->add_option("--attention-out", fuse_args.attention_out, "attention matrix .dmap");

    GradcheckArgs grad_args;
    auto* sub_grad = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    sub_grad->add_option("--op", grad_args.op, "operation to check")
        ->check(CLI::IsMember({"fuse", "warp"}));
    sub_grad->add_option("--seed", grad_args.seed, "PRNG seed");
    sub_grad
        ->add_option("--sizes", grad_args.sizes,
                     "fuse: tokens,dim,key_dim / warp: height,width,channels")
        ->required()
        ->delimiter(',');
    sub_grad->add_flag("--json", grad_args.as_json, "emit JSON");

    MetricsArgs metrics_args;
    auto* sub_metrics = app.add_subcommand("metrics", "image / label-grid metrics");
    sub_metrics->add_option("--pred", metrics_args.pred, "predicted .dmap")->required();
    sub_metrics->add_option("--gt", metrics_args.gt, "reference .dmap")->required();
    sub_metrics->add_option("--kind", metrics_args.kind, "metric")
        ->check(CLI::IsMember({"psnr", "ssim", "miou"}));
    sub_metrics->add_option("--classes", metrics_args.classes, "label count for miou");
    sub_metrics->add_flag("--json", metrics_args.as_json, "emit JSON");

    TotalLossArgs total_args;
    auto* sub_total = app.add_subcommand("totalloss", "weighted objective composition");
    sub_total->add_option("--components", total_args.components, "rgb,feat,warp,depth,pose")
        ->required()
        ->delimiter(',');
    sub_total->add_option("--config", total_args.config, "loss weight .json");
    sub_total->add_flag("--json", total_args.as_json, "emit JSON");

    SynthArgs synth_args;
    auto* sub_synth = app.add_subcommand("synth", "generate a synthetic multi-view scene");
    sub_synth->add_option("--seed", synth_args.seed, "PRNG seed");
    sub_synth->add_option("--config", synth_args.config, "config .json (defaults if absent)");
    sub_synth->add_option("--out-dir", synth_args.out_dir, "output directory")->required();

    BenchArgs bench_args;
    auto* sub_bench = app.add_subcommand("bench", "micro-benchmarks");
    sub_bench->add_option("--op", bench_args.op, "operation")
        ->check(CLI::IsMember({"render", "voxelize"}));
    sub_bench->add_option("--n", bench_args.n, "primitive count")->check(CLI::PositiveNumber);
    sub_bench->add_option("--image-size", bench_args.image_size, "render resolution")
        ->check(CLI::PositiveNumber);
    sub_bench->add_option("--voxel-size", bench_args.voxel_size, "voxel edge length")
        ->check(CLI::PositiveNumber);
    sub_bench->add_option("--lambda", bench_args.lambda, "semantic distance weight")
        ->check(CLI::NonNegativeNumber);
    sub_bench->add_option("--runs", bench_args.runs, "timed repetitions (median reported)")
        ->check(CLI::Range(5, 1000));
    sub_bench->add_flag("--json", bench_args.as_json, "emit JSON (always on; kept for symmetry)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        render_args.threads = threads;
        bench_args.threads = threads;
        if (app.got_subcommand(sub_render)) run_render(render_args);
        else if (app.got_subcommand(sub_vox)) run_voxelize(vox_args);
        else if (app.got_subcommand(sub_warp)) run_warploss(warp_args);
        else if (app.got_subcommand(sub_fuse)) run_fuse(fuse_args);
        else if (app.got_subcommand(sub_grad)) run_gradcheck(grad_args);
        else if (app.got_subcommand(sub_metrics)) run_metrics(metrics_args);
        else if (app.got_subcommand(sub_total)) run_totalloss(total_args);
        else if (app.got_subcommand(sub_synth)) run_synth(synth_args);
        else if (app.got_subcommand(sub_bench)) run_bench(bench_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
