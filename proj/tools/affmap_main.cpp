#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "affmap/io.hpp"
#include "affmap/pipeline.hpp"
#include "affmap/rng.hpp"
#include "affmap/testbed.hpp"

namespace fs = std::filesystem;
using namespace affmap;

#ifndef AFFMAP_ASSET_DIR
#define AFFMAP_ASSET_DIR "assets/skeletons"
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNoConvergence = 3;

struct CommonArgs {
    std::string dataset_dir;
    std::string assets_dir = AFFMAP_ASSET_DIR;
    std::string config_path;
    double theta_step = 0.0;  // 0: from suite.json / config
    std::uint64_t seed = 0;
};

RunConfig make_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = load_config(args.config_path);
    if (args.theta_step > 0.0) cfg.theta_step = args.theta_step;
    cfg.seed = args.seed;
    return cfg;
}

std::map<std::string, SkeletonModel> load_assets(const CommonArgs& args) {
    return load_skeleton_dir(args.assets_dir);
}

SceneDataset load_scene_dataset(const CommonArgs& args, RunConfig& cfg) {
    double suite_theta = 0.0;
    SceneDataset dataset = load_dataset(args.dataset_dir, load_assets(args), &suite_theta);
    if (args.theta_step <= 0.0 && suite_theta > 0.0) cfg.theta_step = suite_theta;
    return dataset;
}

int cmd_synth(const CommonArgs& args, const std::string& out_dir, double theta_step) {
    const auto skeletons = load_assets(args);
    std::vector<PointCloud> clouds;
    const SceneDataset dataset =
        benchmark_suite(args.seed, skeletons, theta_step, &clouds);
    std::map<std::string, std::vector<SeatInfo>> seats;
    for (const SceneData& scene : dataset.scenes) seats[scene.name] = scene.seats;
    save_dataset(dataset, seats, theta_step, args.seed, out_dir, clouds);

    for (const std::string& a : dataset.affordances) {
        std::size_t pos = 0, total = 0;
        for (const SceneData& scene : dataset.scenes) {
            const auto it = scene.truth.find(a);
            if (it != scene.truth.end()) pos += it->second.size();
            const PoseLattice lattice = make_pose_lattice(
                scene.fields.occ.spec, dataset.skeletons.at(a), theta_step,
                scene.floor_z);
            total += lattice.size();
        }
        std::fprintf(stderr, "%s: %zu positive / %zu total poses (1:%.0f)\n", a.c_str(),
                     pos, total - pos,
                     pos ? static_cast<double>(total - pos) / pos : 0.0);
    }
    std::fprintf(stderr, "wrote %zu rooms to %s\n", dataset.scenes.size(),
                 out_dir.c_str());
    return kExitOk;
}

int cmd_features(const CommonArgs& args, const std::string& affordance,
                 const std::string& scene_name, const std::string& out_path,
                 const std::string& grid_out) {
    RunConfig cfg = make_config(args);
    const SceneDataset dataset = load_scene_dataset(args, cfg);

    SceneDataset selected;
    selected.affordances = dataset.affordances;
    selected.skeletons = dataset.skeletons;
    for (const SceneData& scene : dataset.scenes)
        if (scene_name.empty() || scene.name == scene_name)
            selected.scenes.push_back(scene);
    if (selected.scenes.empty()) {
        std::fprintf(stderr, "error: scene '%s' not found\n", scene_name.c_str());
        return kExitData;
    }

    const auto examples = build_examples(selected, affordance, cfg.theta_step);
    std::ofstream out(out_path);
    if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
        return kExitData;
    }
    out << "AFFFEAT v1\n";
    for (std::size_t k = 0; k < examples.size(); ++k) {
        const auto& ex = examples[k];
        out << "scene " << selected.scenes[k].name << ' ' << ex.size() << ' '
            << ex.dim() << '\n';
        char buf[32];
        for (std::size_t i = 0; i < ex.size(); ++i) {
            out << int(ex.y[i]);
            auto row = ex.x.row(i);
            for (float v : row) {
                std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
                out << buf;
            }
            out << '\n';
        }
    }
    if (!grid_out.empty()) save_grid(selected.scenes.front().fields.occ, grid_out);
    return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& affordance,
              const std::string& method_name, const std::string& out_path) {
    RunConfig cfg = make_config(args);
    const TrainMethod method = method_from_string(method_name);
    const SceneDataset dataset = load_scene_dataset(args, cfg);
    const auto examples = build_examples(dataset, affordance, cfg.theta_step);
    if (examples.size() < 2) {
        std::fprintf(stderr, "error: need at least 2 scenes (train + validation)\n");
        return kExitData;
    }

    // Seeded order; the last scene is the validation scene.
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(cfg.seed ^ 0xf01d5ull);
    rng.shuffle(order);
    std::vector<MultivariateExample> train, val;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        (pos + 1 == order.size() ? val : train).push_back(examples[order[pos]]);
    }

    const AffordanceModel model =
        train_affordance(train, val, method, cfg.pipeline_params(), affordance);
    save_model(model, out_path);
    std::fprintf(stderr, "model written to %s\n", out_path.c_str());
    return model.converged ? kExitOk : kExitNoConvergence;
}

int cmd_map(const CommonArgs& args, const std::string& affordance,
            const std::string& scene_name, const std::string& model_path,
            const std::string& out_dir) {
    RunConfig cfg = make_config(args);
    const SceneDataset dataset = load_scene_dataset(args, cfg);
    const SceneData* scene = nullptr;
    for (const SceneData& s : dataset.scenes)
        if (s.name == scene_name) scene = &s;
    if (!scene) {
        std::fprintf(stderr, "error: scene '%s' not found\n", scene_name.c_str());
        return kExitData;
    }
    AffordanceModel model = load_model(model_path);
    model.affordance = affordance;
    const AffordanceMap map = build_affordance_map(
        *scene, dataset.skeletons.at(affordance), model, cfg.theta_step);
    save_map(map, out_dir, scene_name + "." + affordance);
    std::fprintf(stderr, "map written to %s (%zu skeletons)\n", out_dir.c_str(),
                 map.skeletons.size());
    return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& affordance,
             const std::string& method_name, int k, const std::string& out_path) {
    RunConfig cfg = make_config(args);
    const TrainMethod method = method_from_string(method_name);
    const SceneDataset dataset = load_scene_dataset(args, cfg);
    const EvalReport report = kfold_evaluate(dataset, affordance, method,
                                             cfg.pipeline_params(), k, cfg.seed);
    const std::string csv = metrics_csv({report});
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
    }
    std::fprintf(stderr, "%s/%s: mean F1 %.4f\n", affordance.c_str(),
                 method_name.c_str(), report.mean_f1);
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& method_name,
              const std::vector<double>& ratios, std::size_t n_pos,
              const std::string& out_path) {
    RunConfig cfg = make_config(args);
    const TrainMethod method = method_from_string(method_name);

    double max_ratio = 1.0;
    for (double r : ratios) max_ratio = std::max(max_ratio, r);
    OverlapSpec spec;
    spec.n_pos = n_pos * 2;  // half becomes the held-out split
    spec.ratio = max_ratio;
    spec.seed = cfg.seed;
    const BinaryDataset pool = overlap_imbalance_dataset(spec);

    const auto rows =
        imbalance_sweep(pool, method, ratios, cfg.pipeline_params(), cfg.seed);
    std::ofstream out(out_path);
    if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
        return kExitData;
    }
    out << "ratio,f1,skipped\n";
    for (const SweepRow& row : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%.0f,%.6f,%d\n", row.ratio, row.f1,
                      row.skipped ? 1 : 0);
        out << buf;
    }
    return kExitOk;
}

int cmd_oracle(const std::string& check, int trials, int n, std::uint64_t seed) {
    Rng rng(seed ^ 0x04ac1eull);
    int agree = 0;
    if (check == "argmax") {
        for (int t = 0; t < trials; ++t) {
            const std::size_t dim = 4 + rng.uniform_index(6);
            MultivariateExample ex;
            const std::size_t count = 1 + rng.uniform_index(n);
            ex.x = FeatureMatrix(count, dim);
            ex.y.resize(count);
            std::vector<double> row(dim);
            bool any_pos = false;
            for (std::size_t i = 0; i < count; ++i) {
                for (double& v : row) v = rng.gaussian();
                ex.x.set_row(i, row);
                ex.y[i] = rng.uniform() < 0.3 ? 1 : -1;
                any_pos = any_pos || ex.y[i] > 0;
            }
            if (!any_pos) ex.y[0] = 1;
            std::vector<double> w(dim);
            for (double& v : w) v = rng.gaussian();
            const auto fast = find_most_violated(ex, w, LossKind::f1);
            const auto slow = brute_force_argmax(ex, w, LossKind::f1);
            if (fast.objective == slow.objective) ++agree;
        }
    } else if (check == "dt") {
        for (int t = 0; t < trials; ++t) {
            OccupancyGrid occ;
            occ.spec.origin = {0, 0, 0};
            occ.spec.cell_size = 0.1;
            occ.spec.nx = 2 + static_cast<int>(rng.uniform_index(15));
            occ.spec.ny = 2 + static_cast<int>(rng.uniform_index(15));
            occ.spec.nz = 2 + static_cast<int>(rng.uniform_index(15));
            occ.occupied.assign(occ.spec.cell_count(), 0);
            bool any = false;
            for (auto& cell : occ.occupied)
                if (rng.uniform() < 0.05) {
                    cell = 1;
                    any = true;
                }
            if (!any) occ.occupied[rng.uniform_index(occ.occupied.size())] = 1;
            const DistanceField fast = distance_transform(occ);
            const DistanceField slow = brute_force_dt(occ);
            if (fast.squared_cells == slow.squared_cells) ++agree;
        }
    } else if (check == "solver") {
        for (int t = 0; t < trials; ++t) {
            const std::size_t count = 12 + rng.uniform_index(20);
            const std::size_t dim = 3 + rng.uniform_index(6);
            BinaryDataset data;
            data.x = FeatureMatrix(count, dim);
            data.y.resize(count);
            std::vector<double> row(dim);
            for (std::size_t i = 0; i < count; ++i) {
                const bool pos = i < count / 3 + 1;
                for (std::size_t d = 0; d < dim; ++d)
                    row[d] = rng.gaussian() + (pos && d == 0 ? 1.5 : 0.0);
                data.x.set_row(i, row);
                data.y[i] = pos ? 1 : -1;
            }
            TrainConfig cfg;
            cfg.c = 1.0;
            cfg.tol = 1e-8;
            cfg.max_iter = 20000;
            cfg.seed = seed + t;
            const TrainResult res = train_soft_margin(data, cfg);
            const double ref = reference_svm_primal(data, cfg.c, cfg.c);
            if (std::fabs(res.primal_objective - ref) <=
                1e-4 * std::max(1.0, std::fabs(ref)))
                ++agree;
        }
    } else {
        std::fprintf(stderr, "error: unknown check '%s'\n", check.c_str());
        return kExitUsage;
    }
    std::printf("%d/%d agree\n", agree, trials);
    return agree == trials ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial affordance maps from voxelized 3D scenes"};
    app.require_subcommand(1);

    CommonArgs common;

    auto add_common = [&](CLI::App* cmd, bool needs_seed, bool needs_dataset) {
        cmd->add_option("--assets", common.assets_dir, "skeleton asset directory");
        cmd->add_option("--config", common.config_path, "run configuration JSON");
        cmd->add_option("--theta-step", common.theta_step, "orientation step (rad)");
        auto* seed = cmd->add_option("--seed", common.seed, "RNG seed");
        if (needs_seed) seed->required();
        if (needs_dataset)
            cmd->add_option("--dataset", common.dataset_dir, "dataset directory")
                ->required();
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark rooms");
    std::string synth_out;
    double synth_theta = 0.9;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--rooms-theta-step", synth_theta,
                      "orientation step baked into the ground truth");
    add_common(synth, true, false);

    // features
    auto* features = app.add_subcommand("features", "extract per-pose feature matrices");
    std::string feat_affordance, feat_scene, feat_out, feat_grid;
    features->add_option("--affordance", feat_affordance)->required();
    features->add_option("--scene", feat_scene, "restrict to one scene");
    features->add_option("--out", feat_out)->required();
    features->add_option("--grid-out", feat_grid, "also dump the occupancy grid");
    add_common(features, false, true);

    // train
    auto* train = app.add_subcommand("train", "train an affordance classifier");
    std::string train_affordance_name, train_method = "ssvm", train_out;
    train->add_option("--affordance", train_affordance_name)->required();
    train->add_option("--method", train_method,
                      "ssvm | random-sample | focused | zsvm | dcm");
    train->add_option("--out", train_out)->required();
    add_common(train, true, true);

    // map
    auto* map_cmd = app.add_subcommand("map", "build the affordance map for a scene");
    std::string map_affordance, map_scene, map_model, map_out;
    map_cmd->add_option("--affordance", map_affordance)->required();
    map_cmd->add_option("--scene", map_scene)->required();
    map_cmd->add_option("--model", map_model)->required();
    map_cmd->add_option("--out", map_out)->required();
    add_common(map_cmd, false, true);

    // eval
    auto* eval = app.add_subcommand("eval", "k-fold cross validation metrics");
    std::string eval_affordance, eval_method = "ssvm", eval_out;
    int eval_k = 4;
    eval->add_option("--affordance", eval_affordance)->required();
    eval->add_option("--method", eval_method);
    eval->add_option("--k", eval_k);
    eval->add_option("--out", eval_out, "CSV output (stdout when omitted)");
    add_common(eval, true, true);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "class-imbalance sweep on synthetic data");
    std::string sweep_method = "random-sample", sweep_out;
    std::vector<double> sweep_ratios = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
    std::size_t sweep_npos = 24;
    sweep->add_option("--method", sweep_method);
    sweep->add_option("--ratios", sweep_ratios, "neg:pos ratios")->delimiter(',');
    sweep->add_option("--n-pos", sweep_npos, "training positives");
    sweep->add_option("--out", sweep_out)->required();
    add_common(sweep, true, false);

    // oracle
    auto* oracle = app.add_subcommand("oracle", "run brute-force cross-checks");
    std::string oracle_check = "argmax";
    int oracle_trials = 200, oracle_n = 10;
    std::uint64_t oracle_seed = 0;
    oracle->add_option("--check", oracle_check, "argmax | dt | solver");
    oracle->add_option("--trials", oracle_trials);
    oracle->add_option("--n", oracle_n, "max poses per example (argmax)");
    oracle->add_option("--seed", oracle_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, synth_out, synth_theta);
        if (features->parsed())
            return cmd_features(common, feat_affordance, feat_scene, feat_out, feat_grid);
        if (train->parsed())
            return cmd_train(common, train_affordance_name, train_method, train_out);
        if (map_cmd->parsed())
            return cmd_map(common, map_affordance, map_scene, map_model, map_out);
        if (eval->parsed())
            return cmd_eval(common, eval_affordance, eval_method, eval_k, eval_out);
        if (sweep->parsed())
            return cmd_sweep(common, sweep_method, sweep_ratios, sweep_npos, sweep_out);
        if (oracle->parsed())
            return cmd_oracle(oracle_check, oracle_trials, oracle_n, oracle_seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
