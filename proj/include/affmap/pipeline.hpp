#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "affmap/dataset.hpp"
#include "affmap/scene.hpp"
#include "affmap/skeleton.hpp"
#include "affmap/ssvm.hpp"
#include "affmap/svm_linear.hpp"

namespace affmap {

// Ground-truth pose on the scene's enumeration lattice.
struct GroundTruthPose {
    int ix = 0;
    int iy = 0;
    int iz = 0;      // z level, 0..2
    int itheta = 0;

    auto operator<=>(const GroundTruthPose&) const = default;
};

// Analytic seat/work spot emitted by the testbed generator; used by the
// geometric map checks.
struct SeatInfo {
    std::string affordance;
    double x = 0.0;
    double y = 0.0;
    double facing = 0.0;  // radians
};

struct SceneData {
    std::string name;
    Scene fields;
    double floor_z = 0.0;
    std::map<std::string, std::vector<GroundTruthPose>> truth;
    std::vector<SeatInfo> seats;
};

struct SceneDataset {
    std::vector<SceneData> scenes;
    std::vector<std::string> affordances;
    std::map<std::string, SkeletonModel> skeletons;
};

enum class TrainMethod { ssvm, random_sample, focused, zsvm, dcm };

TrainMethod method_from_string(const std::string& name);
std::string to_string(TrainMethod method);

struct PipelineParams {
    double theta_step = 0.1;
    SsvmParams ssvm;
    TrainConfig svm;
    std::vector<double> ratio_grid = {1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
    double focused_band = 1.0;
    std::uint64_t seed = 0;
};

// Per-affordance trained classifier in decision-value form: f(x) = w.x - b.
// Structured models carry b = 0 and their training trace.
struct AffordanceModel {
    std::string affordance;
    std::string method;
    std::string kind;  // "linear" or "ssvm"
    std::vector<double> w;
    double b = 0.0;
    bool converged = true;
    std::vector<std::pair<int, double>> trace;  // (iteration, train F1)

    double margin(std::span<const float> x) const { return dot(w, x) - b; }
};

// One multivariate example per scene: every lattice pose becomes a feature
// row, labeled +1 iff it appears in the affordance's ground-truth set.
std::vector<MultivariateExample> build_examples(const SceneDataset& dataset,
                                                const std::string& affordance,
                                                double theta_step);

BinaryDataset pool_examples(const std::vector<MultivariateExample>& examples);

// Trains by `method` on the training examples, tuning whatever the method
// needs (snapshot for the structured model, imbalance ratio or bias shift for
// the baselines) on the validation examples.
AffordanceModel train_affordance(const std::vector<MultivariateExample>& train,
                                 const std::vector<MultivariateExample>& validation,
                                 TrainMethod method, const PipelineParams& params,
                                 const std::string& affordance);

struct NmsConfig {
    double radius = 0.3;        // meters in (x, y)
    double theta_window = 0.5;  // radians
    int max_skeletons = 50;
};

struct PlacedSkeleton {
    Pose pose;
    double margin = 0.0;
};

struct AffordanceMap {
    std::string affordance;
    PoseLattice lattice;
    std::vector<double> margins;      // per pose, lattice order
    std::vector<std::int8_t> labels;  // sign of margin
    std::vector<PlacedSkeleton> skeletons;
    std::vector<double> contour;      // per (ix, iy): max margin over (z, theta)
    double contour_min = 0.0;
    double contour_max = 0.0;
};

AffordanceMap build_affordance_map(const SceneData& scene, const SkeletonModel& skel,
                                   const AffordanceModel& model, double theta_step,
                                   const NmsConfig& nms = {});

struct FoldResult {
    int fold = 0;
    Metrics test;
};

struct EvalReport {
    std::string affordance;
    std::string method;
    std::vector<FoldResult> folds;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;
};

// Seeded scene-level fold assignment; every scene lands in exactly one test
// fold. The last training scene in shuffled order serves as validation.
std::vector<int> assign_folds(std::size_t scene_count, int k, std::uint64_t seed);

EvalReport kfold_evaluate(const std::vector<MultivariateExample>& examples,
                          const std::string& affordance, TrainMethod method,
                          const PipelineParams& params, int k, std::uint64_t seed);

EvalReport kfold_evaluate(const SceneDataset& dataset, const std::string& affordance,
                          TrainMethod method, const PipelineParams& params, int k,
                          std::uint64_t seed);

struct SweepRow {
    double ratio = 0.0;
    double f1 = 0.0;
    bool skipped = false;
};

// Fixed held-out split, training-negative subsampling per ratio. Reproduces
// the rise-then-collapse imbalance curve when run over overlapping classes.
std::vector<SweepRow> imbalance_sweep(const BinaryDataset& pool, TrainMethod method,
                                      std::span<const double> ratios,
                                      const PipelineParams& params, std::uint64_t seed,
                                      const BinaryDataset* heldout = nullptr);

std::string metrics_csv(const std::vector<EvalReport>& reports);

}  // namespace affmap
