#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "affmap/pipeline.hpp"
#include "affmap/scene.hpp"
#include "affmap/ssvm.hpp"
#include "affmap/svm_linear.hpp"

namespace affmap {

// Synthetic rooms with analytic ground truth, plus the brute-force oracles
// the property tests and acceptance runs check against.

enum class FurnitureKind { chair, sofa, desk, bench };

struct FurnitureItem {
    FurnitureKind kind = FurnitureKind::chair;
    double x = 0.0;       // footprint center
    double y = 0.0;
    double facing = 0.0;  // user-facing direction, radians

    // Parametric dimensions; unused fields ignore their kind.
    double seat_height = 0.39;  // chair / sofa seat top
    double seat_size = 0.45;    // chair seat side
    bool backrest = true;
    double length = 1.8;        // sofa / bench long side
    double height = 0.74;       // desk / bench top
    double top_x = 1.2;         // desk top size
    double top_y = 0.6;
};

struct RoomSpec {
    std::string name = "room";
    double extent_x = 3.0;
    double extent_y = 3.0;
    double extent_z = 2.2;
    double wall_thickness = 0.05;
    double floor_thickness = 0.05;
    std::vector<FurnitureItem> furniture;
    std::uint64_t seed = 0;

    void validate() const;  // throws listing violations
};

struct GeneratedRoom {
    PointCloud cloud;
    std::map<std::string, std::vector<GroundTruthPose>> truth;
    std::vector<SeatInfo> seats;
};

inline constexpr double kSurfaceDensity = 400.0;  // points per square meter
inline constexpr int kScenePadding = 2;           // voxelize padding, cells

// Samples surface points for floor, walls and furniture and derives the
// ground-truth pose sets analytically (seat centers facing away from
// backrests, desk/bench front edges facing the surface), snapped to the pose
// lattice of the voxelized cloud.
GeneratedRoom generate_room(const RoomSpec& spec,
                            const std::map<std::string, SkeletonModel>& skeletons,
                            double theta_step);

// Exact argmax of loss + w Psi over all 2^n labelings; n is hard-capped.
// Shares nothing with find_most_violated beyond the domain types.
ViolationResult brute_force_argmax(const MultivariateExample& example,
                                   std::span<const double> w, LossKind kind);

// Direct min over occupied cells, O(cells x occupied).
DistanceField brute_force_dt(const OccupancyGrid& occ);

// Gaussian positives against a two-component negative mixture whose near
// component overlaps them; the stock imbalanced-classes instance.
struct OverlapSpec {
    std::size_t n_pos = 12;
    double ratio = 2048.0;  // negatives per positive
    std::size_t dim = 6;
    double hard_fraction = 0.25;   // negatives drawn near the positives
    double hard_distance = 1.1;    // offset of the hard component
    double far_distance = 4.0;
    std::uint64_t seed = 0;
};

BinaryDataset overlap_imbalance_dataset(const OverlapSpec& spec);

// Deterministic 8-room dataset sized for a laptop-scale full pipeline run.
// clouds_out, when given, receives the raw per-room point clouds.
SceneDataset benchmark_suite(std::uint64_t seed,
                             const std::map<std::string, SkeletonModel>& skeletons,
                             double theta_step = 0.9,
                             std::vector<PointCloud>* clouds_out = nullptr);

std::vector<RoomSpec> benchmark_room_specs(std::uint64_t seed);

// Independent reference solvers (projected gradient with exact projections),
// used to cross-check the production solvers' primal objectives.
double reference_svm_primal(const BinaryDataset& data, double c_pos, double c_neg,
                            int iterations = 50000);
double reference_qp_primal(const std::vector<std::vector<Constraint>>& working_sets,
                           double c, int iterations = 50000);

}  // namespace affmap
