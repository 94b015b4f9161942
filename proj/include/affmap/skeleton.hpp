#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "affmap/geometry.hpp"
#include "affmap/scene.hpp"

namespace affmap {

inline constexpr int kJointCount = 15;

// Canonical joint order; feature layout and asset files follow it.
inline constexpr std::array<std::string_view, kJointCount> kJointNames = {
    "head",    "neck",    "torso",  "l-shoulder", "r-shoulder",
    "l-elbow", "r-elbow", "l-hand", "r-hand",     "l-hip",
    "r-hip",   "l-knee",  "r-knee", "l-foot",     "r-foot"};

inline constexpr int kDistanceFeatureCount = kJointCount;
inline constexpr int kCollisionFeatureCount = kJointCount;
inline constexpr int kNormalCubeSide = 10;
inline constexpr int kNormalCubeFeatureCount =
    kNormalCubeSide * kNormalCubeSide * kNormalCubeSide;
inline constexpr int kFeatureDim =
    kDistanceFeatureCount + kCollisionFeatureCount + kNormalCubeFeatureCount;
inline constexpr double kNormalCubeExtent = 1.0;  // meters, torso-centered

using JointArray = std::array<Vec3, kJointCount>;

// 15-joint virtual human in its local frame, torso at the origin (x = y = 0).
struct SkeletonModel {
    std::string affordance_id;
    JointArray joints;

    const Vec3& joint(int i) const { return joints[i]; }
    // Vertical offset from torso down to the lowest joint (the foot level).
    double torso_to_foot() const;
    void validate() const;
};

// Placement of a skeleton: torso world position plus yaw about vertical.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double theta = 0.0;

    Vec3 position() const { return {x, y, z}; }
    Pose normalized() const { return {x, y, z, wrap_angle(theta)}; }
};

// H_w = t + R_z(theta) * H_l for every joint. Rigid: pairwise distances are
// preserved.
JointArray transform_skeleton(const SkeletonModel& skel, const Pose& pose);

std::array<double, kJointCount> distance_features(const JointArray& world_joints,
                                                  const DistanceField& dt);
std::array<double, kJointCount> collision_features(const JointArray& world_joints,
                                                   const OccupancyGrid& occ);

// Verticality samples over a 1 m^3 axis-aligned cube of 10 cm voxels centered
// at the torso. The cube is not rotated by theta. Flattened row-major in
// (i, j, k) with k fastest; out-of-field samples read 0.
std::vector<double> normal_cube_features(const Pose& pose, const NormalField& nf);

// [distance | collision | normal cube], dimension kFeatureDim.
std::vector<double> feature_vector(const Scene& scene, const SkeletonModel& skel,
                                   const Pose& pose);
// Same values written into a caller-provided buffer (bulk extraction path).
void write_feature_vector(const Scene& scene, const SkeletonModel& skel,
                          const Pose& pose, double* out);

int theta_count_for_step(double theta_step);

// The pose search lattice: every (x, y) cell center, three torso z levels
// around floor_z + torso height, theta at multiples of theta_step.
struct PoseLattice {
    GridSpec spec;
    double torso_z = 0.0;  // middle z level
    double theta_step = 0.1;
    int theta_count = 63;

    std::size_t size() const {
        return static_cast<std::size_t>(spec.nx) * spec.ny * 3 * theta_count;
    }
    Pose pose_at(int ix, int iy, int iz_level, int itheta) const;
    // Lexicographic (x, y, z, theta) rank of a lattice pose.
    std::size_t flat_index(int ix, int iy, int iz_level, int itheta) const;
    bool contains(int ix, int iy, int iz_level, int itheta) const;
};

PoseLattice make_pose_lattice(const GridSpec& spec, const SkeletonModel& skel,
                              double theta_step, double floor_z);

// Materialized lattice in lexicographic (x, y, z, theta) order.
std::vector<Pose> enumerate_poses(const GridSpec& spec, const SkeletonModel& skel,
                                  double theta_step, double floor_z);

// Center z of the densest occupied slab among the bottom 20% of z levels;
// falls back to the lowest occupied slab.
double estimate_floor(const OccupancyGrid& occ);

}  // namespace affmap
