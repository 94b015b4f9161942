#include "affmap/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace affmap {

double SkeletonModel::torso_to_foot() const {
    double min_z = joints[0].z;
    for (const Vec3& j : joints) min_z = std::min(min_z, j.z);
    const Vec3& torso = joints[2];
    return torso.z - min_z;
}

void SkeletonModel::validate() const {
    const Vec3& torso = joints[2];
    if (std::fabs(torso.x) > 1e-9 || std::fabs(torso.y) > 1e-9)
        throw std::invalid_argument("torso joint must sit at the local origin (x=y=0)");
    for (int i = 0; i < kJointCount; ++i) {
        if (!joints[i].finite()) throw std::invalid_argument("non-finite joint");
        for (int j = i + 1; j < kJointCount; ++j) {
            const double d = distance(joints[i], joints[j]);
            if (d <= 0.0 || d >= 3.0)
                throw std::invalid_argument("pairwise joint distance out of (0, 3) m");
        }
    }
}

JointArray transform_skeleton(const SkeletonModel& skel, const Pose& pose) {
    const double c = std::cos(pose.theta);
    const double s = std::sin(pose.theta);
    JointArray world;
    for (int i = 0; i < kJointCount; ++i) {
        const Vec3& l = skel.joints[i];
        world[i] = {pose.x + c * l.x - s * l.y, pose.y + s * l.x + c * l.y,
                    pose.z + l.z};
    }
    return world;
}

std::array<double, kJointCount> distance_features(const JointArray& world_joints,
                                                  const DistanceField& dt) {
    std::array<double, kJointCount> d;
    for (int i = 0; i < kJointCount; ++i) d[i] = query_distance(dt, world_joints[i]);
    return d;
}

std::array<double, kJointCount> collision_features(const JointArray& world_joints,
                                                   const OccupancyGrid& occ) {
    std::array<double, kJointCount> c;
    for (int i = 0; i < kJointCount; ++i)
        c[i] = query_occupancy(occ, world_joints[i]) ? 1.0 : 0.0;
    return c;
}

namespace {

void write_normal_cube(const Pose& pose, const NormalField& nf, double* out) {
    const GridSpec& s = nf.spec;
    const double half = kNormalCubeExtent / 2.0;
    const double step = kNormalCubeExtent / kNormalCubeSide;
    int n = 0;
    for (int i = 0; i < kNormalCubeSide; ++i) {
        const double sx = pose.x - half + (i + 0.5) * step;
        const int cx = static_cast<int>(std::floor((sx - s.origin.x) / s.cell_size));
        for (int j = 0; j < kNormalCubeSide; ++j) {
            const double sy = pose.y - half + (j + 0.5) * step;
            const int cy = static_cast<int>(std::floor((sy - s.origin.y) / s.cell_size));
            for (int k = 0; k < kNormalCubeSide; ++k, ++n) {
                const double sz = pose.z - half + (k + 0.5) * step;
                const int cz =
                    static_cast<int>(std::floor((sz - s.origin.z) / s.cell_size));
                out[n] = s.in_bounds(cx, cy, cz) ? nf.mean_vertical[s.index(cx, cy, cz)]
                                                 : 0.0;
            }
        }
    }
}

}  // namespace

std::vector<double> normal_cube_features(const Pose& pose, const NormalField& nf) {
    if (std::fabs(nf.spec.cell_size - kNormalCubeExtent / kNormalCubeSide) > 1e-12)
        throw std::invalid_argument("normal cube requires a 0.1 m field resolution");
    std::vector<double> out(kNormalCubeFeatureCount);
    write_normal_cube(pose, nf, out.data());
    return out;
}

void write_feature_vector(const Scene& scene, const SkeletonModel& skel,
                          const Pose& pose, double* out) {
    const JointArray world = transform_skeleton(skel, pose);
    for (int i = 0; i < kJointCount; ++i) out[i] = query_distance(scene.dt, world[i]);
    for (int i = 0; i < kJointCount; ++i)
        out[kJointCount + i] = query_occupancy(scene.occ, world[i]) ? 1.0 : 0.0;
    write_normal_cube(pose, scene.normals, out + 2 * kJointCount);
}

std::vector<double> feature_vector(const Scene& scene, const SkeletonModel& skel,
                                   const Pose& pose) {
    if (std::fabs(scene.normals.spec.cell_size - kNormalCubeExtent / kNormalCubeSide) >
        1e-12)
        throw std::invalid_argument("normal cube requires a 0.1 m field resolution");
    std::vector<double> out(kFeatureDim);
    write_feature_vector(scene, skel, pose, out.data());
    return out;
}

int theta_count_for_step(double theta_step) {
    if (theta_step <= 0.0) throw std::invalid_argument("theta_step must be positive");
    return static_cast<int>(std::ceil(kTwoPi / theta_step));
}

Pose PoseLattice::pose_at(int ix, int iy, int iz_level, int itheta) const {
    const Vec3 c = spec.cell_center(ix, iy, 0);
    return {c.x, c.y, torso_z + (iz_level - 1) * spec.cell_size,
            wrap_angle(itheta * theta_step)};
}

std::size_t PoseLattice::flat_index(int ix, int iy, int iz_level, int itheta) const {
    return ((static_cast<std::size_t>(ix) * spec.ny + iy) * 3 + iz_level) * theta_count +
           itheta;
}

bool PoseLattice::contains(int ix, int iy, int iz_level, int itheta) const {
    return ix >= 0 && ix < spec.nx && iy >= 0 && iy < spec.ny && iz_level >= 0 &&
           iz_level < 3 && itheta >= 0 && itheta < theta_count;
}

PoseLattice make_pose_lattice(const GridSpec& spec, const SkeletonModel& skel,
                              double theta_step, double floor_z) {
    PoseLattice lattice;
    lattice.spec = spec;
    lattice.theta_step = theta_step;
    lattice.theta_count = theta_count_for_step(theta_step);
    lattice.torso_z = floor_z + skel.torso_to_foot();
    const double z_lo = lattice.torso_z - spec.cell_size;
    const double z_hi = lattice.torso_z + spec.cell_size;
    if (z_lo < spec.origin.z || z_hi >= spec.origin.z + spec.nz * spec.cell_size)
        throw std::invalid_argument("skeleton does not fit scene height");
    return lattice;
}

std::vector<Pose> enumerate_poses(const GridSpec& spec, const SkeletonModel& skel,
                                  double theta_step, double floor_z) {
    const PoseLattice lattice = make_pose_lattice(spec, skel, theta_step, floor_z);
    std::vector<Pose> poses;
    poses.reserve(lattice.size());
    for (int ix = 0; ix < spec.nx; ++ix)
        for (int iy = 0; iy < spec.ny; ++iy)
            for (int iz = 0; iz < 3; ++iz)
                for (int it = 0; it < lattice.theta_count; ++it)
                    poses.push_back(lattice.pose_at(ix, iy, iz, it));
    return poses;
}

double estimate_floor(const OccupancyGrid& occ) {
    const GridSpec& s = occ.spec;
    std::vector<std::size_t> slab_counts(s.nz, 0);
    for (int iz = 0; iz < s.nz; ++iz)
        for (int iy = 0; iy < s.ny; ++iy)
            for (int ix = 0; ix < s.nx; ++ix)
                if (occ.occupied[s.index(ix, iy, iz)]) ++slab_counts[iz];

    int lowest_occupied = -1;
    for (int iz = 0; iz < s.nz; ++iz)
        if (slab_counts[iz] > 0) {
            lowest_occupied = iz;
            break;
        }
    if (lowest_occupied < 0) return s.origin.z + 0.5 * s.cell_size;

    const int band = std::max(1, static_cast<int>(std::ceil(s.nz * 0.2)));
    int best = -1;
    std::size_t best_count = 0;
    for (int iz = 0; iz < band; ++iz) {
        if (slab_counts[iz] > best_count) {
            best_count = slab_counts[iz];
            best = iz;
        }
    }
    if (best < 0) best = lowest_occupied;
    return s.origin.z + (best + 0.5) * s.cell_size;
}

}  // namespace affmap
