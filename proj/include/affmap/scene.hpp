#pragma once

#include <cstdint>
#include <vector>

#include "affmap/geometry.hpp"

namespace affmap {

// Raw scene input. `normals`, when present, is parallel to `points`; a zero
// vector marks a point whose neighborhood was too degenerate for a normal
// estimate (such points are skipped when building the NormalField).
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;

    bool has_normals() const { return !normals.empty(); }
    std::size_t size() const { return points.size(); }
    void validate() const;
};

struct OccupancyGrid {
    GridSpec spec;
    std::vector<std::uint8_t> occupied;

    bool occupied_at(int ix, int iy, int iz) const {
        return spec.in_bounds(ix, iy, iz) && occupied[spec.index(ix, iy, iz)] != 0;
    }
    std::size_t occupied_count() const;
};

// Exact Euclidean distance transform. `squared_cells` holds squared distances
// between cell centers in cell units; they are exact integers. `meters` is
// cell_size * sqrt(squared_cells), the DT(x) field queried by the features.
struct DistanceField {
    GridSpec spec;
    std::vector<std::int64_t> squared_cells;
    std::vector<double> meters;
};

// Per-cell mean verticality |n_z| of the normals of contained points.
struct NormalField {
    GridSpec spec;
    std::vector<double> mean_vertical;
    std::vector<std::uint8_t> has_points;
};

// Everything feature extraction needs from a voxelized scene.
struct Scene {
    OccupancyGrid occ;
    DistanceField dt;
    NormalField normals;
};

// Occupancy grid covering the cloud's bounding box plus `padding` empty cells
// per side. A cell is occupied iff at least one point falls in it.
OccupancyGrid voxelize(const PointCloud& cloud, double cell_size, int padding);

// Exact EDT via three separable 1D lower-envelope passes on squared
// distances. Requires at least one occupied cell.
DistanceField distance_transform(const OccupancyGrid& occ);

// k-NN PCA normals: the unit eigenvector of smallest eigenvalue of the
// neighborhood covariance, sign-flipped so the vertical component is >= 0.
PointCloud estimate_normals(const PointCloud& cloud, int k = 12);

NormalField build_normal_field(const PointCloud& cloud, const GridSpec& spec);

// Total lookup functions. Out-of-bounds occupancy is false (open space);
// out-of-bounds distance is the boundary cell's DT plus the Euclidean
// overshoot from the query point to that cell's center.
bool query_occupancy(const OccupancyGrid& occ, const Vec3& p);
double query_distance(const DistanceField& dt, const Vec3& p);

Scene build_scene(const PointCloud& cloud, double cell_size = 0.1, int padding = 2,
                  int normal_k = 12);

}  // namespace affmap
