#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "affmap/pipeline.hpp"
#include "affmap/scene.hpp"
#include "affmap/skeleton.hpp"
#include "affmap/testbed.hpp"

namespace affmap {

// All on-disk formats are versioned text; doubles are written with 17
// significant digits so a save/load/save cycle is byte-identical.

std::string format_double(double v);

// Plain text cloud: "x y z" or "x y z nx ny nz" per line, '#' comments.
PointCloud load_cloud(const std::filesystem::path& path);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

// AFFGRID v1: spec line plus run-length encoded occupancy.
void save_grid(const OccupancyGrid& grid, const std::filesystem::path& path);
OccupancyGrid load_grid(const std::filesystem::path& path);

// AFFMODEL v1 (kinds: linear, ssvm).
void save_model(const AffordanceModel& model, const std::filesystem::path& path);
AffordanceModel load_model(const std::filesystem::path& path);

// Skeleton asset: {"affordance": ..., "joints": {name: [x, y, z]}}.
SkeletonModel load_skeleton(const std::filesystem::path& path);
void save_skeleton(const SkeletonModel& skel, const std::filesystem::path& path);
std::map<std::string, SkeletonModel> load_skeleton_dir(
    const std::filesystem::path& dir);

// Ground-truth labels: JSON list of {affordance, ix, iy, iz, itheta}.
void save_labels(const std::map<std::string, std::vector<GroundTruthPose>>& truth,
                 const std::filesystem::path& path);
std::map<std::string, std::vector<GroundTruthPose>> load_labels(
    const std::filesystem::path& path);

// Room spec round-trip (includes the analytic seat list when saving a
// generated room).
void save_room_spec(const RoomSpec& spec, const std::vector<SeatInfo>& seats,
                    const std::filesystem::path& path);
RoomSpec load_room_spec(const std::filesystem::path& path,
                        std::vector<SeatInfo>* seats = nullptr);

// Dataset directory: suite.json + rooms/<name>.{xyz,labels.json,room.json}.
void save_dataset(const SceneDataset& dataset,
                  const std::map<std::string, std::vector<SeatInfo>>& seats,
                  double theta_step, std::uint64_t seed,
                  const std::filesystem::path& dir,
                  const std::vector<PointCloud>& clouds);
SceneDataset load_dataset(const std::filesystem::path& dir,
                          const std::map<std::string, SkeletonModel>& skeletons,
                          double* theta_step = nullptr);

// Affordance map exports: skeleton list (JSON), contour grid (CSV), contour
// heatmap (8-bit binary PGM) with the margin range in a sidecar file.
void save_map(const AffordanceMap& map, const std::filesystem::path& dir,
              const std::string& stem);
std::vector<PlacedSkeleton> load_map_skeletons(const std::filesystem::path& path);

struct RunConfig {
    double cell_size = 0.1;
    double theta_step = 0.1;
    double c = 1.0;
    double c_pos = 1.0;
    double c_neg = 1.0;
    double epsilon = 1e-3;
    double ssvm_c = 0.0;  // <= 0: auto
    std::vector<double> z_grid;  // empty: default grid
    double band = 1.0;
    std::uint64_t seed = 0;
    std::string method = "ssvm";
    int k = 4;
    std::string assets_dir;
    std::string output_dir;

    PipelineParams pipeline_params() const;
};

// Strict parse: unknown keys are rejected.
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace affmap
