#include "affmap/testbed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "affmap/rng.hpp"

namespace affmap {

namespace {

constexpr double kSitSink = 0.06;        // hip clearance above the seat top
constexpr double kStandoff = 0.25;       // standing torso distance from front edge
constexpr double kChairDeskGap = 0.28;   // chair center behind the desk edge
constexpr double kGtPosRadius = 0.14;    // ground-truth cell radius around a spot
constexpr double kGtThetaTol = 0.55;     // ground-truth orientation window

struct LocalBox {
    Vec3 lo;
    Vec3 hi;
};

Vec3 to_world(double lx, double ly, double lz, const FurnitureItem& it) {
    const double c = std::cos(it.facing), s = std::sin(it.facing);
    return {it.x + c * lx - s * ly, it.y + s * lx + c * ly, lz};
}

// Boxes in the facing frame: +x is the direction the user faces, z absolute.
std::vector<LocalBox> furniture_boxes(const FurnitureItem& it) {
    std::vector<LocalBox> boxes;
    switch (it.kind) {
        case FurnitureKind::chair: {
            const double h = it.seat_height;
            const double half = it.seat_size / 2.0;
            boxes.push_back({{-half, -half, h - 0.08}, {half, half, h}});
            boxes.push_back({{-0.05, -0.05, 0.0}, {0.05, 0.05, h - 0.08}});
            if (it.backrest)
                boxes.push_back({{-half - 0.08, -half, h}, {-half, half, h + 0.42}});
            break;
        }
        case FurnitureKind::sofa: {
            const double h = it.seat_height;
            const double hl = it.length / 2.0;
            boxes.push_back({{-0.30, -hl, 0.06}, {0.35, hl, h}});
            boxes.push_back({{-0.42, -hl, h}, {-0.30, hl, h + 0.42}});
            boxes.push_back({{-0.42, -hl - 0.12, 0.06}, {0.35, -hl, h + 0.22}});
            boxes.push_back({{-0.42, hl, 0.06}, {0.35, hl + 0.12, h + 0.22}});
            break;
        }
        case FurnitureKind::desk: {
            const double depth = it.top_y;
            const double hw = it.top_x / 2.0;
            boxes.push_back(
                {{-depth / 2.0, -hw, it.height - 0.04}, {depth / 2.0, hw, it.height}});
            const double leg = 0.05;
            for (double sx : {-depth / 2.0 + leg, depth / 2.0 - 2 * leg + leg})
                for (double sy : {-hw + leg, hw - 2 * leg + leg})
                    boxes.push_back({{sx - leg, sy - leg, 0.0},
                                     {sx + leg, sy + leg, it.height - 0.04}});
            break;
        }
        case FurnitureKind::bench: {
            const double depth = 0.5;
            const double hl = it.length / 2.0;
            boxes.push_back(
                {{-depth / 2.0, -hl, it.height - 0.05}, {depth / 2.0, hl, it.height}});
            const double leg = 0.06;
            for (double sx : {-depth / 2.0 + leg, depth / 2.0 - leg})
                for (double sy : {-hl + leg, hl - leg})
                    boxes.push_back({{sx - leg, sy - leg, 0.0},
                                     {sx + leg, sy + leg, it.height - 0.05}});
            break;
        }
    }
    return boxes;
}

// Plan-view half extents of the furniture footprint in the facing frame.
void footprint(const FurnitureItem& it, double& lo_x, double& hi_x, double& lo_y,
               double& hi_y) {
    lo_x = hi_x = lo_y = hi_y = 0.0;
    for (const LocalBox& b : furniture_boxes(it)) {
        lo_x = std::min(lo_x, b.lo.x);
        hi_x = std::max(hi_x, b.hi.x);
        lo_y = std::min(lo_y, b.lo.y);
        hi_y = std::max(hi_y, b.hi.y);
    }
}

// Separating-axis overlap test for two rotated plan rectangles.
bool rects_overlap(const FurnitureItem& a, const FurnitureItem& b) {
    auto corners = [](const FurnitureItem& it) {
        double lx, hx, ly, hy;
        footprint(it, lx, hx, ly, hy);
        std::array<Vec3, 4> cs = {to_world(lx, ly, 0, it), to_world(hx, ly, 0, it),
                                  to_world(hx, hy, 0, it), to_world(lx, hy, 0, it)};
        return cs;
    };
    const auto ca = corners(a), cb = corners(b);
    auto separated = [](const std::array<Vec3, 4>& p, const std::array<Vec3, 4>& q) {
        for (int i = 0; i < 4; ++i) {
            const Vec3 edge = p[(i + 1) % 4] - p[i];
            const double ax = -edge.y, ay = edge.x;  // edge normal
            double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
            for (const Vec3& v : p) {
                const double t = ax * v.x + ay * v.y;
                pmin = std::min(pmin, t);
                pmax = std::max(pmax, t);
            }
            for (const Vec3& v : q) {
                const double t = ax * v.x + ay * v.y;
                qmin = std::min(qmin, t);
                qmax = std::max(qmax, t);
            }
            if (pmax < qmin || qmax < pmin) return true;
        }
        return false;
    };
    return !separated(ca, cb) && !separated(cb, ca);
}

// Stratified jittered sampling of one rectangle face: one point per 5 cm
// sub-cell, which is at least 400 points per square meter and at least four
// points in every 10 cm surface cell.
void sample_face(const Vec3& origin, const Vec3& u_dir, double lu, const Vec3& v_dir,
                 double lv, const FurnitureItem* frame, Rng& rng,
                 std::vector<Vec3>& out) {
    const int nu = std::max(1, static_cast<int>(std::ceil(lu / 0.05)));
    const int nv = std::max(1, static_cast<int>(std::ceil(lv / 0.05)));
    const double du = lu / nu, dv = lv / nv;
    for (int iu = 0; iu < nu; ++iu)
        for (int iv = 0; iv < nv; ++iv) {
            const double au = (iu + rng.uniform()) * du;
            const double av = (iv + rng.uniform()) * dv;
            Vec3 p = origin + u_dir * au + v_dir * av;
            if (frame) p = to_world(p.x, p.y, p.z, *frame);
            out.push_back(p);
        }
}

void sample_box(const LocalBox& b, const FurnitureItem* frame, Rng& rng,
                std::vector<Vec3>& out) {
    const Vec3 d = b.hi - b.lo;
    // z- and z+ faces
    sample_face({b.lo.x, b.lo.y, b.lo.z}, {1, 0, 0}, d.x, {0, 1, 0}, d.y, frame, rng, out);
    sample_face({b.lo.x, b.lo.y, b.hi.z}, {1, 0, 0}, d.x, {0, 1, 0}, d.y, frame, rng, out);
    // x- and x+
    sample_face({b.lo.x, b.lo.y, b.lo.z}, {0, 1, 0}, d.y, {0, 0, 1}, d.z, frame, rng, out);
    sample_face({b.hi.x, b.lo.y, b.lo.z}, {0, 1, 0}, d.y, {0, 0, 1}, d.z, frame, rng, out);
    // y- and y+
    sample_face({b.lo.x, b.lo.y, b.lo.z}, {1, 0, 0}, d.x, {0, 0, 1}, d.z, frame, rng, out);
    sample_face({b.lo.x, b.hi.y, b.lo.z}, {1, 0, 0}, d.x, {0, 0, 1}, d.z, frame, rng, out);
}

struct UseSpot {
    std::string affordance;
    Vec3 pos;        // user torso plan position (z unused)
    double facing = 0.0;
    double surface_z = 0.0;
};

std::vector<UseSpot> use_spots(const FurnitureItem& it, const RoomSpec& spec) {
    std::vector<UseSpot> spots;
    auto lateral_spots = [](double usable_half) {
        std::vector<double> ys;
        if (usable_half <= 0.0) {
            ys.push_back(0.0);
            return ys;
        }
        for (double y = -usable_half; y <= usable_half + 1e-9; y += 0.4) ys.push_back(y);
        return ys;
    };
    switch (it.kind) {
        case FurnitureKind::chair: {
            const Vec3 p = to_world(0.0, 0.0, 0.0, it);
            spots.push_back({"sitting-working", p, it.facing, it.seat_height});
            break;
        }
        case FurnitureKind::sofa: {
            for (double y : lateral_spots(it.length / 2.0 - 0.45)) {
                const Vec3 p = to_world(0.03, y, 0.0, it);
                spots.push_back({"sitting-relaxing", p, it.facing, it.seat_height});
            }
            break;
        }
        case FurnitureKind::desk: {
            // Desks with a chair tucked in are sitting workstations; only
            // clear-fronted desks afford standing work.
            for (const FurnitureItem& other : spec.furniture) {
                if (other.kind == FurnitureKind::chair &&
                    std::hypot(other.x - it.x, other.y - it.y) < 0.9)
                    return spots;
            }
            for (double y : lateral_spots(it.top_x / 2.0 - 0.3)) {
                const Vec3 p = to_world(-(it.top_y / 2.0 + kStandoff), y, 0.0, it);
                spots.push_back({"standing-working", p, it.facing, it.height});
            }
            break;
        }
        case FurnitureKind::bench: {
            for (double y : lateral_spots(it.length / 2.0 - 0.3)) {
                const Vec3 p = to_world(-(0.25 + kStandoff), y, 0.0, it);
                spots.push_back({"standing-working", p, it.facing, it.height});
            }
            break;
        }
    }
    return spots;
}

double hip_drop(const SkeletonModel& skel) {
    // torso z is 0 in the local frame; hips sit below it.
    const double lz = skel.joints[9].z, rz = skel.joints[10].z;
    return -(lz + rz) / 2.0;
}

}  // namespace

void RoomSpec::validate() const {
    std::ostringstream problems;
    if (extent_x <= 0.5 || extent_y <= 0.5 || extent_z <= 0.5)
        problems << "room extent too small; ";
    if (wall_thickness <= 0.0 || floor_thickness <= 0.0)
        problems << "wall/floor thickness must be positive; ";
    for (std::size_t i = 0; i < furniture.size(); ++i) {
        double lx, hx, ly, hy;
        footprint(furniture[i], lx, hx, ly, hy);
        for (const auto& [cx, cy] : {std::pair{lx, ly}, std::pair{hx, ly},
                                     std::pair{hx, hy}, std::pair{lx, hy}}) {
            const Vec3 corner = to_world(cx, cy, 0.0, furniture[i]);
            if (corner.x < -1e-9 || corner.x > extent_x + 1e-9 || corner.y < -1e-9 ||
                corner.y > extent_y + 1e-9) {
                problems << "furniture " << i << " outside room; ";
                break;
            }
        }
        for (std::size_t j = i + 1; j < furniture.size(); ++j)
            if (rects_overlap(furniture[i], furniture[j]))
                problems << "furniture " << i << " overlaps " << j << "; ";
    }
    const std::string msg = problems.str();
    if (!msg.empty()) throw std::invalid_argument("invalid room spec: " + msg);
}

GeneratedRoom generate_room(const RoomSpec& spec,
                            const std::map<std::string, SkeletonModel>& skeletons,
                            double theta_step) {
    spec.validate();
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ull);

    GeneratedRoom room;
    auto& pts = room.cloud.points;

    // Room shell.
    const double tw = spec.wall_thickness, tf = spec.floor_thickness;
    const double ex = spec.extent_x, ey = spec.extent_y, ez = spec.extent_z;
    sample_box({{0, 0, -tf}, {ex, ey, 0}}, nullptr, rng, pts);
    sample_box({{-tw, -tw, 0}, {0, ey + tw, ez}}, nullptr, rng, pts);
    sample_box({{ex, -tw, 0}, {ex + tw, ey + tw, ez}}, nullptr, rng, pts);
    sample_box({{-tw, -tw, 0}, {ex + tw, 0, ez}}, nullptr, rng, pts);
    sample_box({{-tw, ey, 0}, {ex + tw, ey + tw, ez}}, nullptr, rng, pts);

    for (const FurnitureItem& it : spec.furniture)
        for (const LocalBox& b : furniture_boxes(it)) sample_box(b, &it, rng, pts);

    // Ground truth on the pose lattice of the voxelized cloud.
    const OccupancyGrid occ = voxelize(room.cloud, 0.1, kScenePadding);
    const double floor_z = estimate_floor(occ);

    for (const FurnitureItem& it : spec.furniture) {
        for (const UseSpot& spot : use_spots(it, spec)) {
            room.seats.push_back({spot.affordance, spot.pos.x, spot.pos.y, spot.facing});
            auto skel_it = skeletons.find(spot.affordance);
            if (skel_it == skeletons.end()) continue;
            const SkeletonModel& skel = skel_it->second;
            const PoseLattice lattice =
                make_pose_lattice(occ.spec, skel, theta_step, floor_z);

            int iz = 1;
            if (spot.affordance.rfind("sitting", 0) == 0) {
                const double ideal = spot.surface_z + kSitSink + hip_drop(skel);
                iz = static_cast<int>(
                    std::lround((ideal - lattice.torso_z) / occ.spec.cell_size)) + 1;
                iz = std::clamp(iz, 0, 2);
            }

            std::vector<int> thetas;
            for (int it_theta = 0; it_theta < lattice.theta_count; ++it_theta)
                if (angle_diff(it_theta * theta_step, spot.facing) <= kGtThetaTol)
                    thetas.push_back(it_theta);

            const auto center = occ.spec.cell_of(spot.pos);
            auto& truth = room.truth[spot.affordance];
            for (int dx = -1; dx <= 1; ++dx)
                for (int dy = -1; dy <= 1; ++dy) {
                    const int ix = center[0] + dx, iy = center[1] + dy;
                    if (ix < 0 || ix >= occ.spec.nx || iy < 0 || iy >= occ.spec.ny)
                        continue;
                    const Vec3 cc = occ.spec.cell_center(ix, iy, 0);
                    if (std::hypot(cc.x - spot.pos.x, cc.y - spot.pos.y) > kGtPosRadius)
                        continue;
                    for (int itheta : thetas)
                        truth.push_back({ix, iy, iz, itheta});
                }
        }
    }

    for (auto& [affordance, poses] : room.truth) {
        std::sort(poses.begin(), poses.end());
        poses.erase(std::unique(poses.begin(), poses.end()), poses.end());
    }
    return room;
}

ViolationResult brute_force_argmax(const MultivariateExample& example,
                                   std::span<const double> w, LossKind kind) {
    const std::size_t n = example.size();
    if (n > 20) throw std::invalid_argument("brute force capped at n <= 20");
    if (n == 0) throw std::invalid_argument("empty example");

    ViolationResult best;
    best.objective = -std::numeric_limits<double>::infinity();
    std::vector<std::int8_t> labels(n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
        for (std::size_t i = 0; i < n; ++i)
            labels[i] = (mask >> i) & 1 ? 1 : -1;
        const ContingencyTable table = make_table(example.y, labels);
        const double obj =
            loss(table, kind) +
            dot(w, std::span<const double>(joint_feature(example.x, labels)));
        if (obj > best.objective) {
            best.objective = obj;
            best.labels = labels;
            best.table = table;
        }
    }
    return best;
}

DistanceField brute_force_dt(const OccupancyGrid& occ) {
    const GridSpec& s = occ.spec;
    if (s.cell_count() > 32768) throw std::invalid_argument("grid too large for brute force");
    if (occ.occupied_count() == 0) throw std::invalid_argument("no occupied voxels");

    std::vector<std::array<int, 3>> sources;
    for (int iz = 0; iz < s.nz; ++iz)
        for (int iy = 0; iy < s.ny; ++iy)
            for (int ix = 0; ix < s.nx; ++ix)
                if (occ.occupied[s.index(ix, iy, iz)]) sources.push_back({ix, iy, iz});

    DistanceField dt;
    dt.spec = s;
    dt.squared_cells.assign(s.cell_count(), 0);
    dt.meters.assign(s.cell_count(), 0.0);
    for (int iz = 0; iz < s.nz; ++iz)
        for (int iy = 0; iy < s.ny; ++iy)
            for (int ix = 0; ix < s.nx; ++ix) {
                std::int64_t best = std::numeric_limits<std::int64_t>::max();
                for (const auto& src : sources) {
                    const std::int64_t dx = ix - src[0], dy = iy - src[1],
                                       dz = iz - src[2];
                    best = std::min(best, dx * dx + dy * dy + dz * dz);
                }
                const std::size_t idx = s.index(ix, iy, iz);
                dt.squared_cells[idx] = best;
                dt.meters[idx] = s.cell_size * std::sqrt(static_cast<double>(best));
            }
    return dt;
}

BinaryDataset overlap_imbalance_dataset(const OverlapSpec& spec) {
    Rng rng(spec.seed ^ 0x0f1e2d3c4b5a6978ull);
    const std::size_t n_neg =
        static_cast<std::size_t>(std::llround(spec.n_pos * spec.ratio));
    const std::size_t n_hard =
        static_cast<std::size_t>(std::llround(n_neg * spec.hard_fraction));

    BinaryDataset data;
    data.x = FeatureMatrix(spec.n_pos + n_neg, spec.dim);
    data.y.resize(spec.n_pos + n_neg);

    std::vector<double> row(spec.dim);
    std::size_t r = 0;
    for (std::size_t i = 0; i < spec.n_pos; ++i, ++r) {
        for (std::size_t j = 0; j < spec.dim; ++j) row[j] = rng.gaussian();
        data.x.set_row(r, row);
        data.y[r] = 1;
    }
    for (std::size_t i = 0; i < n_neg; ++i, ++r) {
        const bool hard = i < n_hard;
        const double offset = hard ? spec.hard_distance : spec.far_distance;
        const double sigma = hard ? 1.0 : 1.5;
        for (std::size_t j = 0; j < spec.dim; ++j)
            row[j] = (j == 0 ? offset : 0.0) + sigma * rng.gaussian();
        data.x.set_row(r, row);
        data.y[r] = -1;
    }
    return data;
}

std::vector<RoomSpec> benchmark_room_specs(std::uint64_t seed) {
    Rng rng(seed ^ 0xbadc0ffeeull);
    std::vector<RoomSpec> specs;

    const double quarter = kTwoPi / 4.0;
    for (int r = 0; r < 8; ++r) {
        RoomSpec spec;
        spec.name = "room" + std::to_string(r);
        spec.seed = seed * 1009 + static_cast<std::uint64_t>(r);
        spec.extent_x = 2.45 + rng.uniform(0.0, 0.2);
        spec.extent_y = 2.6 + rng.uniform(0.0, 0.2);
        spec.extent_z = 2.2;

        const double ex = spec.extent_x, ey = spec.extent_y;
        const bool two_chairs = r == 0 || r == 3 || r == 6;

        // Sitting workstation along the y=0 wall: desk against the wall,
        // chair(s) tucked in facing it.
        {
            FurnitureItem desk;
            desk.kind = FurnitureKind::desk;
            desk.top_x = two_chairs ? 1.3 + rng.uniform(0.0, 0.1)
                                    : 1.1 + rng.uniform(0.0, 0.1);
            desk.top_y = 0.6;
            desk.height = 0.72 + rng.uniform(0.0, 0.06);
            desk.facing = -quarter + rng.uniform(-0.05, 0.05);  // user faces the wall
            desk.x = ex / 2.0 + rng.uniform(-0.1, 0.1);
            desk.y = desk.top_y / 2.0 + 0.08;
            spec.furniture.push_back(desk);

            const int chair_count = two_chairs ? 2 : 1;
            for (int c = 0; c < chair_count; ++c) {
                FurnitureItem chair;
                chair.kind = FurnitureKind::chair;
                chair.seat_height = 0.36 + rng.uniform(0.0, 0.08);
                chair.seat_size = 0.42 + rng.uniform(0.0, 0.06);
                chair.facing = desk.facing + rng.uniform(-0.05, 0.05);
                const double lateral = chair_count == 2 ? (c == 0 ? -0.34 : 0.34) : 0.0;
                chair.x = desk.x + lateral;
                chair.y = desk.y + desk.top_y / 2.0 + kChairDeskGap;
                spec.furniture.push_back(chair);
            }
        }

        // Exactly one item along the y = ey wall keeps the layout claustral
        // but collision-free for any draw of the size jitters.
        if (r % 2 == 0) {
            FurnitureItem sofa;
            sofa.kind = FurnitureKind::sofa;
            sofa.length = 1.55 + rng.uniform(0.0, 0.15);
            sofa.seat_height = 0.28 + rng.uniform(0.0, 0.07);
            sofa.facing = -quarter + rng.uniform(-0.05, 0.05);  // faces into the room
            sofa.x = ex / 2.0 + rng.uniform(-0.1, 0.1);
            sofa.y = ey - 0.55;
            spec.furniture.push_back(sofa);
        } else if (r != 7) {
            FurnitureItem bench;
            bench.kind = FurnitureKind::bench;
            bench.length = 1.0 + rng.uniform(0.0, 0.2);
            bench.height = 0.98 + rng.uniform(0.0, 0.1);
            bench.facing = quarter + rng.uniform(-0.05, 0.05);  // user faces the wall
            bench.x = ex / 2.0 + rng.uniform(-0.1, 0.1);
            bench.y = ey - 0.38;
            spec.furniture.push_back(bench);
        } else {
            FurnitureItem sdesk;  // chairless standing-height desk
            sdesk.kind = FurnitureKind::desk;
            sdesk.top_x = 1.0 + rng.uniform(0.0, 0.2);
            sdesk.top_y = 0.5;
            sdesk.height = 1.0 + rng.uniform(0.0, 0.08);
            sdesk.facing = quarter + rng.uniform(-0.05, 0.05);
            sdesk.x = ex / 2.0 + rng.uniform(-0.1, 0.1);
            sdesk.y = ey - 0.40;
            spec.furniture.push_back(sdesk);
        }

        specs.push_back(std::move(spec));
    }
    return specs;
}

SceneDataset benchmark_suite(std::uint64_t seed,
                             const std::map<std::string, SkeletonModel>& skeletons,
                             double theta_step, std::vector<PointCloud>* clouds_out) {
    SceneDataset dataset;
    dataset.affordances = {"sitting-relaxing", "sitting-working", "standing-working"};
    dataset.skeletons = skeletons;

    for (const RoomSpec& spec : benchmark_room_specs(seed)) {
        GeneratedRoom room = generate_room(spec, skeletons, theta_step);
        SceneData scene;
        scene.name = spec.name;
        scene.fields = build_scene(room.cloud, 0.1, kScenePadding);
        scene.floor_z = estimate_floor(scene.fields.occ);
        scene.truth = std::move(room.truth);
        scene.seats = std::move(room.seats);
        if (clouds_out) clouds_out->push_back(std::move(room.cloud));
        dataset.scenes.push_back(std::move(scene));
    }
    return dataset;
}

namespace {

// Projection of v onto {0 <= a_i <= C_i, sum a_i y_i = 0} by bisection on the
// hyperplane multiplier.
void project_box_hyperplane(std::vector<double>& v, std::span<const std::int8_t> y,
                            std::span<const double> cap) {
    auto clipped_sum = [&](double lambda) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double a = std::clamp(v[i] - lambda * y[i], 0.0, cap[i]);
            s += y[i] * a;
        }
        return s;
    };
    double lo = -1.0, hi = 1.0;
    for (const double x : v) {
        lo = std::min(lo, -std::fabs(x) - 1.0);
        hi = std::max(hi, std::fabs(x) + 1.0);
    }
    for (const double c : cap) {
        lo -= c;
        hi += c;
    }
    // clipped_sum is non-increasing in lambda.
    for (int it = 0; it < 90; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (clipped_sum(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = std::clamp(v[i] - lambda * y[i], 0.0, cap[i]);
}

}  // namespace

double reference_svm_primal(const BinaryDataset& data, double c_pos, double c_neg,
                            int iterations) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    std::vector<double> cap(n);
    for (std::size_t i = 0; i < n; ++i) cap[i] = data.y[i] > 0 ? c_pos : c_neg;

    double lipschitz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = data.x.row(i);
        lipschitz += dot(std::span<const float>(r), r);
    }
    lipschitz = std::max(lipschitz, 1e-12);
    const double step = 1.0 / lipschitz;

    std::vector<double> alpha(n, 0.0), w(d, 0.0), grad(n);
    for (int it = 0; it < iterations; ++it) {
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] == 0.0) continue;
            auto r = data.x.row(i);
            const double f = alpha[i] * data.y[i];
            for (std::size_t j = 0; j < d; ++j) w[j] += f * static_cast<double>(r[j]);
        }
        for (std::size_t i = 0; i < n; ++i)
            grad[i] = 1.0 - data.y[i] * dot(w, data.x.row(i));
        for (std::size_t i = 0; i < n; ++i) alpha[i] += step * grad[i];
        project_box_hyperplane(alpha, data.y, cap);
    }

    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) continue;
        auto r = data.x.row(i);
        const double f = alpha[i] * data.y[i];
        for (std::size_t j = 0; j < d; ++j) w[j] += f * static_cast<double>(r[j]);
    }

    // Exact bias for this w: the hinge sum is piecewise linear in b, so the
    // minimum sits on a breakpoint.
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = dot(w, data.x.row(i));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        const double b = scores[k] - data.y[k];
        double hinge = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = 1.0 - data.y[i] * (scores[i] - b);
            if (v > 0.0) hinge += cap[i] * v;
        }
        best = std::min(best, hinge);
    }
    return 0.5 * dot(w, w) + best;
}

double reference_qp_primal(const std::vector<std::vector<Constraint>>& working_sets,
                           double c, int iterations) {
    std::size_t dim = 0;
    std::size_t total = 0;
    for (const auto& ws : working_sets)
        for (const auto& con : ws) {
            dim = std::max(dim, con.delta_psi.size());
            ++total;
        }

    double lipschitz = 1e-12;
    for (const auto& ws : working_sets)
        for (const auto& con : ws)
            lipschitz += dot(std::span<const double>(con.delta_psi),
                             std::span<const double>(con.delta_psi));
    const double step = 1.0 / lipschitz;

    std::vector<std::vector<double>> alpha(working_sets.size());
    for (std::size_t k = 0; k < working_sets.size(); ++k)
        alpha[k].assign(working_sets[k].size(), 0.0);
    std::vector<double> w(dim, 0.0);

    auto recompute_w = [&] {
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t k = 0; k < working_sets.size(); ++k)
            for (std::size_t j = 0; j < working_sets[k].size(); ++j) {
                if (alpha[k][j] == 0.0) continue;
                const auto& dp = working_sets[k][j].delta_psi;
                for (std::size_t i = 0; i < dp.size(); ++i) w[i] += alpha[k][j] * dp[i];
            }
    };

    // Projection of one example's multipliers onto {a >= 0, sum a <= C}.
    auto project_simplex_cap = [&](std::vector<double>& a) {
        double sum = 0.0;
        for (double& x : a) {
            x = std::max(x, 0.0);
            sum += x;
        }
        if (sum <= c) return;
        std::vector<double> sorted = a;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        double cum = 0.0, tau = 0.0;
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            cum += sorted[i];
            const double t = (cum - c) / static_cast<double>(i + 1);
            if (i + 1 == sorted.size() || t >= sorted[i + 1]) {
                tau = t;
                break;
            }
        }
        for (double& x : a) x = std::max(0.0, x - tau);
    };

    for (int it = 0; it < iterations; ++it) {
        recompute_w();
        for (std::size_t k = 0; k < working_sets.size(); ++k) {
            for (std::size_t j = 0; j < working_sets[k].size(); ++j) {
                const auto& con = working_sets[k][j];
                const double g =
                    con.loss_value - dot(std::span<const double>(w),
                                         std::span<const double>(con.delta_psi));
                alpha[k][j] += step * g;
            }
            project_simplex_cap(alpha[k]);
        }
    }
    recompute_w();

    double slack_sum = 0.0;
    for (const auto& ws : working_sets) {
        double xi = 0.0;
        for (const auto& con : ws)
            xi = std::max(xi, con.loss_value - dot(std::span<const double>(w),
                                                   std::span<const double>(con.delta_psi)));
        slack_sum += xi;
    }
    return 0.5 * dot(std::span<const double>(w), std::span<const double>(w)) +
           c * slack_sum;
}

}  // namespace affmap
