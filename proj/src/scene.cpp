#include "affmap/scene.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "affmap/parallel.hpp"

namespace affmap {

void PointCloud::validate() const {
    for (const Vec3& p : points) {
        if (!p.finite()) throw std::invalid_argument("invalid point");
    }
    if (!normals.empty()) {
        if (normals.size() != points.size())
            throw std::invalid_argument("normal count does not match point count");
        for (const Vec3& n : normals) {
            const double m = n.norm();
            if (m != 0.0 && std::fabs(m - 1.0) > 1e-6)
                throw std::invalid_argument("normal is not unit length");
        }
    }
}

std::size_t OccupancyGrid::occupied_count() const {
    return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), 1));
}

OccupancyGrid voxelize(const PointCloud& cloud, double cell_size, int padding) {
    if (cloud.points.empty()) throw std::invalid_argument("empty scene");
    if (cell_size <= 0.0) throw std::invalid_argument("cell_size must be positive");
    if (padding < 0) throw std::invalid_argument("padding must be nonnegative");
    cloud.validate();

    Vec3 lo = cloud.points.front();
    Vec3 hi = cloud.points.front();
    for (const Vec3& p : cloud.points) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
        hi.z = std::max(hi.z, p.z);
    }

    OccupancyGrid grid;
    grid.spec.cell_size = cell_size;
    grid.spec.origin = {lo.x - padding * cell_size, lo.y - padding * cell_size,
                        lo.z - padding * cell_size};
    grid.spec.nx = static_cast<int>(std::floor((hi.x - lo.x) / cell_size)) + 1 + 2 * padding;
    grid.spec.ny = static_cast<int>(std::floor((hi.y - lo.y) / cell_size)) + 1 + 2 * padding;
    grid.spec.nz = static_cast<int>(std::floor((hi.z - lo.z) / cell_size)) + 1 + 2 * padding;
    grid.occupied.assign(grid.spec.cell_count(), 0);

    for (const Vec3& p : cloud.points) {
        auto c = grid.spec.cell_of(p);
        // Points on the far boundary belong to the last cell.
        c = grid.spec.clamp_cell(c);
        grid.occupied[grid.spec.index(c[0], c[1], c[2])] = 1;
    }
    return grid;
}

namespace {

constexpr std::int64_t kFar = std::int64_t(1) << 50;

// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher). Input f
// and output d are squared distances in cell units; parabola intersections
// are located in double precision, the winning parabola is evaluated in
// integer arithmetic so the result is exact. Empty sources carry kFar, which
// flows through the same arithmetic without special cases.
void envelope_pass(const std::int64_t* f, std::int64_t* d, int n, std::vector<int>& v,
                   std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    auto intersect = [&](int q, int p) {
        return (static_cast<double>(f[q]) + double(q) * q -
                (static_cast<double>(f[p]) + double(p) * p)) /
               (2.0 * q - 2.0 * p);
    };
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, v[k]);
        while (k > 0 && s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const int p = v[j];
        d[q] = std::int64_t(q - p) * (q - p) + f[p];
    }
}

}  // namespace

DistanceField distance_transform(const OccupancyGrid& occ) {
    const GridSpec& s = occ.spec;
    if (occ.occupied_count() == 0) throw std::invalid_argument("no occupied voxels");

    std::vector<std::int64_t> sq(s.cell_count());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = occ.occupied[i] ? 0 : kFar;

    const int nmax = std::max({s.nx, s.ny, s.nz});
    std::vector<std::int64_t> fbuf(nmax), dbuf(nmax);
    std::vector<int> v(nmax);
    std::vector<double> z(nmax + 1);

    // Pass along x for every (y, z) line.
    for (int iz = 0; iz < s.nz; ++iz)
        for (int iy = 0; iy < s.ny; ++iy) {
            const std::size_t base = s.index(0, iy, iz);
            for (int ix = 0; ix < s.nx; ++ix) fbuf[ix] = sq[base + ix];
            envelope_pass(fbuf.data(), dbuf.data(), s.nx, v, z);
            for (int ix = 0; ix < s.nx; ++ix) sq[base + ix] = dbuf[ix];
        }
    // Pass along y.
    for (int iz = 0; iz < s.nz; ++iz)
        for (int ix = 0; ix < s.nx; ++ix) {
            for (int iy = 0; iy < s.ny; ++iy) fbuf[iy] = sq[s.index(ix, iy, iz)];
            envelope_pass(fbuf.data(), dbuf.data(), s.ny, v, z);
            for (int iy = 0; iy < s.ny; ++iy) sq[s.index(ix, iy, iz)] = dbuf[iy];
        }
    // Pass along z.
    for (int iy = 0; iy < s.ny; ++iy)
        for (int ix = 0; ix < s.nx; ++ix) {
            for (int iz = 0; iz < s.nz; ++iz) fbuf[iz] = sq[s.index(ix, iy, iz)];
            envelope_pass(fbuf.data(), dbuf.data(), s.nz, v, z);
            for (int iz = 0; iz < s.nz; ++iz) sq[s.index(ix, iy, iz)] = dbuf[iz];
        }

    DistanceField dt;
    dt.spec = s;
    dt.squared_cells = std::move(sq);
    dt.meters.resize(dt.squared_cells.size());
    for (std::size_t i = 0; i < dt.meters.size(); ++i)
        dt.meters[i] = s.cell_size * std::sqrt(static_cast<double>(dt.squared_cells[i]));
    return dt;
}

namespace {

// Uniform-grid spatial hash for k-NN queries over a static cloud.
class NeighborGrid {
  public:
    NeighborGrid(const std::vector<Vec3>& pts, double cell) : pts_(pts), cell_(cell) {
        lo_ = pts.front();
        for (const Vec3& p : pts) {
            lo_.x = std::min(lo_.x, p.x);
            lo_.y = std::min(lo_.y, p.y);
            lo_.z = std::min(lo_.z, p.z);
        }
        Vec3 hi = pts.front();
        for (const Vec3& p : pts) {
            hi.x = std::max(hi.x, p.x);
            hi.y = std::max(hi.y, p.y);
            hi.z = std::max(hi.z, p.z);
        }
        nx_ = idx(hi.x, lo_.x) + 1;
        ny_ = idx(hi.y, lo_.y) + 1;
        nz_ = idx(hi.z, lo_.z) + 1;
        cells_.resize(static_cast<std::size_t>(nx_) * ny_ * nz_);
        for (std::size_t i = 0; i < pts.size(); ++i)
            cells_[cell_index(pts[i])].push_back(static_cast<int>(i));
    }

    // Indices of the k nearest points to pts_[self], excluding self.
    void knn(int self, int k, std::vector<int>& out) const {
        const Vec3& q = pts_[self];
        const int cix = idx(q.x, lo_.x), ciy = idx(q.y, lo_.y), ciz = idx(q.z, lo_.z);
        // (distance^2, index) max-heap of current best k.
        std::vector<std::pair<double, int>> heap;
        heap.reserve(k + 1);
        auto consider = [&](int i) {
            if (i == self) return;
            const double d2 = (pts_[i] - q).dot(pts_[i] - q);
            if (static_cast<int>(heap.size()) < k) {
                heap.emplace_back(d2, i);
                std::push_heap(heap.begin(), heap.end());
            } else if (d2 < heap.front().first) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = {d2, i};
                std::push_heap(heap.begin(), heap.end());
            }
        };
        for (int ring = 0;; ++ring) {
            bool any_cell = false;
            for (int dz = -ring; dz <= ring; ++dz)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                            continue;
                        const int x = cix + dx, y = ciy + dy, z = ciz + dz;
                        if (x < 0 || x >= nx_ || y < 0 || y >= ny_ || z < 0 || z >= nz_)
                            continue;
                        any_cell = true;
                        for (int i : cells_[static_cast<std::size_t>(x) +
                                            static_cast<std::size_t>(nx_) *
                                                (y + static_cast<std::size_t>(ny_) * z)])
                            consider(i);
                    }
            // Done once the heap is full and the next ring cannot beat the
            // current worst (ring - 1 cells is a conservative lower bound).
            if (static_cast<int>(heap.size()) >= k) {
                const double safe = double(ring) * cell_;
                if (safe * safe >= heap.front().first) break;
            }
            if (!any_cell && ring > nx_ + ny_ + nz_) break;
        }
        std::sort(heap.begin(), heap.end());
        out.clear();
        for (auto& [d2, i] : heap) out.push_back(i);
    }

  private:
    int idx(double v, double lo) const {
        return static_cast<int>(std::floor((v - lo) / cell_));
    }
    std::size_t cell_index(const Vec3& p) const {
        return static_cast<std::size_t>(idx(p.x, lo_.x)) +
               static_cast<std::size_t>(nx_) *
                   (idx(p.y, lo_.y) + static_cast<std::size_t>(ny_) * idx(p.z, lo_.z));
    }
    const std::vector<Vec3>& pts_;
    double cell_;
    Vec3 lo_;
    int nx_ = 1, ny_ = 1, nz_ = 1;
    std::vector<std::vector<int>> cells_;
};

}  // namespace

PointCloud estimate_normals(const PointCloud& cloud, int k) {
    cloud.validate();
    if (k < 3) throw std::invalid_argument("k must be at least 3");
    if (cloud.points.size() < static_cast<std::size_t>(k) + 1)
        throw std::invalid_argument("k exceeds point count");

    PointCloud out;
    out.points = cloud.points;
    out.normals.assign(cloud.points.size(), Vec3{});

    const NeighborGrid grid(cloud.points, 0.05);

    parallel_for(cloud.points.size(), [&](std::size_t lo, std::size_t hi) {
        std::vector<int> nn;
        for (std::size_t i = lo; i < hi; ++i) {
            grid.knn(static_cast<int>(i), k, nn);
            Vec3 mean{};
            for (int j : nn) mean = mean + cloud.points[j];
            mean = mean * (1.0 / nn.size());
            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (int j : nn) {
                const Vec3 d = cloud.points[j] - mean;
                cov(0, 0) += d.x * d.x;
                cov(0, 1) += d.x * d.y;
                cov(0, 2) += d.x * d.z;
                cov(1, 1) += d.y * d.y;
                cov(1, 2) += d.y * d.z;
                cov(2, 2) += d.z * d.z;
            }
            cov(1, 0) = cov(0, 1);
            cov(2, 0) = cov(0, 2);
            cov(2, 1) = cov(1, 2);

            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
            const auto& evals = es.eigenvalues();  // ascending
            // Rank < 2 neighborhood: the middle eigenvalue vanishes relative
            // to the largest, or the whole neighborhood is a single point.
            if (evals[2] <= 0.0 || evals[1] <= 1e-9 * evals[2]) continue;
            Eigen::Vector3d n = es.eigenvectors().col(0);
            n.normalize();
            if (n.z() < 0.0 || (n.z() == 0.0 && (n.x() < 0.0 || (n.x() == 0.0 && n.y() < 0.0))))
                n = -n;
            out.normals[i] = {n.x(), n.y(), n.z()};
        }
    });
    return out;
}

NormalField build_normal_field(const PointCloud& cloud, const GridSpec& spec) {
    if (!cloud.has_normals()) throw std::invalid_argument("normals not estimated");
    cloud.validate();

    NormalField nf;
    nf.spec = spec;
    nf.mean_vertical.assign(spec.cell_count(), 0.0);
    nf.has_points.assign(spec.cell_count(), 0);
    std::vector<std::uint32_t> counts(spec.cell_count(), 0);

    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const Vec3& n = cloud.normals[i];
        if (n.x == 0.0 && n.y == 0.0 && n.z == 0.0) continue;  // degenerate, skipped
        const auto c = spec.cell_of(cloud.points[i]);
        if (!spec.in_bounds(c[0], c[1], c[2])) continue;
        const std::size_t idx = spec.index(c[0], c[1], c[2]);
        nf.mean_vertical[idx] += std::fabs(n.z);
        ++counts[idx];
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) {
            nf.mean_vertical[i] /= counts[i];
            nf.has_points[i] = 1;
        }
    }
    return nf;
}

bool query_occupancy(const OccupancyGrid& occ, const Vec3& p) {
    const auto c = occ.spec.cell_of(p);
    return occ.occupied_at(c[0], c[1], c[2]);
}

double query_distance(const DistanceField& dt, const Vec3& p) {
    const auto c = dt.spec.cell_of(p);
    if (dt.spec.in_bounds(c[0], c[1], c[2]))
        return dt.meters[dt.spec.index(c[0], c[1], c[2])];
    const auto b = dt.spec.clamp_cell(c);
    const Vec3 center = dt.spec.cell_center(b[0], b[1], b[2]);
    return dt.meters[dt.spec.index(b[0], b[1], b[2])] + distance(p, center);
}

Scene build_scene(const PointCloud& cloud, double cell_size, int padding, int normal_k) {
    Scene scene;
    scene.occ = voxelize(cloud, cell_size, padding);
    scene.dt = distance_transform(scene.occ);
    const PointCloud with_normals =
        cloud.has_normals() ? cloud : estimate_normals(cloud, normal_k);
    scene.normals = build_normal_field(with_normals, scene.occ.spec);
    return scene;
}

}  // namespace affmap
