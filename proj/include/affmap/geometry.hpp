#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace affmap {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Axis-aligned voxel lattice. Cells are half-open intervals [lo, hi) so a
// point on a shared boundary belongs to exactly one cell.
struct GridSpec {
    Vec3 origin;
    double cell_size = 0.1;
    int nx = 1;
    int ny = 1;
    int nz = 1;

    std::size_t cell_count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }

    bool in_bounds(int ix, int iy, int iz) const {
        return ix >= 0 && ix < nx && iy >= 0 && iy < ny && iz >= 0 && iz < nz;
    }

    // Flat index, x fastest.
    std::size_t index(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(iy) +
                    static_cast<std::size_t>(ny) * static_cast<std::size_t>(iz));
    }

    Vec3 cell_center(int ix, int iy, int iz) const {
        return {origin.x + (ix + 0.5) * cell_size,
                origin.y + (iy + 0.5) * cell_size,
                origin.z + (iz + 0.5) * cell_size};
    }

    std::array<int, 3> cell_of(const Vec3& p) const {
        return {static_cast<int>(std::floor((p.x - origin.x) / cell_size)),
                static_cast<int>(std::floor((p.y - origin.y) / cell_size)),
                static_cast<int>(std::floor((p.z - origin.z) / cell_size))};
    }

    std::array<int, 3> clamp_cell(std::array<int, 3> c) const {
        auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };
        return {clampi(c[0], nx), clampi(c[1], ny), clampi(c[2], nz)};
    }
};

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Wrap an angle into [0, 2*pi).
inline double wrap_angle(double theta) {
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    if (t >= kTwoPi) t = 0.0;
    return t;
}

// Smallest absolute angular difference, in [0, pi].
inline double angle_diff(double a, double b) {
    double d = std::fabs(wrap_angle(a) - wrap_angle(b));
    return d > kTwoPi / 2.0 ? kTwoPi - d : d;
}

}  // namespace affmap
