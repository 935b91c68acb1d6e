#ifndef EMTOMO_GEOMETRY_HPP
#define EMTOMO_GEOMETRY_HPP

#include <array>
#include <cmath>

namespace emtomo {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// axis-aligned box given by min/max corners
struct Box {
    Vec3 lo{0, 0, 0};
    Vec3 hi{0, 0, 0};

    double extent(int axis) const { return hi[axis] - lo[axis]; }
    bool contains(const Vec3& p) const {
        for (int d = 0; d < 3; ++d)
            if (p[d] < lo[d] || p[d] > hi[d]) return false;
        return true;
    }
    bool inside(const Box& outer) const {
        for (int d = 0; d < 3; ++d)
            if (lo[d] < outer.lo[d] || hi[d] > outer.hi[d]) return false;
        return true;
    }
};

} // namespace emtomo

#endif
