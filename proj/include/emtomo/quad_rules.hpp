#pragma once

// barycentric quadrature rules on a tetrahedron, shared between the operator
// assembly and the coefficient sensitivities so both integrate identically

namespace emtomo::quad {

// 4-point rule with positive weights, exact to degree 2
inline constexpr double kPos4A = 0.58541019662496845446;
inline constexpr double kPos4B = 0.13819660112501051518;
inline constexpr double kPos4Pts[4][4] = {
    {kPos4A, kPos4B, kPos4B, kPos4B},
    {kPos4B, kPos4A, kPos4B, kPos4B},
    {kPos4B, kPos4B, kPos4A, kPos4B},
    {kPos4B, kPos4B, kPos4B, kPos4A},
};
inline constexpr double kPos4W = 0.25;

// 5-point rule, exact to degree 3 (center weight negative)
inline constexpr double kCub5Pts[5][4] = {
    {0.25, 0.25, 0.25, 0.25},
    {0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 0.5, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 0.5, 1.0 / 6.0},
    {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5},
};
inline constexpr double kCub5W[5] = {-0.8, 0.45, 0.45, 0.45, 0.45};

} // namespace emtomo::quad
