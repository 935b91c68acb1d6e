#ifndef EMTOMO_MESH_HPP
#define EMTOMO_MESH_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "emtomo/geometry.hpp"
#include "emtomo/phantom.hpp"

namespace emtomo {

enum class Region : uint8_t { IN = 0, OUT = 1, OVERLAP = 2 };

// roles of structured-grid nodes
enum class FdRole : uint8_t {
    Interior = 0,      // full 7-point stencil available
    Outer = 1,         // on the outer boundary of the computational box
    InnerBoundary = 2, // innermost layer of the FD shell; receives FE values
    Inactive = 3       // inside the hole covered exclusively by the FE mesh
};

// outer-face bitmask bits: axis d, min side = bit 2d, max side = bit 2d+1
constexpr uint8_t face_bit(int axis, bool max_side) { return uint8_t(1u << (2 * axis + (max_side ? 1 : 0))); }

// structured grid over the full computational box; the FE box occupies node
// indices [fem_lo, fem_hi] per axis and the FD shell keeps a two-cell inset
struct FdGrid {
    std::array<int, 3> cells{0, 0, 0};
    Vec3 spacing{0, 0, 0};
    Vec3 origin{0, 0, 0};
    std::array<int, 3> fem_lo{0, 0, 0};
    std::array<int, 3> fem_hi{0, 0, 0};

    std::vector<FdRole> role;    // per node
    std::vector<uint8_t> faces;  // per node, outer-face bitmask

    int nodes(int axis) const { return cells[axis] + 1; }
    std::size_t node_count() const {
        return std::size_t(nodes(0)) * std::size_t(nodes(1)) * std::size_t(nodes(2));
    }
    std::size_t node_index(int i, int j, int k) const {
        return std::size_t(i) + std::size_t(nodes(0)) * (std::size_t(j) + std::size_t(nodes(1)) * std::size_t(k));
    }
    Vec3 node_pos(int i, int j, int k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1], origin[2] + k * spacing[2]};
    }
    // depth of a node inside the FE box in grid layers; negative outside
    int depth(int i, int j, int k) const {
        return std::min({i - fem_lo[0], fem_hi[0] - i, j - fem_lo[1], fem_hi[1] - j,
                         k - fem_lo[2], fem_hi[2] - k});
    }
};

// conforming tetrahedral mesh of the FE box; level 0 is the 6-tet Kuhn split
// of each structured cell
struct FeMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 4>> tets;
    std::vector<Region> element_region;
    std::vector<int> parent;        // element id before the last refinement, -1 at level 0
    std::vector<double> h;          // per-element diameter (longest edge)
    std::vector<uint8_t> node_on_boundary; // 1 for nodes on the FE box surface

    std::size_t node_count() const { return vertices.size(); }
    std::size_t element_count() const { return tets.size(); }
    double element_volume(std::size_t e) const;
    Vec3 element_centroid(std::size_t e) const;
    double min_dihedral_angle() const; // radians, over all elements
};

// the five coupling sets plus the coincidence maps between the two meshes
struct NodeClassification {
    std::vector<int> omega_o;                 // FE nodes on the FE box surface
    std::vector<std::size_t> omega_diamond;   // FD nodes on the inner FD boundary
    std::vector<int> omega_star;              // FE nodes interior to the FE box
    std::vector<std::size_t> omega_plus;      // FD nodes strictly outside the FE box, not on the outer boundary
    std::vector<std::size_t> omega_x;         // FD nodes on the outer boundary

    std::vector<std::pair<int, std::size_t>> o_pairs;        // (fe node, fd node)
    std::vector<std::pair<std::size_t, int>> diamond_pairs;  // (fd node, fe node)
    std::vector<std::pair<int, std::size_t>> lattice_pairs;  // all coincident (fe, fd) with active FD storage

    std::size_t partition_size() const {
        return omega_o.size() + omega_diamond.size() + omega_star.size() + omega_plus.size() + omega_x.size();
    }
};

struct HybridMesh {
    FdGrid fd;
    FeMesh fe;
    NodeClassification classes;
    int refinement_level = 0;
    Box omega_box, fem_box, in_box;

    // distinct node positions: full lattice plus refinement vertices
    std::size_t total_node_count() const;
};

// grid spacing comes from the phantom; boxes must be lattice-aligned
HybridMesh build_hybrid(const VoxelPhantom& phantom, const Box& omega_box, const Box& fem_box,
                        const Box& in_box);
// same construction from an explicit spacing (no phantom involved)
HybridMesh build_hybrid(const Vec3& spacing, const Box& omega_box, const Box& fem_box,
                        const Box& in_box);

// longest-edge bisection of the marked elements with recursive conformity
// closure; returns a new mesh, level incremented; OVERLAP elements untouchable
HybridMesh refine_local(const HybridMesh& mesh, const std::vector<std::size_t>& marked);

double cfl_timestep(const HybridMesh& mesh, double safety, double c = 1.0);

// elements of the given region, in index order
std::vector<std::size_t> elements_in_region(const FeMesh& fe, Region r);

// conformity scan: every interior face shared by exactly 2 tets, boundary by 1
bool mesh_is_conforming(const FeMesh& fe);

} // namespace emtomo

#endif
