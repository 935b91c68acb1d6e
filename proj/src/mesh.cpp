#include "emtomo/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "emtomo/errors.hpp"

namespace emtomo {

double FeMesh::element_volume(std::size_t e) const {
    const auto& t = tets[e];
    Vec3 a = vertices[t[1]] - vertices[t[0]];
    Vec3 b = vertices[t[2]] - vertices[t[0]];
    Vec3 c = vertices[t[3]] - vertices[t[0]];
    return dot(a, cross(b, c)) / 6.0;
}

Vec3 FeMesh::element_centroid(std::size_t e) const {
    const auto& t = tets[e];
    Vec3 s{0, 0, 0};
    for (int v : t) s = s + vertices[v];
    return 0.25 * s;
}

namespace {

double tet_min_dihedral(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
    const Vec3 p[4] = {p0, p1, p2, p3};
    auto normal = [&](int v) { // normal of the face opposite vertex v
        int o[3], n = 0;
        for (int i = 0; i < 4; ++i)
            if (i != v) o[n++] = i;
        return cross(p[o[1]] - p[o[0]], p[o[2]] - p[o[0]]);
    };
    Vec3 nf[4];
    for (int v = 0; v < 4; ++v) nf[v] = normal(v);
    double best = M_PI;
    // dihedral along edge (a,b) is between the two faces containing that edge,
    // i.e. the faces opposite the remaining two vertices
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
            int c = -1, d = -1;
            for (int i = 0; i < 4; ++i)
                if (i != a && i != b) (c < 0 ? c : d) = i;
            double cosang = -dot(nf[c], nf[d]) / (norm(nf[c]) * norm(nf[d]));
            cosang = std::clamp(cosang, -1.0, 1.0);
            best = std::min(best, std::acos(cosang));
        }
    return best;
}

double tet_diameter(const std::vector<Vec3>& verts, const std::array<int, 4>& t) {
    double best = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) best = std::max(best, norm(verts[t[a]] - verts[t[b]]));
    return best;
}

int snap_index(double x, double origin, double h, const char* what) {
    double r = (x - origin) / h;
    int i = int(std::lround(r));
    if (std::abs(r - i) > 1e-6)
        throw MeshError(std::string(what) + " not aligned with the grid lattice (offset " +
                        std::to_string(std::abs(r - i)) + " cells)");
    return i;
}

} // namespace

double FeMesh::min_dihedral_angle() const {
    double best = M_PI;
    for (const auto& t : tets)
        best = std::min(best, tet_min_dihedral(vertices[t[0]], vertices[t[1]], vertices[t[2]], vertices[t[3]]));
    return best;
}

std::size_t HybridMesh::total_node_count() const {
    // distinct positions: the full structured lattice plus refinement vertices
    std::size_t fem_lattice = 1;
    for (int d = 0; d < 3; ++d) fem_lattice *= std::size_t(fd.fem_hi[d] - fd.fem_lo[d] + 1);
    return fd.node_count() + (fe.node_count() - fem_lattice);
}

HybridMesh build_hybrid(const VoxelPhantom& phantom, const Box& omega_box, const Box& fem_box,
                        const Box& in_box) {
    return build_hybrid(phantom.spacing, omega_box, fem_box, in_box);
}

HybridMesh build_hybrid(const Vec3& spacing, const Box& omega_box, const Box& fem_box,
                        const Box& in_box) {
    for (int d = 0; d < 3; ++d)
        if (spacing[d] <= 0) throw MeshError("grid spacing must be positive");
    if (!fem_box.inside(omega_box) || !in_box.inside(fem_box))
        throw MeshError("boxes must nest: in_box inside fem_box inside omega_box");

    HybridMesh m;
    m.omega_box = omega_box;
    m.fem_box = fem_box;
    m.in_box = in_box;

    FdGrid& g = m.fd;
    g.spacing = spacing;
    g.origin = omega_box.lo;
    std::array<int, 3> in_lo{}, in_hi{};
    for (int d = 0; d < 3; ++d) {
        g.cells[d] = snap_index(omega_box.hi[d], omega_box.lo[d], spacing[d], "omega_box extent");
        if (g.cells[d] < 5) throw MeshError("computational box too small");
        g.fem_lo[d] = snap_index(fem_box.lo[d], g.origin[d], spacing[d], "fem_box face");
        g.fem_hi[d] = snap_index(fem_box.hi[d], g.origin[d], spacing[d], "fem_box face");
        if (g.fem_lo[d] < 2 || g.fem_hi[d] > g.cells[d] - 2)
            throw MeshError("fem_box needs at least 2 grid layers of clearance from the outer boundary");
        if (g.fem_hi[d] - g.fem_lo[d] < 4)
            throw MeshError("fem_box must span at least 4 cells per axis");
        in_lo[d] = snap_index(in_box.lo[d], g.origin[d], spacing[d], "in_box face");
        in_hi[d] = snap_index(in_box.hi[d], g.origin[d], spacing[d], "in_box face");
        if (in_lo[d] - g.fem_lo[d] < 2 || g.fem_hi[d] - in_hi[d] < 2)
            throw MeshError("in_box needs at least 2 element layers of clearance inside fem_box");
        if (in_hi[d] <= in_lo[d]) throw MeshError("in_box is empty");
    }

    // FD node roles
    g.role.assign(g.node_count(), FdRole::Interior);
    g.faces.assign(g.node_count(), 0);
    for (int k = 0; k <= g.cells[2]; ++k)
        for (int j = 0; j <= g.cells[1]; ++j)
            for (int i = 0; i <= g.cells[0]; ++i) {
                std::size_t n = g.node_index(i, j, k);
                uint8_t fb = 0;
                if (i == 0) fb |= face_bit(0, false);
                if (i == g.cells[0]) fb |= face_bit(0, true);
                if (j == 0) fb |= face_bit(1, false);
                if (j == g.cells[1]) fb |= face_bit(1, true);
                if (k == 0) fb |= face_bit(2, false);
                if (k == g.cells[2]) fb |= face_bit(2, true);
                g.faces[n] = fb;
                int dp = g.depth(i, j, k);
                if (fb) g.role[n] = FdRole::Outer;
                else if (dp > 2) g.role[n] = FdRole::Inactive;
                else if (dp == 2) g.role[n] = FdRole::InnerBoundary;
                else g.role[n] = FdRole::Interior;
            }

    // FE mesh: lattice vertices of the FE box (i-fastest) + Kuhn split of each cell
    FeMesh& fe = m.fe;
    const std::array<int, 3> fc{g.fem_hi[0] - g.fem_lo[0], g.fem_hi[1] - g.fem_lo[1],
                                g.fem_hi[2] - g.fem_lo[2]};
    fe.vertices.reserve(std::size_t(fc[0] + 1) * (fc[1] + 1) * (fc[2] + 1));
    for (int k = 0; k <= fc[2]; ++k)
        for (int j = 0; j <= fc[1]; ++j)
            for (int i = 0; i <= fc[0]; ++i)
                fe.vertices.push_back(g.node_pos(g.fem_lo[0] + i, g.fem_lo[1] + j, g.fem_lo[2] + k));

    auto local_id = [&](int i, int j, int k) { return i + (fc[0] + 1) * (j + (fc[1] + 1) * k); };
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    for (int k = 0; k < fc[2]; ++k)
        for (int j = 0; j < fc[1]; ++j)
            for (int i = 0; i < fc[0]; ++i) {
                int cd = std::min({i, fc[0] - 1 - i, j, fc[1] - 1 - j, k, fc[2] - 1 - k});
                bool in_in = (g.fem_lo[0] + i) >= in_lo[0] && (g.fem_lo[0] + i) < in_hi[0] &&
                             (g.fem_lo[1] + j) >= in_lo[1] && (g.fem_lo[1] + j) < in_hi[1] &&
                             (g.fem_lo[2] + k) >= in_lo[2] && (g.fem_lo[2] + k) < in_hi[2];
                Region r = cd <= 1 ? Region::OVERLAP : (in_in ? Region::IN : Region::OUT);
                for (const auto& perm : perms) {
                    // walk the cell edges from corner to opposite corner
                    int v[4][3] = {{i, j, k}, {}, {}, {}};
                    for (int s = 0; s < 3; ++s) {
                        for (int d = 0; d < 3; ++d) v[s + 1][d] = v[s][d];
                        v[s + 1][perm[s]] += 1;
                    }
                    fe.tets.push_back({local_id(v[0][0], v[0][1], v[0][2]), local_id(v[1][0], v[1][1], v[1][2]),
                                       local_id(v[2][0], v[2][1], v[2][2]), local_id(v[3][0], v[3][1], v[3][2])});
                    fe.element_region.push_back(r);
                    fe.parent.push_back(-1);
                }
            }

    fe.h.resize(fe.tets.size());
    for (std::size_t e = 0; e < fe.tets.size(); ++e) {
        if (fe.element_volume(e) < 0) std::swap(fe.tets[e][2], fe.tets[e][3]);
        if (fe.element_volume(e) <= 0) throw MeshError("degenerate tetrahedron in Kuhn split");
        fe.h[e] = tet_diameter(fe.vertices, fe.tets[e]);
    }

    fe.node_on_boundary.assign(fe.vertices.size(), 0);

    // node classification over lattice positions
    NodeClassification& cl = m.classes;
    for (int k = 0; k <= g.cells[2]; ++k)
        for (int j = 0; j <= g.cells[1]; ++j)
            for (int i = 0; i <= g.cells[0]; ++i) {
                std::size_t fd_n = g.node_index(i, j, k);
                if (g.faces[fd_n]) {
                    cl.omega_x.push_back(fd_n);
                    continue;
                }
                int dp = g.depth(i, j, k);
                if (dp < 0) {
                    cl.omega_plus.push_back(fd_n);
                    continue;
                }
                int fe_n = local_id(i - g.fem_lo[0], j - g.fem_lo[1], k - g.fem_lo[2]);
                if (dp <= 2) cl.lattice_pairs.push_back({fe_n, fd_n});
                if (dp == 0) {
                    fe.node_on_boundary[fe_n] = 1;
                    cl.omega_o.push_back(fe_n);
                    cl.o_pairs.push_back({fe_n, fd_n});
                } else if (dp == 2) {
                    cl.omega_diamond.push_back(fd_n);
                    cl.diamond_pairs.push_back({fd_n, fe_n});
                } else {
                    cl.omega_star.push_back(fe_n);
                }
            }
    return m;
}

std::vector<std::size_t> elements_in_region(const FeMesh& fe, Region r) {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == r) out.push_back(e);
    return out;
}

namespace {

using EdgeKey = uint64_t;
inline EdgeKey edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (uint64_t(uint32_t(a)) << 32) | uint32_t(b);
}

// recursive longest-edge bisection: an edge is only ever split together with
// every live element sharing it, so the mesh stays conforming throughout
struct Refiner {
    FeMesh& fe;
    std::vector<char> alive;
    std::vector<int> root; // ancestor element id in the input mesh
    std::unordered_map<EdgeKey, std::vector<int>> edge_tets;
    std::size_t ops = 0, op_cap = 0;

    explicit Refiner(FeMesh& mesh) : fe(mesh) {
        alive.assign(fe.tets.size(), 1);
        root.resize(fe.tets.size());
        for (std::size_t e = 0; e < fe.tets.size(); ++e) root[e] = int(e);
        edge_tets.reserve(fe.tets.size() * 4);
        for (std::size_t e = 0; e < fe.tets.size(); ++e) register_tet(int(e));
        op_cap = 200 * fe.tets.size() + 10000;
    }

    void register_tet(int e) {
        const auto& t = fe.tets[e];
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) edge_tets[edge_key(t[a], t[b])].push_back(e);
    }

    // strict total order on edges: squared length first, vertex ids break ties
    std::pair<int, int> longest_edge(int e) const {
        const auto& t = fe.tets[e];
        double best = -1;
        std::pair<int, int> be{-1, -1};
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) {
                int u = std::min(t[a], t[b]), v = std::max(t[a], t[b]);
                Vec3 d = fe.vertices[u] - fe.vertices[v];
                double l2 = dot(d, d);
                if (l2 > best || (l2 == best && std::make_pair(u, v) < be)) {
                    best = l2;
                    be = {u, v};
                }
            }
        return be;
    }

    void split_edge(int u, int v) {
        int mid = int(fe.vertices.size());
        fe.vertices.push_back(0.5 * (fe.vertices[u] + fe.vertices[v]));
        fe.node_on_boundary.push_back(0); // splits never touch the FE box surface
        auto incident = edge_tets[edge_key(u, v)];
        for (int e : incident) {
            if (!alive[e]) continue;
            if (fe.element_region[e] == Region::OVERLAP)
                throw MeshError("refinement closure reached an overlap element; "
                                "enlarge the OUT buffer between in_box and the overlap layer");
            alive[e] = 0;
            for (int kept : {u, v}) {
                std::array<int, 4> child = fe.tets[e];
                for (int& x : child)
                    if (x == (kept == u ? v : u)) x = mid;
                int id = int(fe.tets.size());
                fe.tets.push_back(child);
                fe.element_region.push_back(fe.element_region[e]);
                fe.parent.push_back(e);
                root.push_back(root[e]);
                alive.push_back(1);
                Vec3 a = fe.vertices[child[1]] - fe.vertices[child[0]];
                Vec3 b = fe.vertices[child[2]] - fe.vertices[child[0]];
                Vec3 c = fe.vertices[child[3]] - fe.vertices[child[0]];
                if (dot(a, cross(b, c)) < 0) std::swap(fe.tets[id][2], fe.tets[id][3]);
                fe.h.push_back(tet_diameter(fe.vertices, fe.tets[id]));
                register_tet(id);
            }
        }
    }

    void bisect(int start) {
        std::vector<int> stack{start};
        while (!stack.empty()) {
            if (++ops > op_cap) throw MeshError("refinement closure failed to terminate");
            int e = stack.back();
            if (!alive[e]) {
                stack.pop_back();
                continue;
            }
            auto eg = longest_edge(e);
            bool blocked = false;
            for (int n : edge_tets[edge_key(eg.first, eg.second)]) {
                if (!alive[n] || n == e) continue;
                if (longest_edge(n) != eg) {
                    stack.push_back(n);
                    blocked = true;
                }
            }
            if (blocked) continue;
            split_edge(eg.first, eg.second);
        }
    }
};

} // namespace

HybridMesh refine_local(const HybridMesh& mesh, const std::vector<std::size_t>& marked) {
    for (std::size_t e : marked) {
        if (e >= mesh.fe.element_count()) throw MeshError("marked element out of range");
        if (mesh.fe.element_region[e] != Region::IN)
            throw MeshError("marked set must contain only IN-region elements");
    }

    HybridMesh out = mesh;
    out.refinement_level = mesh.refinement_level + 1;
    if (marked.empty()) return out;

    const std::size_t old_vertices = out.fe.node_count();
    Refiner r(out.fe);
    for (std::size_t e : marked) r.bisect(int(e));

    // drop dead elements; parent becomes the ancestor id in the input mesh
    FeMesh& fe = out.fe;
    std::size_t w = 0;
    for (std::size_t e = 0; e < fe.tets.size(); ++e) {
        if (!r.alive[e]) continue;
        fe.tets[w] = fe.tets[e];
        fe.element_region[w] = fe.element_region[e];
        fe.parent[w] = r.root[e];
        fe.h[w] = fe.h[e];
        ++w;
    }
    fe.tets.resize(w);
    fe.element_region.resize(w);
    fe.parent.resize(w);
    fe.h.resize(w);

    // new vertices are interior FE nodes
    for (std::size_t v = old_vertices; v < fe.node_count(); ++v)
        out.classes.omega_star.push_back(int(v));
    return out;
}

double cfl_timestep(const HybridMesh& mesh, double safety, double c) {
    if (safety <= 0) throw MeshError("cfl safety factor must be positive");
    const double fd_bound =
        std::min({mesh.fd.spacing[0], mesh.fd.spacing[1], mesh.fd.spacing[2]}) /
        (std::sqrt(3.0) * c);
    // on the unrefined lattice the element rows reproduce the grid stencil
    // exactly, so the grid bound is the bound
    if (mesh.refinement_level == 0) return safety * fd_bound;

    // refined meshes: Gershgorin row bound on the lumped-mass Laplacian over
    // the FE rows that actually evolve (box-surface nodes are overwritten by
    // the grid exchange each step). Element diameters barely shrink under
    // bisection but altitudes halve; the row bound tracks that.
    const FeMesh& fe = mesh.fe;
    const std::size_t n = fe.node_count();
    std::vector<double> massdiag(n, 0.0);
    std::vector<std::map<int, double>> rows(n);
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        const auto& t = fe.tets[e];
        const Vec3 p0 = fe.vertices[t[0]];
        const Vec3 e1 = fe.vertices[t[1]] - p0;
        const Vec3 e2 = fe.vertices[t[2]] - p0;
        const Vec3 e3 = fe.vertices[t[3]] - p0;
        const double six_v = dot(e1, cross(e2, e3));
        if (six_v <= 0) throw MeshError("degenerate element in cfl scan");
        const double vol = six_v / 6.0;
        Vec3 g[4];
        g[1] = (1.0 / six_v) * cross(e2, e3);
        g[2] = (1.0 / six_v) * cross(e3, e1);
        g[3] = (1.0 / six_v) * cross(e1, e2);
        g[0] = Vec3{-g[1][0] - g[2][0] - g[3][0], -g[1][1] - g[2][1] - g[3][1],
                    -g[1][2] - g[2][2] - g[3][2]};
        for (int i = 0; i < 4; ++i) {
            massdiag[t[i]] += vol / 4.0;
            for (int j = 0; j < 4; ++j) rows[t[i]][t[j]] += vol * dot(g[i], g[j]);
        }
    }
    double lam = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (fe.node_on_boundary[i]) continue;
        double rs = 0.0;
        for (const auto& [j, v] : rows[i]) rs += std::abs(v);
        lam = std::max(lam, rs / massdiag[i]);
    }
    const double fe_bound = 2.0 / (c * std::sqrt(lam));
    return safety * std::min(fd_bound, fe_bound);
}

bool mesh_is_conforming(const FeMesh& fe) {
    // face counts: interior faces shared by exactly 2 tets, surface faces by 1
    std::map<std::array<int, 3>, int> faces;
    for (const auto& t : fe.tets) {
        for (int skip = 0; skip < 4; ++skip) {
            std::array<int, 3> f;
            int n = 0;
            for (int i = 0; i < 4; ++i)
                if (i != skip) f[n++] = t[i];
            std::sort(f.begin(), f.end());
            ++faces[f];
        }
    }
    for (const auto& [f, cnt] : faces) {
        (void)f;
        if (cnt != 1 && cnt != 2) return false;
    }

    // hanging-node scan: a live edge whose midpoint coincides with an existing
    // vertex means a neighbor was split and this element was not
    auto pos_key = [](const Vec3& p) {
        std::array<uint64_t, 3> k;
        std::memcpy(k.data(), p.data(), sizeof(k));
        std::size_t h = 1469598103934665603ull;
        for (uint64_t w : k) {
            h ^= w;
            h *= 1099511628211ull;
        }
        return h;
    };
    std::unordered_map<std::size_t, std::vector<std::size_t>> vert_by_key;
    for (std::size_t v = 0; v < fe.vertices.size(); ++v) vert_by_key[pos_key(fe.vertices[v])].push_back(v);
    auto vertex_exists_at = [&](const Vec3& p) {
        auto it = vert_by_key.find(pos_key(p));
        if (it == vert_by_key.end()) return false;
        for (std::size_t v : it->second) {
            Vec3 d = fe.vertices[v] - p;
            if (dot(d, d) == 0.0) return true;
        }
        return false;
    };
    std::unordered_set<EdgeKey> edges;
    for (const auto& t : fe.tets)
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) edges.insert(edge_key(t[a], t[b]));
    for (EdgeKey key : edges) {
        int u = int(key >> 32), w2 = int(key & 0xffffffffu);
        if (vertex_exists_at(0.5 * (fe.vertices[u] + fe.vertices[w2]))) return false;
    }
    return true;
}

} // namespace emtomo
