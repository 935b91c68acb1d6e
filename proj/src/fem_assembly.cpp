#include "emtomo/fem_assembly.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "emtomo/errors.hpp"
#include "emtomo/quad_rules.hpp"

namespace emtomo {

namespace {

using quad::kCub5Pts;
using quad::kCub5W;
using quad::kPos4Pts;
using quad::kPos4W;

} // namespace

ElementShape element_shape(const FeMesh& fe, std::size_t e) {
    const auto& t = fe.tets[e];
    const Vec3& p0 = fe.vertices[t[0]];
    Vec3 d1 = fe.vertices[t[1]] - p0;
    Vec3 d2 = fe.vertices[t[2]] - p0;
    Vec3 d3 = fe.vertices[t[3]] - p0;
    double det = dot(d1, cross(d2, d3));
    ElementShape g;
    g.vol = det / 6.0;
    if (g.vol <= 0.0)
        throw MeshError("degenerate element in assembly");
    // rows of the inverse Jacobian are the gradients of phi_1..phi_3
    Vec3 c1 = cross(d2, d3);
    Vec3 c2 = cross(d3, d1);
    Vec3 c3 = cross(d1, d2);
    for (int a = 0; a < 3; ++a) {
        g.grad[1][a] = c1[a] / det;
        g.grad[2][a] = c2[a] / det;
        g.grad[3][a] = c3[a] / det;
        g.grad[0][a] = -(g.grad[1][a] + g.grad[2][a] + g.grad[3][a]);
    }
    return g;
}

void CoefficientPair::validate(const FeMesh& fe) const {
    const std::size_t ne = fe.element_count();
    const std::size_t nn = fe.node_count();
    if (eps_p0.size() != ne || sigma_p0.size() != ne)
        throw DataError("coefficient arrays do not match the element count");
    if (eps_p1.size() != nn || sigma_p1.size() != nn)
        throw DataError("nodal coefficient arrays do not match the node count");
    for (std::size_t e = 0; e < ne; ++e) {
        if (!(eps_p0[e] >= 1.0 && eps_p0[e] <= d1))
            throw DataError("eps_r outside the admissible interval");
        if (!(sigma_p0[e] >= 0.0 && sigma_p0[e] <= d2))
            throw DataError("sigma outside the admissible interval");
        if (fe.element_region[e] != Region::IN) {
            if (eps_p0[e] != 1.0 || sigma_p0[e] != 0.0)
                throw DataError("non-vacuum coefficients outside the interior subregion");
        }
    }
}

std::vector<double> p0_to_p1(const std::vector<double>& per_element, const FeMesh& fe, double lo,
                             double hi) {
    if (per_element.size() != fe.element_count())
        throw DataError("p0_to_p1: value array does not match the element count");
    std::vector<double> num(fe.node_count(), 0.0), den(fe.node_count(), 0.0);
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        double v = fe.element_volume(static_cast<int>(e));
        for (int a = 0; a < 4; ++a) {
            int n = fe.tets[e][a];
            num[n] += v * per_element[e];
            den[n] += v;
        }
    }
    std::vector<double> out(fe.node_count());
    for (std::size_t n = 0; n < out.size(); ++n)
        out[n] = std::clamp(num[n] / den[n], lo, hi);
    return out;
}

CoefficientPair make_coefficients(const FeMesh& fe, std::vector<double> eps_p0,
                                  std::vector<double> sigma_p0, double d1, double d2) {
    CoefficientPair c;
    c.d1 = d1;
    c.d2 = d2;
    c.eps_p0 = std::move(eps_p0);
    c.sigma_p0 = std::move(sigma_p0);
    c.eps_p1 = p0_to_p1(c.eps_p0, fe, 1.0, d1);
    c.sigma_p1 = p0_to_p1(c.sigma_p0, fe, 0.0, d2);
    c.validate(fe);
    return c;
}

CoefficientPair sample_coefficients(const FeMesh& fe, const VoxelPhantom& phantom,
                                    const MediaTable& table, double d1, double d2) {
    std::vector<double> eps(fe.element_count(), 1.0), sig(fe.element_count(), 0.0);
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        if (fe.element_region[e] != Region::IN)
            continue;
        Vec3 c = fe.element_centroid(static_cast<int>(e));
        const std::string& code = phantom.code_near(c);
        const MediaEntry& m = table.get(code);
        eps[e] = std::clamp(m.eps_r, 1.0, d1);
        sig[e] = std::clamp(m.sigma, 0.0, d2);
    }
    return make_coefficients(fe, std::move(eps), std::move(sig), d1, d2);
}

AssembledOperators assemble(const FeMesh& fe, const CoefficientPair& coeff, double tau,
                            const Constants& consts) {
    coeff.validate(fe);
    const int nn = static_cast<int>(fe.node_count());
    const int ne = static_cast<int>(fe.element_count());

    AssembledOperators ops;
    ops.tau = tau;
    ops.consts = consts;
    ops.M = Eigen::VectorXd::Zero(nn);
    ops.M2 = Eigen::VectorXd::Zero(nn);

    std::vector<Eigen::Triplet<double>> t1, t2, t3;
    t1.reserve(static_cast<std::size_t>(ne) * 16);
    t2.reserve(static_cast<std::size_t>(ne) * 144);
    t3.reserve(static_cast<std::size_t>(ne) * 144);

    for (int e = 0; e < ne; ++e) {
        ElementShape g = element_shape(fe, e);
        const auto& t = fe.tets[e];
        double en[4], sn[4];
        for (int a = 0; a < 4; ++a) {
            en[a] = coeff.eps_p1[t[a]];
            sn[a] = coeff.sigma_p1[t[a]];
        }

        // lumped masses, positive rule: row sum of (w phi_i, phi_j) is (w, phi_i)
        for (int q = 0; q < 4; ++q) {
            double eq = 0, sq = 0;
            for (int a = 0; a < 4; ++a) {
                eq += kPos4Pts[q][a] * en[a];
                sq += kPos4Pts[q][a] * sn[a];
            }
            double wq = kPos4W * g.vol;
            for (int a = 0; a < 4; ++a) {
                double phi = kPos4Pts[q][a];
                ops.M[t[a]] += wq * phi;
                ops.M2[t[a]] += wq * phi * sq / (2.0 * eq);
            }
        }

        const bool eps_const = en[0] == en[1] && en[1] == en[2] && en[2] == en[3];
        if (eps_const) {
            double inv = 1.0 / en[0];
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) {
                    double g1 = inv * g.vol * dot(g.grad[a], g.grad[b]);
                    t1.emplace_back(t[a], t[b], g1);
                    for (int c = 0; c < 3; ++c) {
                        for (int d = 0; d < 3; ++d) {
                            double gd = g.vol * g.grad[a][c] * g.grad[b][d];
                            // constant eps: the trial-side eps cancels the 1/eps weight
                            t2.emplace_back(3 * t[a] + c, 3 * t[b] + d, gd);
                            t3.emplace_back(3 * t[a] + c, 3 * t[b] + d, inv * gd);
                        }
                    }
                }
            }
        } else {
            Vec3 geps{0, 0, 0};
            for (int a = 0; a < 4; ++a)
                geps = geps + en[a] * g.grad[a];
            double acc1[4][4] = {};
            double acc2[4][3][4][3] = {};
            double acc3[4][3][4][3] = {};
            for (int q = 0; q < 5; ++q) {
                double eq = 0;
                for (int a = 0; a < 4; ++a)
                    eq += kCub5Pts[q][a] * en[a];
                double wq = kCub5W[q] * g.vol;
                double inv = 1.0 / eq;
                for (int a = 0; a < 4; ++a) {
                    for (int b = 0; b < 4; ++b) {
                        acc1[a][b] += wq * inv * dot(g.grad[a], g.grad[b]);
                        double phib = kCub5Pts[q][b];
                        for (int c = 0; c < 3; ++c) {
                            double test = g.grad[a][c]; // div of phi_a e_c
                            for (int d = 0; d < 3; ++d) {
                                double trial = g.grad[b][d];
                                acc3[a][c][b][d] += wq * inv * test * trial;
                                // div(eps phi_b e_d) = eps d_d phi_b + phi_b d_d eps
                                acc2[a][c][b][d] +=
                                    wq * inv * test * (eq * trial + phib * geps[d]);
                            }
                        }
                    }
                }
            }
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    t1.emplace_back(t[a], t[b], acc1[a][b]);
                    for (int c = 0; c < 3; ++c)
                        for (int d = 0; d < 3; ++d) {
                            t2.emplace_back(3 * t[a] + c, 3 * t[b] + d, acc2[a][c][b][d]);
                            t3.emplace_back(3 * t[a] + c, 3 * t[b] + d, acc3[a][c][b][d]);
                        }
                }
        }
    }

    ops.G1.resize(nn, nn);
    ops.G1.setFromTriplets(t1.begin(), t1.end());
    ops.G2.resize(3 * nn, 3 * nn);
    ops.G2.setFromTriplets(t2.begin(), t2.end());
    ops.G3.resize(3 * nn, 3 * nn);
    ops.G3.setFromTriplets(t3.begin(), t3.end());

    double cc = consts.c * consts.c;
    ops.M1 = ops.M + tau * cc * consts.mu0 * ops.M2;
    return ops;
}

const SpMat& AssembledOperators::combined() const {
    if (!have_S_) {
        const int nn = static_cast<int>(M.size());
        std::vector<Eigen::Triplet<double>> tr;
        tr.reserve(static_cast<std::size_t>(G1.nonZeros()) * 3);
        for (int i = 0; i < G1.outerSize(); ++i)
            for (SpMat::InnerIterator it(G1, i); it; ++it)
                for (int c = 0; c < 3; ++c)
                    tr.emplace_back(3 * static_cast<int>(it.row()) + c,
                                    3 * static_cast<int>(it.col()) + c, it.value());
        SpMat G1b(3 * nn, 3 * nn);
        G1b.setFromTriplets(tr.begin(), tr.end());
        double cc = consts.c * consts.c;
        S_ = cc * (G1b + consts.eps0 * G2 - G3);
        S_.makeCompressed();
        have_S_ = true;
    }
    return S_;
}

const SpMat& AssembledOperators::combined_transpose() const {
    if (!have_St_) {
        St_ = combined().transpose();
        St_.makeCompressed();
        have_St_ = true;
    }
    return St_;
}

Eigen::VectorXd boundary_load(const FeMesh& fe, const std::vector<Vec3>& g,
                              const CoefficientPair& coeff) {
    if (g.size() != fe.node_count())
        throw DataError("boundary_load: data does not match the node count");
    const int nn = static_cast<int>(fe.node_count());
    Eigen::VectorXd F = Eigen::VectorXd::Zero(3 * nn);

    // boundary triangles are the faces seen by exactly one element
    std::unordered_map<std::uint64_t, std::pair<int, std::array<int, 3>>> faces;
    auto key = [](std::array<int, 3> f) {
        std::sort(f.begin(), f.end());
        for (int v : f)
            if (v < 0 || v >= (1 << 21))
                throw MeshError("node id out of range for face keys");
        return (static_cast<std::uint64_t>(f[0]) << 42) | (static_cast<std::uint64_t>(f[1]) << 21) |
               static_cast<std::uint64_t>(f[2]);
    };
    static const int kFace[4][3] = {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}};
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        for (const auto& fl : kFace) {
            std::array<int, 3> f{fe.tets[e][fl[0]], fe.tets[e][fl[1]], fe.tets[e][fl[2]]};
            auto& slot = faces[key(f)];
            slot.first += 1;
            slot.second = f;
        }
    }

    for (const auto& [k, slot] : faces) {
        (void)k;
        if (slot.first != 1)
            continue;
        const auto& f = slot.second;
        Vec3 a = fe.vertices[f[0]], b = fe.vertices[f[1]], c = fe.vertices[f[2]];
        double area = 0.5 * norm(cross(b - a, c - a));
        // edge-midpoint rule, exact to degree 2 on the triangle
        for (int m = 0; m < 3; ++m) {
            int i = f[m], j = f[(m + 1) % 3];
            double em = 0.5 * (coeff.eps_p1[i] + coeff.eps_p1[j]);
            for (int comp = 0; comp < 3; ++comp) {
                double gm = 0.5 * (g[i][comp] + g[j][comp]) / em;
                F[3 * i + comp] += (area / 3.0) * 0.5 * gm;
                F[3 * j + comp] += (area / 3.0) * 0.5 * gm;
            }
        }
    }
    return F;
}

} // namespace emtomo
