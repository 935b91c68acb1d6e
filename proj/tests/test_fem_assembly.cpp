#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "emtomo/errors.hpp"
#include "emtomo/fem_assembly.hpp"
#include "emtomo/mesh.hpp"

using namespace emtomo;

namespace {

const double kH = 1.0 / 6.0;

HybridMesh lattice13() {
    Box omega{{-1, -1, -1}, {1, 1, 1}};
    Box fem{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
    Box in{{-kH, -kH, -kH}, {kH, kH, kH}};
    return build_hybrid(Vec3{kH, kH, kH}, omega, fem, in);
}

int find_node(const FeMesh& fe, const Vec3& p) {
    for (std::size_t n = 0; n < fe.node_count(); ++n)
        if (norm(fe.vertices[n] - p) < 1e-12)
            return int(n);
    return -1;
}

CoefficientPair vacuum(const FeMesh& fe) {
    return make_coefficients(fe, std::vector<double>(fe.element_count(), 1.0),
                             std::vector<double>(fe.element_count(), 0.0));
}

std::vector<double> in_value(const FeMesh& fe, double v, double background = 1.0) {
    std::vector<double> out(fe.element_count(), background);
    for (std::size_t e : elements_in_region(fe, Region::IN))
        out[e] = v;
    return out;
}

} // namespace

TEST_CASE("element shapes reproduce constants and linear fields") {
    HybridMesh m = lattice13();
    for (std::size_t e : {std::size_t(0), m.fe.element_count() / 2, m.fe.element_count() - 1}) {
        ElementShape s = element_shape(m.fe, e);
        CHECK(s.vol == doctest::Approx(kH * kH * kH / 6.0).epsilon(1e-12));
        Vec3 gsum{0, 0, 0};
        for (int a = 0; a < 4; ++a)
            gsum = gsum + s.grad[a];
        CHECK(norm(gsum) < 1e-12);
        // nabla of the P1 interpolant of f(x) = alpha . x is alpha
        const Vec3 alpha{0.3, -1.2, 2.5};
        Vec3 rec{0, 0, 0};
        for (int a = 0; a < 4; ++a)
            rec = rec + dot(alpha, m.fe.vertices[m.fe.tets[e][a]]) * s.grad[a];
        CHECK(norm(rec - alpha) < 1e-10);
    }
}

TEST_CASE("lumped mass matches the box volume and the lattice cell volume") {
    HybridMesh m = lattice13();
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), 0.01);
    CHECK(ops.M.sum() == doctest::Approx(1.0).epsilon(1e-12));
    const int center = find_node(m.fe, {0, 0, 0});
    REQUIRE(center >= 0);
    CHECK(ops.M[center] == doctest::Approx(kH * kH * kH).epsilon(1e-12));
    // no conductivity: damping mass empty, M1 collapses to M
    CHECK(ops.M2.norm() == 0.0);
    CHECK((ops.M1 - ops.M).norm() == 0.0);
}

TEST_CASE("unit-permittivity stiffness row is the 7-point stencil") {
    HybridMesh m = lattice13();
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), 0.01);
    const int c = find_node(m.fe, {0, 0, 0});
    REQUIRE(c >= 0);
    CHECK(ops.G1.coeff(c, c) == doctest::Approx(6.0 * kH).epsilon(1e-12));
    double row_sum = 0.0;
    for (SpMat::InnerIterator it(ops.G1, c); it; ++it) {
        row_sum += it.value();
        if (it.col() == c)
            continue;
        const Vec3 d = m.fe.vertices[it.col()] - m.fe.vertices[c];
        const bool axis_neighbor =
            std::abs(norm(d) - kH) < 1e-12 &&
            (std::abs(d[0]) > 1e-12) + (std::abs(d[1]) > 1e-12) + (std::abs(d[2]) > 1e-12) == 1;
        if (axis_neighbor)
            CHECK(it.value() == doctest::Approx(-kH).epsilon(1e-12));
        else
            CHECK(std::abs(it.value()) < 1e-13); // diagonal couplings cancel
    }
    CHECK(std::abs(row_sum) < 1e-13);
}

TEST_CASE("divergence blocks cancel at unit permittivity") {
    HybridMesh m = lattice13();
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), 0.01);
    CHECK((ops.G2 - ops.G3).norm() == 0.0);

    // the full stiffness action reduces to the componentwise scalar laplacian
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist;
    Eigen::VectorXd y(3 * m.fe.node_count());
    for (int i = 0; i < y.size(); ++i)
        y[i] = dist(rng);
    const Eigen::VectorXd Sy = ops.combined() * y;
    for (int comp = 0; comp < 3; ++comp) {
        Eigen::VectorXd yc(m.fe.node_count());
        for (std::size_t n = 0; n < m.fe.node_count(); ++n)
            yc[n] = y[3 * n + comp];
        const Eigen::VectorXd gy = ops.G1 * yc;
        for (std::size_t n = 0; n < m.fe.node_count(); ++n)
            CHECK(Sy[3 * n + comp] == doctest::Approx(gy[n]).epsilon(1e-10));
    }
}

TEST_CASE("varying permittivity breaks only the G2 symmetry") {
    HybridMesh m = lattice13();
    CoefficientPair coeff = make_coefficients(m.fe, in_value(m.fe, 2.5),
                                              std::vector<double>(m.fe.element_count(), 0.0));
    AssembledOperators ops = assemble(m.fe, coeff, 0.01);
    const double scale = ops.G3.norm();
    CHECK(SpMat(ops.G1 - SpMat(ops.G1.transpose())).norm() < 1e-13 * scale);
    CHECK(SpMat(ops.G3 - SpMat(ops.G3.transpose())).norm() < 1e-13 * scale);
    CHECK(SpMat(ops.G2 - SpMat(ops.G2.transpose())).norm() > 1e-6 * scale);
    CHECK(SpMat(ops.combined_transpose() - SpMat(ops.combined().transpose())).norm() == 0.0);

    // 1/eps-weighted gradient form stays positive semidefinite
    std::mt19937_64 rng(11);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd x(m.fe.node_count());
        for (int i = 0; i < x.size(); ++i)
            x[i] = dist(rng);
        CHECK(x.dot(ops.G1 * x) >= 0.0);
    }
}

TEST_CASE("damping mass is linear in sigma and feeds M1 with the tau scaling") {
    HybridMesh m = lattice13();
    const double tau = 0.02;
    Constants consts;
    consts.c = 2.0;
    consts.mu0 = 3.0;
    CoefficientPair a = make_coefficients(m.fe, in_value(m.fe, 1.5), in_value(m.fe, 0.4, 0.0));
    CoefficientPair b = make_coefficients(m.fe, in_value(m.fe, 1.5), in_value(m.fe, 0.8, 0.0));
    AssembledOperators oa = assemble(m.fe, a, tau, consts);
    AssembledOperators ob = assemble(m.fe, b, tau, consts);
    CHECK(oa.M2.norm() > 0.0);
    CHECK((ob.M2 - 2.0 * oa.M2).norm() == 0.0); // doubling sigma doubles every entry
    CHECK((oa.M - ob.M).norm() == 0.0);         // plain mass ignores the coefficients
    const Eigen::VectorXd m1 = oa.M + tau * consts.c * consts.c * consts.mu0 * oa.M2;
    CHECK((oa.M1 - m1).norm() == 0.0);
}

TEST_CASE("node averaging is volume weighted and clamped") {
    HybridMesh m = lattice13();
    const std::size_t ne = m.fe.element_count();
    CHECK(p0_to_p1(std::vector<double>(ne, 2.0), m.fe, 1.0, 10.0) ==
          std::vector<double>(m.fe.node_count(), 2.0));
    CHECK(p0_to_p1(std::vector<double>(ne, 20.0), m.fe, 1.0, 10.0) ==
          std::vector<double>(m.fe.node_count(), 10.0));
    CHECK(p0_to_p1(std::vector<double>(ne, 0.25), m.fe, 1.0, 10.0) ==
          std::vector<double>(m.fe.node_count(), 1.0));

    // equal element volumes: the node value is the plain ring average
    std::vector<double> v(ne);
    for (std::size_t e = 0; e < ne; ++e)
        v[e] = (e % 2) ? 3.0 : 1.0;
    const auto nodal = p0_to_p1(v, m.fe, 0.0, 100.0);
    std::vector<double> count(m.fe.node_count(), 0.0), acc(m.fe.node_count(), 0.0);
    for (std::size_t e = 0; e < ne; ++e)
        for (int a = 0; a < 4; ++a) {
            count[m.fe.tets[e][a]] += 1.0;
            acc[m.fe.tets[e][a]] += v[e];
        }
    for (std::size_t n = 0; n < m.fe.node_count(); ++n)
        CHECK(nodal[n] == doctest::Approx(acc[n] / count[n]).epsilon(1e-12));

    CHECK_THROWS_AS(p0_to_p1(std::vector<double>(ne - 1, 1.0), m.fe, 1.0, 10.0), DataError);
}

TEST_CASE("coefficient validation enforces bounds and vacuum outside IN") {
    HybridMesh m = lattice13();
    const std::size_t ne = m.fe.element_count();
    const std::vector<double> zeros(ne, 0.0);
    CHECK_NOTHROW(make_coefficients(m.fe, in_value(m.fe, 9.9), in_value(m.fe, 1.9, 0.0)));
    CHECK_THROWS_AS(make_coefficients(m.fe, in_value(m.fe, 0.5), zeros), DataError);
    CHECK_THROWS_AS(make_coefficients(m.fe, in_value(m.fe, 11.0), zeros), DataError);
    CHECK_THROWS_AS(make_coefficients(m.fe, in_value(m.fe, 1.5), in_value(m.fe, -0.1, 0.0)),
                    DataError);
    CHECK_THROWS_AS(make_coefficients(m.fe, in_value(m.fe, 1.5), in_value(m.fe, 2.5, 0.0)),
                    DataError);

    // a single non-vacuum element outside IN is rejected
    std::vector<double> eps(ne, 1.0);
    eps[elements_in_region(m.fe, Region::OVERLAP)[0]] = 1.2;
    CHECK_THROWS_AS(make_coefficients(m.fe, eps, zeros), DataError);
}

TEST_CASE("boundary load integrates the surface trace") {
    HybridMesh m = lattice13();
    CoefficientPair coeff = vacuum(m.fe);
    const Vec3 gval{1.0, 2.0, -3.0};
    std::vector<Vec3> g(m.fe.node_count(), gval);
    const Eigen::VectorXd load = boundary_load(m.fe, g, coeff);

    double sums[3] = {0, 0, 0};
    for (std::size_t n = 0; n < m.fe.node_count(); ++n)
        for (int c = 0; c < 3; ++c)
            sums[c] += load[3 * n + c];
    for (int c = 0; c < 3; ++c) // partition of unity over the 6 unit faces
        CHECK(sums[c] == doctest::Approx(6.0 * gval[c]).epsilon(1e-12));

    const int center = find_node(m.fe, {0, 0, 0});
    REQUIRE(center >= 0);
    for (int c = 0; c < 3; ++c)
        CHECK(load[3 * center + c] == 0.0);

    std::vector<Vec3> g2(m.fe.node_count(), 2.0 * gval);
    CHECK((boundary_load(m.fe, g2, coeff) - 2.0 * load).norm() < 1e-14);
}
