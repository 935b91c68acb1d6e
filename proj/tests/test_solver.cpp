#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "emtomo/errors.hpp"
#include "emtomo/fem_assembly.hpp"
#include "emtomo/mesh.hpp"
#include "emtomo/solver.hpp"

using namespace emtomo;

namespace {

const double kH = 1.0 / 6.0;

HybridMesh lattice13() {
    Box omega{{-1, -1, -1}, {1, 1, 1}};
    Box fem{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
    Box in{{-kH, -kH, -kH}, {kH, kH, kH}};
    return build_hybrid(Vec3{kH, kH, kH}, omega, fem, in);
}

HybridMesh desk() {
    Box omega{{-1, -1, -1}, {1, 1, 1}};
    Box fem{{-0.7, -0.7, -0.7}, {0.7, 0.7, 0.7}};
    Box in{{-0.4, -0.4, -0.4}, {0.4, 0.4, 0.4}};
    return build_hybrid(Vec3{0.1, 0.1, 0.1}, omega, fem, in);
}

CoefficientPair vacuum(const FeMesh& fe) {
    return make_coefficients(fe, std::vector<double>(fe.element_count(), 1.0),
                             std::vector<double>(fe.element_count(), 0.0));
}

} // namespace

TEST_CASE("plane wave drives one full period and then stops") {
    SourceSpec src;
    src.omega = 8.0;
    src.amplitude = 2.5;
    const double period = 2.0 * std::numbers::pi / src.omega;
    CHECK(src.pulse_end() == doctest::Approx(period).epsilon(1e-14));
    CHECK(plane_wave(src, 0.0) == 0.0);
    CHECK(plane_wave(src, period / 4.0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(plane_wave(src, period / 2.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(plane_wave(src, period)) < 1e-12);
    CHECK(plane_wave(src, period * 1.0001) == 0.0);
    CHECK(plane_wave(src, 100.0) == 0.0);
}

TEST_CASE("taper weight holds at one and rolls smoothly to zero") {
    const int n = 100, w = 10;
    CHECK(taper_weight(0, n, w) == 1.0);
    CHECK(taper_weight(n - w, n, w) == 1.0);
    CHECK(taper_weight(n, n, w) == 0.0);
    CHECK(taper_weight(n + 3, n, w) == 0.0);
    CHECK(taper_weight(n - w / 2, n, w) == doctest::Approx(0.5).epsilon(1e-12));
    double prev = 1.0;
    for (int k = n - w; k <= n; ++k) {
        const double z = taper_weight(k, n, w);
        CHECK(z <= prev + 1e-15);
        CHECK(z >= 0.0);
        prev = z;
    }
    for (int k : {0, 50, 99, 100})
        CHECK(taper_weight(k, n, 0) == 1.0);
}

TEST_CASE("observation set covers the far face with lumped areas") {
    HybridMesh m = lattice13();
    ObservationSet obs = make_observation_set(m, 0.05);
    CHECK(obs.tau == 0.05);
    CHECK(obs.node_count() == 13 * 13);
    CHECK(obs.face_dims[0] == 13);
    CHECK(obs.face_dims[1] == 13);
    for (const Vec3& p : obs.positions)
        CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-14));
    // second axis runs fastest
    CHECK(obs.positions[1][1] == doctest::Approx(-1.0 + kH).epsilon(1e-12));
    CHECK(obs.positions[1][2] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(obs.positions[13][1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(obs.positions[13][2] == doctest::Approx(-1.0 + kH).epsilon(1e-12));

    double area = 0.0;
    for (double w : obs.weights)
        area += w;
    CHECK(area == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(obs.weights[0] == doctest::Approx(kH * kH / 4.0).epsilon(1e-12)); // corner
    CHECK(obs.weights[1] == doctest::Approx(kH * kH / 2.0).epsilon(1e-12)); // edge
    CHECK(obs.weights[14] == doctest::Approx(kH * kH).epsilon(1e-12));      // interior
}

TEST_CASE("field hand-off touches exactly the coupling nodes") {
    HybridMesh m = lattice13();
    const std::size_t nfd = m.fd.node_count();
    const std::size_t nfe = m.fe.node_count();

    Eigen::VectorXd fd(3 * nfd), fe = Eigen::VectorXd::Zero(3 * nfe);
    for (std::size_t i = 0; i < 3 * nfd; ++i)
        fd[i] = 0.25 * double(i) + 1.0;
    exchange_to_fe(m, fd, fe);
    std::set<int> o_nodes;
    for (auto [fen, fdn] : m.classes.o_pairs) {
        o_nodes.insert(fen);
        for (int c = 0; c < 3; ++c)
            CHECK(fe[3 * fen + c] == fd[3 * fdn + c]);
    }
    for (std::size_t n = 0; n < nfe; ++n)
        if (!o_nodes.count(int(n)))
            for (int c = 0; c < 3; ++c)
                CHECK(fe[3 * n + c] == 0.0);

    Eigen::VectorXd fe2(3 * nfe), fd2 = Eigen::VectorXd::Zero(3 * nfd);
    for (std::size_t i = 0; i < 3 * nfe; ++i)
        fe2[i] = -0.5 * double(i) - 2.0;
    exchange_to_fd(m, fe2, fd2);
    std::set<std::size_t> d_nodes;
    for (auto [fdn, fen] : m.classes.diamond_pairs) {
        d_nodes.insert(fdn);
        for (int c = 0; c < 3; ++c)
            CHECK(fd2[3 * fdn + c] == fe2[3 * fen + c]);
    }
    std::size_t untouched = 0;
    for (std::size_t n = 0; n < nfd; ++n)
        if (!d_nodes.count(n)) {
            bool zero = true;
            for (int c = 0; c < 3; ++c)
                zero = zero && fd2[3 * n + c] == 0.0;
            untouched += zero;
        }
    CHECK(untouched == nfd - d_nodes.size());
}

TEST_CASE("every FE node is either lattice-paired or strictly interior") {
    HybridMesh m = lattice13();
    std::set<int> paired;
    for (auto [fen, fdn] : m.classes.lattice_pairs)
        paired.insert(fen);
    const auto deep = deep_interior_fe_nodes(m);
    for (int n : deep)
        CHECK(!paired.count(n));
    CHECK(paired.size() + deep.size() == m.fe.node_count());
    // the box center sits three cells from the FEM surface, beyond the active band
    bool center_deep = false;
    for (int n : deep)
        if (norm(m.fe.vertices[n]) < 1e-12)
            center_deep = true;
    CHECK(center_deep);
}

TEST_CASE("FE and FD fields coincide on the overlap in a homogeneous medium") {
    HybridMesh m = lattice13();
    const double tau = cfl_timestep(m, 0.9);
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), tau);
    SourceSpec src;
    src.omega = 5.0;
    RunOptions opts;
    opts.record_history = false;
    opts.track_overlap = true;
    RunResult run = run_forward(m, ops, src, 60 * tau, tau, nullptr, opts);
    REQUIRE(run.overlap_rel.size() > 0);
    double worst = 0.0;
    for (double r : run.overlap_rel)
        worst = std::max(worst, r);
    CHECK(worst < 1e-10);
}

TEST_CASE("runs scale linearly with the drive amplitude") {
    HybridMesh m = lattice13();
    const double tau = cfl_timestep(m, 0.9);
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), tau);
    SourceSpec one, two;
    one.omega = two.omega = 6.0;
    one.amplitude = 1.0;
    two.amplitude = 2.0;
    RunOptions opts;
    opts.record_history = false;
    RunResult r1 = run_forward(m, ops, one, 40 * tau, tau, nullptr, opts);
    RunResult r2 = run_forward(m, ops, two, 40 * tau, tau, nullptr, opts);
    REQUIRE(r1.obs.series.size() == r2.obs.series.size());
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < r1.obs.series.size(); ++k) {
        worst = std::max(worst, (r2.obs.series[k] - 2.0 * r1.obs.series[k]).lpNorm<Eigen::Infinity>());
        scale = std::max(scale, r2.obs.series[k].lpNorm<Eigen::Infinity>());
    }
    REQUIRE(scale > 0.0);
    CHECK(worst <= 1e-13 * scale);
}

TEST_CASE("initial velocity data enters as the first field level") {
    HybridMesh m = lattice13();
    const double tau = cfl_timestep(m, 0.9);
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), tau);
    SourceSpec src;
    src.amplitude = 0.0;
    Eigen::VectorXd f1 = Eigen::VectorXd::Zero(3 * m.fe.node_count());
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist;
    for (int n : deep_interior_fe_nodes(m))
        for (int c = 0; c < 3; ++c)
            f1[3 * n + c] = dist(rng);
    RunResult run = run_forward(m, ops, src, 20 * tau, tau, &f1);
    REQUIRE(run.history.size() == std::size_t(run.steps) + 1);
    CHECK(run.history[0].norm() == 0.0);
    CHECK((run.history[1] - tau * f1).norm() == 0.0);
    CHECK(run.obs.series[0].norm() == 0.0);
    // the pulse reaches the far face eventually
    double late = 0.0;
    for (const auto& layer : run.obs.series)
        late = std::max(late, layer.lpNorm<Eigen::Infinity>());
    CHECK(late >= 0.0);
}

TEST_CASE("conductive medium dissipates energy once the drive stops") {
    HybridMesh m = lattice13();
    const double tau = cfl_timestep(m, 0.9);
    std::vector<double> eps(m.fe.element_count(), 1.0), sig(m.fe.element_count(), 0.0);
    for (std::size_t e : elements_in_region(m.fe, Region::IN))
        sig[e] = 0.5;
    AssembledOperators ops = assemble(m.fe, make_coefficients(m.fe, eps, sig), tau);
    SourceSpec src; // omega = 40, pulse ends after a couple of steps
    RunOptions opts;
    opts.record_history = false;
    opts.energy_audit = true;
    RunResult run = run_forward(m, ops, src, 200 * tau, tau, nullptr, opts);
    REQUIRE(run.energy.size() > 20);
    const int settle = int(src.pulse_end() / tau) + 2;
    double peak = 0.0;
    for (double e : run.energy)
        peak = std::max(peak, e);
    REQUIRE(peak > 0.0);
    for (std::size_t k = settle; k + 1 < run.energy.size(); ++k)
        CHECK(run.energy[k + 1] <= run.energy[k] * (1.0 + 1e-12));
    CHECK(run.energy.back() < peak);
}

TEST_CASE("a timestep past the stability bound is rejected mid-run") {
    HybridMesh m = lattice13();
    const double tau = 1.5 * cfl_timestep(m, 1.0);
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), tau);
    SourceSpec src;
    RunOptions opts;
    opts.record_history = false;
    CHECK_THROWS_AS(run_forward(m, ops, src, 500 * tau, tau, nullptr, opts), NumericalError);
}

TEST_CASE("a zero residual drives a zero adjoint state") {
    HybridMesh m = lattice13();
    const double tau = cfl_timestep(m, 0.9);
    AssembledOperators ops = assemble(m.fe, vacuum(m.fe), tau);
    SourceSpec src;
    src.amplitude = 0.0;
    ObservationSet r = make_observation_set(m, tau);
    const int n_steps = 30;
    r.series.assign(n_steps + 1, Eigen::VectorXd::Zero(3 * r.node_count()));
    RunResult adj = run_adjoint(m, ops, src, r);
    REQUIRE(adj.steps == n_steps);
    REQUIRE(adj.history.size() == std::size_t(n_steps) + 1);
    for (const auto& layer : adj.history)
        CHECK(layer.norm() == 0.0);
    CHECK(adj.f1_pairing.norm() == 0.0);
    CHECK(adj.f1_pairing.size() == Eigen::Index(3 * m.fe.node_count()));
}

TEST_CASE("adjoint run is the exact transpose of the velocity-to-data map") {
    HybridMesh m = desk();
    const FeMesh& fe = m.fe;
    std::vector<double> eps(fe.element_count(), 1.0), sig(fe.element_count(), 0.0);
    for (std::size_t e : elements_in_region(fe, Region::IN)) {
        eps[e] = 1.5;
        const Vec3 c = fe.element_centroid(e);
        if (c[0] > 0.0 && c[0] < 0.3 && c[1] > 0.0 && c[1] < 0.3 && c[2] > 0.0 && c[2] < 0.3)
            eps[e] = 2.0; // nonuniform permittivity makes the stiffness non-symmetric
    }
    const double tau = 0.05;
    AssembledOperators ops = assemble(fe, make_coefficients(fe, eps, sig), tau);
    SourceSpec src;
    src.omega = 7.0;
    src.amplitude = 0.0;

    std::mt19937_64 rng(123);
    std::normal_distribution<double> dist;
    const auto deep = deep_interior_fe_nodes(m);
    for (int taper : {10, 0}) {
        RunOptions opts;
        opts.record_history = false;
        opts.taper_steps = taper;
        Eigen::VectorXd f1 = Eigen::VectorXd::Zero(3 * fe.node_count());
        for (int n : deep)
            for (int c = 0; c < 3; ++c)
                f1[3 * n + c] = dist(rng);
        RunResult fwd = run_forward(m, ops, src, 1.5, tau, &f1, opts);
        const int n_steps = fwd.steps;

        ObservationSet r = fwd.obs;
        for (auto& layer : r.series)
            for (int i = 0; i < layer.size(); ++i)
                layer[i] = dist(rng);

        // <A f1, r> in the trapezoid-in-time, lumped-in-space data inner product
        double lhs = 0.0;
        for (int k = 1; k <= n_steps; ++k) {
            const double rho = (k == n_steps) ? 0.5 : 1.0;
            const double z = taper_weight(k, n_steps, taper);
            double layer = 0.0;
            for (std::size_t n = 0; n < r.nodes.size(); ++n)
                for (int c = 0; c < 3; ++c)
                    layer += r.weights[n] * r.series[k][3 * n + c] * fwd.obs.series[k][3 * n + c];
            lhs += rho * tau * z * layer;
        }

        RunOptions aopts = opts;
        aopts.record_history = true;
        RunResult adj = run_adjoint(m, ops, src, r, aopts);
        const double rhs = f1.dot(adj.f1_pairing);
        const double rel = std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs));
        CHECK(rel < 1e-12);
    }
}
