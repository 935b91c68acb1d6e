#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "emtomo/data_pipeline.hpp"
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

// small synthetic record: a 3 x 2 face, series[k] = base pattern scaled by k
ObservationSet synthetic(int n_steps, double tau) {
    ObservationSet obs;
    obs.nodes = {0, 1, 2, 3, 4, 5};
    obs.face_dims = {3, 2};
    obs.tau = tau;
    for (int i = 0; i < 6; ++i) {
        obs.positions.push_back({1.0, 0.1 * i, 0.2 * i});
        obs.weights.push_back(1.0);
    }
    Eigen::VectorXd base(18);
    for (int i = 0; i < 18; ++i)
        base[i] = 0.3 * i - 2.0;
    for (int k = 0; k <= n_steps; ++k)
        obs.series.push_back(double(k) * base);
    return obs;
}

} // namespace

TEST_CASE("data generation without refinement or stride is the plain forward run") {
    HybridMesh m = lattice13();
    const std::size_t ne = m.fe.element_count();
    std::vector<double> eps(ne, 1.0), sig(ne, 0.0);
    for (std::size_t e : elements_in_region(m.fe, Region::IN))
        eps[e] = 1.5;
    SourceSpec src;
    src.omega = 7.0;
    const double tau = cfl_timestep(m, 0.9);
    const double T = 24 * tau;

    DataGenOptions opts;
    opts.refine_times = 0;
    opts.cfl_safety = 0.9;
    ObservationSet gen = generate_observations(m, eps, sig, src, T, tau, opts);

    AssembledOperators ops = assemble(m.fe, make_coefficients(m.fe, eps, sig), tau);
    RunOptions light;
    light.record_history = false;
    ObservationSet direct = run_forward(m, ops, src, T, tau, nullptr, light).obs;

    CHECK(gen.tau == tau);
    REQUIRE(gen.series.size() == direct.series.size());
    for (std::size_t k = 0; k < gen.series.size(); ++k)
        CHECK((gen.series[k] - direct.series[k]).norm() == 0.0);

    CHECK_THROWS_AS(generate_observations(m, eps, sig, src, T, -0.1, opts), ConfigError);
    CHECK_THROWS_AS(generate_observations(m, std::vector<double>(ne - 1, 1.0), sig, src, T, tau, opts),
                    DataError);
}

TEST_CASE("a coarse recording grid subsamples an integer-stride fine run") {
    HybridMesh m = lattice13();
    const std::size_t ne = m.fe.element_count();
    std::vector<double> eps(ne, 1.0), sig(ne, 0.0);
    for (std::size_t e : elements_in_region(m.fe, Region::IN))
        eps[e] = 2.0;
    SourceSpec src;
    src.omega = 7.0;
    const double tau_cfl = cfl_timestep(m, 0.9);
    const double tau = 2.5 * tau_cfl; // forces an internal stride of 3
    const double T = 12 * tau;

    DataGenOptions opts;
    opts.refine_times = 0;
    opts.cfl_safety = 0.9;
    ObservationSet gen = generate_observations(m, eps, sig, src, T, tau, opts);
    CHECK(gen.tau == tau);
    REQUIRE(gen.series.size() == 13);

    const double tau_fine = tau / 3.0;
    AssembledOperators ops = assemble(m.fe, make_coefficients(m.fe, eps, sig), tau_fine);
    RunOptions light;
    light.record_history = false;
    ObservationSet fine = run_forward(m, ops, src, T, tau_fine, nullptr, light).obs;
    for (std::size_t k = 0; k < gen.series.size(); ++k)
        CHECK((gen.series[k] - fine.series[3 * k]).norm() == 0.0);
}

TEST_CASE("refining the data mesh perturbs the signal but not the recording layout") {
    HybridMesh m = lattice13();
    const std::size_t ne = m.fe.element_count();
    std::vector<double> eps(ne, 1.0), sig(ne, 0.0);
    for (std::size_t e : elements_in_region(m.fe, Region::IN))
        eps[e] = 2.0;
    SourceSpec src;
    src.omega = 7.0;
    const double tau = cfl_timestep(m, 0.9);
    const double T = 24 * tau;

    DataGenOptions flat;
    flat.refine_times = 0;
    DataGenOptions once; // default refine_times = 1
    ObservationSet a = generate_observations(m, eps, sig, src, T, tau, flat);
    ObservationSet b = generate_observations(m, eps, sig, src, T, tau, once);
    CHECK(a.nodes == b.nodes);
    CHECK(a.weights == b.weights);
    CHECK(a.tau == b.tau);
    REQUIRE(a.series.size() == b.series.size());
    double diff = 0.0, peak = 0.0;
    for (std::size_t k = 0; k < a.series.size(); ++k) {
        diff = std::max(diff, (a.series[k] - b.series[k]).lpNorm<Eigen::Infinity>());
        peak = std::max(peak, a.series[k].lpNorm<Eigen::Infinity>());
    }
    REQUIRE(peak > 0.0);
    CHECK(diff > 0.0);        // the finer forward model is a different model
    CHECK(diff < 0.5 * peak); // but not a different experiment
}

TEST_CASE("noise is reproducible, scaled per component, and off at zero") {
    ObservationSet clean = synthetic(30, 0.05);
    // amplify component 0, zero out component 2
    for (auto& level : clean.series)
        for (int i = 0; i < 6; ++i) {
            level[3 * i + 0] *= 10.0;
            level[3 * i + 2] = 0.0;
        }

    ObservationSet same = add_noise(clean, 0.0, 7);
    for (std::size_t k = 0; k < clean.series.size(); ++k)
        CHECK((same.series[k] - clean.series[k]).norm() == 0.0);
    CHECK_THROWS_AS(add_noise(clean, -0.01, 7), ConfigError);

    const double delta = 0.05;
    ObservationSet n1 = add_noise(clean, delta, 42);
    ObservationSet n2 = add_noise(clean, delta, 42);
    ObservationSet n3 = add_noise(clean, delta, 43);
    double d12 = 0.0, d13 = 0.0;
    for (std::size_t k = 0; k < clean.series.size(); ++k) {
        d12 = std::max(d12, (n1.series[k] - n2.series[k]).norm());
        d13 = std::max(d13, (n1.series[k] - n3.series[k]).norm());
    }
    CHECK(d12 == 0.0);
    CHECK(d13 > 0.0);

    double amp[3] = {0, 0, 0};
    for (const auto& level : clean.series)
        for (int i = 0; i < 6; ++i)
            for (int c = 0; c < 3; ++c)
                amp[c] = std::max(amp[c], std::abs(level[3 * i + c]));
    double ss[3] = {0, 0, 0};
    std::size_t count = 0;
    for (std::size_t k = 0; k < clean.series.size(); ++k)
        for (int i = 0; i < 6; ++i) {
            for (int c = 0; c < 3; ++c) {
                const double d = n1.series[k][3 * i + c] - clean.series[k][3 * i + c];
                ss[c] += d * d;
            }
            ++count;
        }
    for (int c = 0; c < 2; ++c) {
        const double sd = std::sqrt(ss[c] / double(count));
        CHECK(sd > 0.8 * delta * amp[c]);
        CHECK(sd < 1.2 * delta * amp[c]);
    }
    CHECK(ss[2] == 0.0); // a silent component stays silent
}

TEST_CASE("smoothing identities, averaging, and guards") {
    ObservationSet obs = synthetic(20, 0.05);
    ObservationSet id = smooth(obs, 1, 0.0);
    for (std::size_t k = 0; k < obs.series.size(); ++k)
        CHECK((id.series[k] - obs.series[k]).norm() == 0.0);

    // a linear-in-time record is a fixed point of the centered average
    ObservationSet t3 = smooth(obs, 3, 0.0);
    for (std::size_t k = 1; k + 1 < obs.series.size(); ++k)
        CHECK((t3.series[k] - obs.series[k]).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((t3.series[0] - 0.5 * (obs.series[0] + obs.series[1])).lpNorm<Eigen::Infinity>() <
          1e-12);

    // spatial averaging leaves a spatially constant field alone
    ObservationSet flat = obs;
    for (std::size_t k = 0; k < flat.series.size(); ++k)
        for (int i = 0; i < 6; ++i)
            for (int c = 0; c < 3; ++c)
                flat.series[k][3 * i + c] = double(k) + 0.1 * c;
    ObservationSet s = smooth(flat, 1, 1.5);
    for (std::size_t k = 0; k < flat.series.size(); ++k)
        CHECK((s.series[k] - flat.series[k]).lpNorm<Eigen::Infinity>() < 1e-12);

    // smoothing strips most of the added noise
    ObservationSet noisy = add_noise(flat, 0.1, 11);
    ObservationSet cleaned = smooth(noisy, 5, 1.0);
    double before = 0.0, after = 0.0;
    for (std::size_t k = 0; k < flat.series.size(); ++k) {
        before += (noisy.series[k] - flat.series[k]).squaredNorm();
        after += (cleaned.series[k] - flat.series[k]).squaredNorm();
    }
    CHECK(after < 0.7 * before);

    CHECK_THROWS_AS(smooth(obs, 0, 0.0), ConfigError);
    CHECK_THROWS_AS(smooth(obs, 3, -1.0), ConfigError);
    ObservationSet broken = obs;
    broken.face_dims = {4, 2}; // 8 != 6 nodes
    CHECK_THROWS_AS(smooth(broken, 1, 1.0), DataError);
}

TEST_CASE("resampling reproduces grid points and interpolates between them") {
    ObservationSet obs = synthetic(10, 0.125); // power-of-two step: exact grid hits
    ObservationSet same = resample_observations(obs, 0.125, 10);
    for (std::size_t k = 0; k < obs.series.size(); ++k)
        CHECK((same.series[k] - obs.series[k]).norm() == 0.0);

    ObservationSet half = resample_observations(obs, 0.0625, 20);
    CHECK(half.tau == 0.0625);
    REQUIRE(half.series.size() == 21);
    for (int k = 0; k <= 10; ++k)
        CHECK((half.series[2 * k] - obs.series[k]).norm() == 0.0);
    for (int k = 0; k < 10; ++k) {
        const Eigen::VectorXd mid = 0.5 * (obs.series[k] + obs.series[k + 1]);
        CHECK((half.series[2 * k + 1] - mid).lpNorm<Eigen::Infinity>() < 1e-13);
    }

    // targets past the recorded window hold the final level (t_end = 1.25)
    ObservationSet ext = resample_observations(obs, 0.5, 4);
    CHECK((ext.series[3] - obs.series[10]).norm() == 0.0); // t = 1.5
    CHECK((ext.series[4] - obs.series[10]).norm() == 0.0);

    CHECK_THROWS_AS(resample_observations(obs, 0.0, 5), ConfigError);
    CHECK_THROWS_AS(resample_observations(obs, 0.1, 0), ConfigError);
    ObservationSet empty = obs;
    empty.series.clear();
    CHECK_THROWS_AS(resample_observations(empty, 0.1, 5), DataError);
}
