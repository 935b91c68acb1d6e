#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "emtomo/adaptivity.hpp"
#include "emtomo/config.hpp"
#include "emtomo/data_pipeline.hpp"
#include "emtomo/errors.hpp"
#include "emtomo/fem_assembly.hpp"
#include "emtomo/inverse.hpp"
#include "emtomo/mesh.hpp"
#include "emtomo/obs_io.hpp"
#include "emtomo/phantom.hpp"
#include "emtomo/solver.hpp"
#include "emtomo/vtk_io.hpp"

namespace {

using namespace emtomo;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Scene {
    HybridMesh mesh;
    std::vector<double> eps_truth;
    std::vector<double> sigma_truth;
    bool synthetic_truth = false;
};

Box box_from(const Config& cfg, const std::string& prefix, const Vec3& lo, const Vec3& hi) {
    Box b;
    b.lo = cfg.get_vec3(prefix + "_lo", lo);
    b.hi = cfg.get_vec3(prefix + "_hi", hi);
    return b;
}

SourceSpec source_from(const Config& cfg) {
    SourceSpec src;
    src.omega = cfg.get_double("omega", 40.0);
    src.amplitude = cfg.get_double("amplitude", 1.0);
    src.component = cfg.get_int("component", 1);
    if (src.component < 0 || src.component > 2)
        throw ConfigError("component must be 0, 1 or 2");
    return src;
}

InversionConfig inversion_from(const Config& cfg) {
    InversionConfig inv;
    inv.gamma = cfg.get_double("gamma", inv.gamma);
    inv.theta = cfg.get_double("theta", inv.theta);
    inv.alpha0 = cfg.get_double("alpha0", inv.alpha0);
    inv.armijo_c1 = cfg.get_double("armijo_c1", inv.armijo_c1);
    inv.max_backtracks = cfg.get_int("max_backtracks", inv.max_backtracks);
    inv.max_iterations = cfg.get_int("max_iterations", inv.max_iterations);
    inv.restart_every = cfg.get_int("restart_every", inv.restart_every);
    inv.stabilize_tol = cfg.get_double("stabilize_tol", inv.stabilize_tol);
    inv.d1 = cfg.get_double("d1", inv.d1);
    inv.d2 = cfg.get_double("d2", inv.d2);
    inv.taper_steps = cfg.get_int("taper_steps", inv.taper_steps);
    return inv;
}

RefinementConfig refinement_from(const Config& cfg) {
    RefinementConfig ref;
    const std::string kind = cfg.get_string("indicator", "coefficient");
    if (kind == "coefficient")
        ref.indicator = RefinementConfig::Indicator::CoefficientSize;
    else if (kind == "gradient")
        ref.indicator = RefinementConfig::Indicator::GradientSize;
    else
        throw ConfigError("indicator must be 'coefficient' or 'gradient'");
    ref.beta = cfg.get_double("beta", ref.beta);
    ref.tol_iterate = cfg.get_double("tol_iterate", ref.tol_iterate);
    ref.tol_gradient = cfg.get_double("tol_gradient", ref.tol_gradient);
    ref.max_levels = cfg.get_int("max_levels", ref.max_levels);
    ref.max_splits = cfg.get_int("max_splits", ref.max_splits);
    ref.cfl_safety = cfg.get_double("cfl_safety", ref.cfl_safety);
    return ref;
}

Scene build_scene(const Config& cfg) {
    Scene scene;
    const Box omega = box_from(cfg, "omega_box", {-1, -1, -1}, {1, 1, 1});
    const Box fem = box_from(cfg, "fem_box", {-0.7, -0.7, -0.7}, {0.7, 0.7, 0.7});
    const Box in = box_from(cfg, "in_box", {-0.4, -0.4, -0.4}, {0.4, 0.4, 0.4});

    const std::string phantom_file = cfg.get_string("phantom_file", "");
    if (!phantom_file.empty()) {
        auto [ph, table] = load_phantom(phantom_file, cfg.require_string("media_file"));
        const int stride = cfg.get_int("phantom_stride", 1);
        if (stride > 1) ph = subsample(ph, stride);
        const double wf = cfg.get_double("weight_factor", 1.0);
        if (wf != 1.0) table = weight_media(table, wf);
        scene.mesh = build_hybrid(ph, omega, fem, in);
        CoefficientPair coeff = sample_coefficients(scene.mesh.fe, ph, table,
                                                    cfg.get_double("d1", 10.0),
                                                    cfg.get_double("d2", 2.0));
        scene.eps_truth = coeff.eps_p0;
        scene.sigma_truth = coeff.sigma_p0;
        scene.synthetic_truth = true;
        return scene;
    }

    const Vec3 spacing = cfg.get_vec3("spacing", {0.1, 0.1, 0.1});
    scene.mesh = build_hybrid(spacing, omega, fem, in);
    const std::size_t ne = scene.mesh.fe.element_count();
    scene.eps_truth.assign(ne, 1.0);
    scene.sigma_truth.assign(ne, 0.0);

    if (cfg.has("truth_box_lo") || cfg.has("truth_box_hi")) {
        const Box tb = box_from(cfg, "truth_box", {-0.1, 0.0, 0.0}, {0.2, 0.3, 0.3});
        const double te = cfg.get_double("truth_eps", 2.0);
        const double ts = cfg.get_double("truth_sigma", 0.0);
        for (std::size_t e = 0; e < ne; ++e) {
            if (scene.mesh.fe.element_region[e] != Region::IN) continue;
            if (tb.contains(scene.mesh.fe.element_centroid(e))) {
                scene.eps_truth[e] = te;
                scene.sigma_truth[e] = ts;
            }
        }
        scene.synthetic_truth = true;
    }
    return scene;
}

ObservationSet observations_for(const Config& cfg, const Scene& scene, const SourceSpec& src,
                                double T, double tau) {
    const std::string obs_file = cfg.get_string("observations_file", "");
    if (!obs_file.empty()) return read_observations(obs_file);
    if (!scene.synthetic_truth)
        throw ConfigError("no observations_file and no synthetic truth to simulate");

    DataGenOptions gen;
    gen.refine_times = cfg.get_int("data_refine_times", 1);
    gen.cfl_safety = cfg.get_double("cfl_safety", 0.9);
    ObservationSet obs =
        generate_observations(scene.mesh, scene.eps_truth, scene.sigma_truth, src, T, tau, gen);

    const double delta = cfg.get_double("noise_delta", 0.0);
    if (delta > 0.0) {
        obs = add_noise(obs, delta, static_cast<unsigned long long>(cfg.get_int("noise_seed", 1)));
        obs = smooth(obs, cfg.get_int("smooth_window", 5), cfg.get_double("smooth_radius", 1.0));
    }
    return obs;
}

void write_levels_csv(const std::string& path, const std::vector<LevelSummary>& levels) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "level,elements,fe_nodes,cgm_iterations,J,max_eps,contrast_error,tau\n";
    for (const LevelSummary& l : levels) {
        out << l.level << "," << l.elements << "," << l.fe_nodes << "," << l.cgm_iterations << ","
            << fmt(l.J) << "," << fmt(l.max_eps) << ",";
        if (l.contrast_error < 0)
            out << "n/a";
        else
            out << fmt(l.contrast_error);
        out << "," << fmt(l.tau) << "\n";
    }
}

int cmd_forward(const Config& cfg, const std::string& out_dir) {
    Scene scene = build_scene(cfg);
    const SourceSpec src = source_from(cfg);
    const double T = cfg.get_double("T", 3.0);
    const double tau = cfg.get_double("tau", 0.006);
    const double tau_cfl = cfl_timestep(scene.mesh, 1.0);
    if (tau > tau_cfl)
        std::cerr << "warning: tau " << fmt(tau) << " exceeds the stability bound " << fmt(tau_cfl)
                  << "\n";

    CoefficientPair coeff = make_coefficients(scene.mesh.fe, scene.eps_truth, scene.sigma_truth,
                                              cfg.get_double("d1", 10.0), cfg.get_double("d2", 2.0));
    AssembledOperators ops = assemble(scene.mesh.fe, coeff, tau);

    RunOptions ropts;
    ropts.record_history = false;
    const auto t0 = std::chrono::steady_clock::now();
    RunResult run = run_forward(scene.mesh, ops, src, T, tau, nullptr, ropts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string obs_path = out_dir + "/observations.txt";
    write_observations(obs_path, run.obs);

    const double n_nodes = static_cast<double>(scene.mesh.total_node_count());
    const double t_r = relative_time(secs, run.steps, n_nodes);
    std::cout << "forward: steps " << run.steps << ", nodes " << n_nodes << ", " << secs
              << " s, relative time " << t_r << " s per step per node\n";
    std::cout << "forward: observations written to " << obs_path << "\n";

    if (cfg.get_bool("write_vtk", false)) {
        std::vector<double> region(scene.mesh.fe.element_count());
        for (std::size_t e = 0; e < region.size(); ++e)
            region[e] = static_cast<double>(scene.mesh.fe.element_region[e]);
        write_vtk_mesh(out_dir + "/mesh.vtk", scene.mesh.fe,
                       {{"eps", &scene.eps_truth}, {"sigma", &scene.sigma_truth}, {"region", &region}});
    }

    std::cout << "status=ok command=forward steps=" << run.steps << " nodes=" << n_nodes
              << " seconds=" << fmt(secs) << " relative_time=" << fmt(t_r) << "\n";
    return 0;
}

int cmd_invert(const Config& cfg, const std::string& out_dir) {
    Scene scene = build_scene(cfg);
    const SourceSpec src = source_from(cfg);
    const double T = cfg.get_double("T", 3.0);
    const double tau = cfg.get_double("tau", 0.006);

    ObservationSet obs = observations_for(cfg, scene, src, T, tau);
    write_observations(out_dir + "/observations.txt", obs);

    const InversionConfig inv = inversion_from(cfg);
    const RefinementConfig ref = refinement_from(cfg);

    std::vector<double> prior(scene.mesh.fe.element_count(), cfg.get_double("prior_eps", 1.0));
    std::vector<double> sigma = scene.sigma_truth;
    if (!cfg.get_bool("sigma_known", true)) sigma.assign(sigma.size(), 0.0);

    const auto t0 = std::chrono::steady_clock::now();
    AdaptiveResult result =
        adaptive_reconstruct(scene.mesh, sigma, prior, obs, src, T, inv, ref,
                             scene.synthetic_truth ? &scene.eps_truth : nullptr);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_convergence_csv(out_dir + "/convergence.csv", result.iterations, false);
    write_levels_csv(out_dir + "/levels.csv", result.levels);

    for (const LevelSummary& l : result.levels) {
        std::cout << "level " << l.level << ": " << l.elements << " elements, " << l.fe_nodes
                  << " FE nodes, " << l.cgm_iterations << " iterations, J " << fmt(l.J)
                  << ", max eps " << fmt(l.max_eps);
        if (l.contrast_error >= 0) std::cout << ", contrast error " << fmt(l.contrast_error);
        std::cout << ", " << l.seconds << " s\n";
    }

    if (cfg.get_bool("write_vtk", false)) {
        std::vector<double> region(result.mesh.fe.element_count());
        for (std::size_t e = 0; e < region.size(); ++e)
            region[e] = static_cast<double>(result.mesh.fe.element_region[e]);
        write_vtk_mesh(out_dir + "/reconstruction.vtk", result.mesh.fe,
                       {{"eps", &result.eps_p0}, {"region", &region}});
    }

    double max_eps = 0.0;
    for (std::size_t e = 0; e < result.eps_p0.size(); ++e)
        if (result.mesh.fe.element_region[e] == Region::IN)
            max_eps = std::max(max_eps, result.eps_p0[e]);
    const LevelSummary& last = result.levels.back();

    std::cout << "status=ok command=invert levels=" << result.levels.size()
              << " iterations=" << result.iterations.size() << " max_eps=" << fmt(max_eps);
    if (last.contrast_error >= 0) std::cout << " contrast_error=" << fmt(last.contrast_error);
    std::cout << " stop=" << result.status << " seconds=" << fmt(secs) << "\n";
    return 0;
}

int cmd_phantom(const Config& cfg) {
    const std::string file = cfg.require_string("phantom_file");
    const PhantomHeader header = parse_phantom_header(file);
    std::cout << "phantom: dims " << header.dims[0] << " x " << header.dims[1] << " x "
              << header.dims[2] << ", spacing " << fmt(header.spacing[0]) << " "
              << fmt(header.spacing[1]) << " " << fmt(header.spacing[2]) << ", "
              << header.voxel_count() << " points\n";

    auto [ph, table] = load_phantom(file, cfg.require_string("media_file"));
    const int stride = cfg.get_int("phantom_stride", 1);
    if (stride > 1) {
        ph = subsample(ph, stride);
        std::cout << "phantom: stride " << stride << " subsample to " << ph.dims[0] << " x "
                  << ph.dims[1] << " x " << ph.dims[2] << "\n";
    }
    const double wf = cfg.get_double("weight_factor", 1.0);
    if (wf != 1.0) table = weight_media(table, wf);

    double eps_min = 1e300, eps_max = -1e300;
    for (std::size_t v = 0; v < ph.voxel_count(); ++v) {
        const MediaEntry& m = table.get(ph.codes[ph.media[v]]);
        eps_min = std::min(eps_min, m.eps_r);
        eps_max = std::max(eps_max, m.eps_r);
    }
    std::cout << "status=ok command=phantom points=" << ph.voxel_count() << " codes="
              << ph.codes.size() << " eps_min=" << fmt(eps_min) << " eps_max=" << fmt(eps_max)
              << "\n";
    return 0;
}

int cmd_selftest(bool unstable) {
    const Box omega{{-0.8, -0.8, -0.8}, {0.8, 0.8, 0.8}};
    const Box fem{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}};
    const Box in{{-0.2, -0.2, -0.2}, {0.2, 0.2, 0.2}};
    HybridMesh mesh = build_hybrid(Vec3{0.1, 0.1, 0.1}, omega, fem, in);

    SourceSpec src;
    src.omega = 20.0;
    const std::size_t ne = mesh.fe.element_count();
    std::vector<double> eps(ne, 1.0), sigma(ne, 0.0);

    if (unstable) {
        // deliberately step past the stability bound; the run must abort
        const double tau = 1.3 * cfl_timestep(mesh, 1.0);
        CoefficientPair coeff = make_coefficients(mesh.fe, eps, sigma);
        AssembledOperators ops = assemble(mesh.fe, coeff, tau);
        RunOptions ropts;
        ropts.record_history = false;
        run_forward(mesh, ops, src, 8.0, tau, nullptr, ropts);
        std::cout << "status=error kind=selftest message=\"unstable run failed to abort\"\n";
        return 3;
    }

    bool ok = true;

    if (plane_wave(src, 0.0) != 0.0 || plane_wave(src, src.pulse_end() + 1e-9) != 0.0 ||
        std::abs(plane_wave(src, 0.25 * src.pulse_end()) - 1.0) > 1e-12) {
        std::cout << "selftest: source window broken\n";
        ok = false;
    } else {
        std::cout << "selftest: source window ok\n";
    }

    {
        const double tau = cfl_timestep(mesh, 0.9);
        CoefficientPair coeff = make_coefficients(mesh.fe, eps, sigma);
        AssembledOperators ops = assemble(mesh.fe, coeff, tau);
        RunOptions ropts;
        ropts.record_history = false;
        ropts.track_overlap = true;
        RunResult run = run_forward(mesh, ops, src, 1.0, tau, nullptr, ropts);
        double worst = 0.0;
        for (double d : run.overlap_rel) worst = std::max(worst, d);
        if (worst < 1e-9) {
            std::cout << "selftest: mesh coincidence ok (disagreement " << worst << ")\n";
        } else {
            std::cout << "selftest: mesh coincidence broken (disagreement " << worst << ")\n";
            ok = false;
        }
    }

    {
        std::vector<double> sig = sigma;
        for (std::size_t e = 0; e < ne; ++e)
            if (mesh.fe.element_region[e] == Region::IN) sig[e] = 0.5;
        const double tau = cfl_timestep(mesh, 0.9);
        CoefficientPair coeff = make_coefficients(mesh.fe, eps, sig);
        AssembledOperators ops = assemble(mesh.fe, coeff, tau);
        RunOptions ropts;
        ropts.record_history = false;
        ropts.energy_audit = true;
        RunResult run = run_forward(mesh, ops, src, 2.0, tau, nullptr, ropts);
        const int quiet = static_cast<int>(std::ceil(src.pulse_end() / tau)) + 2;
        double worst = 0.0;
        for (std::size_t k = static_cast<std::size_t>(quiet) + 1; k < run.energy.size(); ++k)
            worst = std::max(worst, run.energy[k] - run.energy[k - 1]);
        if (worst <= 1e-12 * (1.0 + run.energy[static_cast<std::size_t>(quiet)])) {
            std::cout << "selftest: energy decay ok\n";
        } else {
            std::cout << "selftest: energy grew by " << worst << " per step\n";
            ok = false;
        }
    }

    {
        const double tau = 1.3 * cfl_timestep(mesh, 1.0);
        CoefficientPair coeff = make_coefficients(mesh.fe, eps, sigma);
        AssembledOperators ops = assemble(mesh.fe, coeff, tau);
        RunOptions ropts;
        ropts.record_history = false;
        bool aborted = false;
        try {
            run_forward(mesh, ops, src, 8.0, tau, nullptr, ropts);
        } catch (const NumericalError&) {
            aborted = true;
        }
        if (aborted) {
            std::cout << "selftest: blow-up abort ok\n";
        } else {
            std::cout << "selftest: unstable run failed to abort\n";
            ok = false;
        }
    }

    if (!ok) {
        std::cout << "status=error kind=selftest message=\"invariant violated\"\n";
        return 3;
    }
    std::cout << "status=ok command=selftest\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid finite element / finite difference permittivity tomography"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    bool unstable = false;

    CLI::App* forward = app.add_subcommand("forward", "run the forward solver and record the transmitted signal");
    forward->add_option("--config", config_path, "key = value configuration file")->required();
    forward->add_option("--out", out_dir, "output directory");

    CLI::App* invert = app.add_subcommand("invert", "reconstruct permittivity from boundary observations");
    invert->add_option("--config", config_path, "key = value configuration file")->required();
    invert->add_option("--out", out_dir, "output directory");

    CLI::App* phantom = app.add_subcommand("phantom", "inspect a voxel phantom");
    phantom->add_option("--config", config_path, "key = value configuration file")->required();

    CLI::App* selftest = app.add_subcommand("selftest", "run built-in solver invariants");
    selftest->add_flag("--unstable", unstable, "run one deliberately unstable step sequence and exit with the abort code");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (forward->parsed()) return cmd_forward(Config::parse_file(config_path), out_dir);
        if (invert->parsed()) return cmd_invert(Config::parse_file(config_path), out_dir);
        if (phantom->parsed()) return cmd_phantom(Config::parse_file(config_path));
        return cmd_selftest(unstable);
    } catch (const ConfigError& e) {
        std::cout << "status=error kind=config message=\"" << e.what() << "\"\n";
        return 1;
    } catch (const DataError& e) {
        std::cout << "status=error kind=data message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const MeshError& e) {
        std::cout << "status=error kind=mesh message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cout << "status=error kind=numerical message=\"" << e.what() << "\"\n";
        return 3;
    } catch (const std::exception& e) {
        std::cout << "status=error kind=internal message=\"" << e.what() << "\"\n";
        return 3;
    }
}
