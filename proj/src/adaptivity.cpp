#include "emtomo/adaptivity.hpp"

#include "emtomo/data_pipeline.hpp"
#include "emtomo/errors.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace emtomo {

std::vector<double> indicator_first(const FeMesh& fe, const std::vector<double>& eps_p0) {
    if (eps_p0.size() != fe.element_count())
        throw DataError("indicator_first: coefficient size does not match mesh");
    std::vector<double> score(fe.element_count(), 0.0);
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN) score[e] = std::abs(fe.h[e] * eps_p0[e]);
    return score;
}

std::vector<double> indicator_second(const FeMesh& fe, const std::vector<double>& g) {
    if (g.size() != fe.element_count())
        throw DataError("indicator_second: gradient size does not match mesh");
    std::vector<double> score(fe.element_count(), 0.0);
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN) score[e] = std::abs(g[e]);
    return score;
}

std::vector<std::size_t> mark_elements(const FeMesh& fe, const std::vector<double>& score,
                                       double beta) {
    if (score.size() != fe.element_count())
        throw DataError("mark_elements: score size does not match mesh");
    if (beta <= 0.0 || beta > 1.0) throw ConfigError("mark_elements: beta must lie in (0, 1]");

    double top = 0.0;
    for (std::size_t e = 0; e < score.size(); ++e)
        if (fe.element_region[e] == Region::IN) top = std::max(top, score[e]);

    std::vector<std::size_t> marked;
    if (top <= 0.0) return marked;
    const double threshold = beta * top;
    for (std::size_t e = 0; e < score.size(); ++e)
        if (fe.element_region[e] == Region::IN && score[e] >= threshold) marked.push_back(e);
    return marked;
}

std::vector<double> transfer_coefficients(const std::vector<double>& coarse_values,
                                          const FeMesh& fine) {
    std::vector<double> out(fine.element_count());
    for (std::size_t e = 0; e < fine.element_count(); ++e) {
        const int p = fine.parent[e];
        if (p < 0) {
            // an unrefined mesh carries no ancestry; the transfer is identity
            if (coarse_values.size() != fine.element_count())
                throw DataError("transfer_coefficients: element has no recorded ancestor");
            out[e] = coarse_values[e];
        } else {
            if (static_cast<std::size_t>(p) >= coarse_values.size())
                throw DataError("transfer_coefficients: ancestor id out of range");
            out[e] = coarse_values[static_cast<std::size_t>(p)];
        }
    }
    return out;
}

double relative_time(double seconds, double n_steps, double n_nodes) {
    if (n_steps <= 0.0 || n_nodes <= 0.0)
        throw ConfigError("relative_time: step and node counts must be positive");
    return seconds / (n_steps * n_nodes);
}

AdaptiveResult adaptive_reconstruct(const HybridMesh& mesh0, const std::vector<double>& sigma0,
                                    const std::vector<double>& eps_prior0,
                                    const ObservationSet& observed, const SourceSpec& src,
                                    double T, const InversionConfig& inv,
                                    const RefinementConfig& ref,
                                    const std::vector<double>* truth0) {
    const std::size_t ne0 = mesh0.fe.element_count();
    if (sigma0.size() != ne0 || eps_prior0.size() != ne0)
        throw DataError("adaptive_reconstruct: coefficient size does not match mesh");
    if (truth0 && truth0->size() != ne0)
        throw DataError("adaptive_reconstruct: truth size does not match mesh");
    if (observed.series.size() < 2)
        throw DataError("adaptive_reconstruct: observed series too short");
    if (ref.max_levels < 0) throw ConfigError("adaptive_reconstruct: max_levels must be >= 0");

    AdaptiveResult out;
    HybridMesh mesh = mesh0;
    std::vector<double> sigma = sigma0;
    std::vector<double> prior = eps_prior0;
    std::vector<double> eps = project_admissible(mesh.fe, eps_prior0, inv.d1);
    std::vector<double> truth;
    const bool have_truth = truth0 != nullptr;
    if (have_truth) truth = *truth0;

    // per-element split counter, tracked through volume ratios against the
    // original ancestor (each bisection halves the volume)
    std::vector<int> root_of(ne0);
    std::iota(root_of.begin(), root_of.end(), 0);
    std::vector<double> root_volume(ne0);
    for (std::size_t e = 0; e < ne0; ++e) root_volume[e] = mesh0.fe.element_volume(e);

    std::vector<double> eps_level_start = eps;
    out.status = "max-levels";

    for (int level = 0;; ++level) {
        // per-level stable step that lands exactly on the data window
        const double tau_cfl = cfl_timestep(mesh, ref.cfl_safety, inv.consts.c);
        int steps = static_cast<int>(std::ceil(T / tau_cfl - 1e-12));
        if (steps < 2) steps = 2;
        const double tau_level = T / steps;

        ObservationSet obs_level =
            (std::abs(tau_level - observed.tau) <= 1e-12 * observed.tau &&
             observed.series.size() == static_cast<std::size_t>(steps) + 1)
                ? observed
                : resample_observations(observed, tau_level, steps);

        const auto t0 = std::chrono::steady_clock::now();
        CgmResult cg = cgm_minimize(mesh, sigma, eps, prior, obs_level, src, T, tau_level, inv,
                                    have_truth ? &truth : nullptr, level);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        eps = cg.eps_p0;
        out.iterations.insert(out.iterations.end(), cg.history.begin(), cg.history.end());

        LevelSummary ls;
        ls.level = level;
        ls.elements = mesh.fe.element_count();
        ls.fe_nodes = mesh.fe.node_count();
        ls.cgm_iterations = static_cast<int>(cg.history.size());
        ls.J = cg.J;
        ls.max_eps = 0.0;
        for (std::size_t e = 0; e < eps.size(); ++e)
            if (mesh.fe.element_region[e] == Region::IN) ls.max_eps = std::max(ls.max_eps, eps[e]);
        ls.contrast_error = have_truth ? contrast_error(mesh.fe, eps, truth) : -1.0;
        ls.seconds = secs;
        ls.tau = tau_level;
        out.levels.push_back(ls);

        const double gn = in_norm(mesh.fe, cg.final_gradient);
        if (gn <= ref.tol_gradient) {
            out.status = "gradient-converged";
            break;
        }
        if (level > 0) {
            std::vector<double> diff(eps.size());
            for (std::size_t e = 0; e < eps.size(); ++e) diff[e] = eps[e] - eps_level_start[e];
            const double en = in_norm(mesh.fe, eps);
            if (en > 0.0 && in_norm(mesh.fe, diff) / en < ref.tol_iterate) {
                out.status = "iterate-stabilized";
                break;
            }
        }
        if (level >= ref.max_levels) break;

        std::vector<double> score = (ref.indicator == RefinementConfig::Indicator::GradientSize)
                                        ? indicator_second(mesh.fe, cg.final_gradient)
                                        : indicator_first(mesh.fe, eps);
        for (std::size_t e = 0; e < score.size(); ++e) {
            if (score[e] == 0.0) continue;
            const double ratio = root_volume[static_cast<std::size_t>(root_of[e])] /
                                 mesh.fe.element_volume(e);
            const int generation = static_cast<int>(std::llround(std::log2(ratio)));
            if (generation >= ref.max_splits) score[e] = 0.0;
        }
        std::vector<std::size_t> marked = mark_elements(mesh.fe, score, ref.beta);
        if (marked.empty()) {
            out.status = "no-marks";
            break;
        }

        HybridMesh fine = refine_local(mesh, marked);
        eps = transfer_coefficients(eps, fine.fe);
        sigma = transfer_coefficients(sigma, fine.fe);
        prior = transfer_coefficients(prior, fine.fe);
        if (have_truth) truth = transfer_coefficients(truth, fine.fe);
        std::vector<int> root_new(fine.fe.element_count());
        for (std::size_t e = 0; e < fine.fe.element_count(); ++e)
            root_new[e] = root_of[static_cast<std::size_t>(fine.fe.parent[e])];
        root_of = std::move(root_new);
        mesh = std::move(fine);
        eps_level_start = eps;
    }

    out.mesh = std::move(mesh);
    out.eps_p0 = std::move(eps);
    return out;
}

} // namespace emtomo
