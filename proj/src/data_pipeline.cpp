#include "emtomo/data_pipeline.hpp"

#include "emtomo/adaptivity.hpp"
#include "emtomo/errors.hpp"
#include "emtomo/fem_assembly.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace emtomo {

ObservationSet generate_observations(const HybridMesh& mesh, const std::vector<double>& eps_truth,
                                     const std::vector<double>& sigma_truth,
                                     const SourceSpec& src, double T, double tau,
                                     const DataGenOptions& opts) {
    if (tau <= 0.0 || T <= 0.0) throw ConfigError("generate_observations: T and tau must be positive");
    if (eps_truth.size() != mesh.fe.element_count() || sigma_truth.size() != mesh.fe.element_count())
        throw DataError("generate_observations: coefficient size does not match mesh");

    HybridMesh data_mesh = mesh;
    std::vector<double> eps = eps_truth;
    std::vector<double> sigma = sigma_truth;
    for (int r = 0; r < opts.refine_times; ++r) {
        std::vector<std::size_t> marked = elements_in_region(data_mesh.fe, Region::IN);
        if (marked.empty()) break;
        HybridMesh fine = refine_local(data_mesh, marked);
        eps = transfer_coefficients(eps, fine.fe);
        sigma = transfer_coefficients(sigma, fine.fe);
        data_mesh = std::move(fine);
    }

    // data run uses its own stable step; an integer multiple lands exactly on
    // the requested recording grid
    const double tau_cfl = cfl_timestep(data_mesh, opts.cfl_safety);
    int stride = static_cast<int>(std::ceil(tau / tau_cfl - 1e-12));
    if (stride < 1) stride = 1;
    const double tau_fine = tau / stride;

    CoefficientPair coeff = make_coefficients(data_mesh.fe, eps, sigma);
    AssembledOperators ops = assemble(data_mesh.fe, coeff, tau_fine);

    RunOptions ropts;
    ropts.record_history = false;
    ropts.blowup = opts.blowup;
    RunResult run = run_forward(data_mesh, ops, src, T, tau_fine, nullptr, ropts);

    ObservationSet out = run.obs;
    if (stride > 1) {
        std::vector<Eigen::VectorXd> kept;
        for (std::size_t k = 0; k < run.obs.series.size(); k += static_cast<std::size_t>(stride))
            kept.push_back(run.obs.series[k]);
        out.series = std::move(kept);
    }
    out.tau = tau;
    return out;
}

ObservationSet add_noise(ObservationSet obs, double delta, unsigned long long seed) {
    if (delta == 0.0) return obs;
    if (delta < 0.0) throw ConfigError("add_noise: delta must be nonnegative");
    const std::size_t n = obs.nodes.size();

    double amp[3] = {0.0, 0.0, 0.0};
    for (const Eigen::VectorXd& level : obs.series)
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c)
                amp[c] = std::max(amp[c], std::abs(level[static_cast<Eigen::Index>(3 * i + c)]));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::VectorXd& level : obs.series)
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c)
                level[static_cast<Eigen::Index>(3 * i + c)] += delta * amp[c] * gauss(rng);
    return obs;
}

ObservationSet smooth(const ObservationSet& obs, int temporal_window, double spatial_radius) {
    if (temporal_window < 1) throw ConfigError("smooth: temporal window must be >= 1");
    if (spatial_radius < 0.0) throw ConfigError("smooth: spatial radius must be nonnegative");

    ObservationSet out = obs;
    const std::size_t levels = obs.series.size();
    const std::size_t n = obs.nodes.size();

    if (temporal_window > 1 && levels > 1) {
        const int hw = (temporal_window - 1) / 2;
        for (std::size_t k = 0; k < levels; ++k) {
            const int lo = std::max<int>(0, static_cast<int>(k) - hw);
            const int hi = std::min<int>(static_cast<int>(levels) - 1, static_cast<int>(k) + hw);
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(obs.series[k].size());
            for (int j = lo; j <= hi; ++j) acc += obs.series[static_cast<std::size_t>(j)];
            out.series[k] = acc / static_cast<double>(hi - lo + 1);
        }
    }

    if (spatial_radius > 0.0 && n > 1) {
        const int n2 = obs.face_dims[0];
        const int n3 = obs.face_dims[1];
        if (static_cast<std::size_t>(n2) * static_cast<std::size_t>(n3) != n)
            throw DataError("smooth: face dimensions do not match node count");
        const int reach = static_cast<int>(std::ceil(2.0 * spatial_radius));
        const double inv2r2 = 1.0 / (2.0 * spatial_radius * spatial_radius);

        std::vector<Eigen::VectorXd> base = out.series;
        for (std::size_t k = 0; k < levels; ++k) {
            for (int kk = 0; kk < n3; ++kk) {
                for (int jj = 0; jj < n2; ++jj) {
                    double wsum = 0.0;
                    double acc[3] = {0.0, 0.0, 0.0};
                    for (int dk = -reach; dk <= reach; ++dk) {
                        const int k2 = kk + dk;
                        if (k2 < 0 || k2 >= n3) continue;
                        for (int dj = -reach; dj <= reach; ++dj) {
                            const int j2 = jj + dj;
                            if (j2 < 0 || j2 >= n2) continue;
                            const double w = std::exp(-(dj * dj + dk * dk) * inv2r2);
                            const std::size_t src = static_cast<std::size_t>(k2) * n2 + j2;
                            wsum += w;
                            for (int c = 0; c < 3; ++c)
                                acc[c] += w * base[k][static_cast<Eigen::Index>(3 * src + c)];
                        }
                    }
                    const std::size_t dst = static_cast<std::size_t>(kk) * n2 + jj;
                    for (int c = 0; c < 3; ++c)
                        out.series[k][static_cast<Eigen::Index>(3 * dst + c)] = acc[c] / wsum;
                }
            }
        }
    }
    return out;
}

ObservationSet resample_observations(const ObservationSet& obs, double tau_new, int steps_new) {
    if (obs.series.empty()) throw DataError("resample_observations: empty series");
    if (tau_new <= 0.0 || steps_new < 1) throw ConfigError("resample_observations: bad target grid");

    const double tau_old = obs.tau;
    const int steps_old = static_cast<int>(obs.series.size()) - 1;
    const double t_end = tau_old * steps_old;

    ObservationSet out = obs;
    out.tau = tau_new;
    out.series.assign(static_cast<std::size_t>(steps_new) + 1, Eigen::VectorXd());
    for (int k = 0; k <= steps_new; ++k) {
        double t = std::min(k * tau_new, t_end);
        int j = static_cast<int>(std::floor(t / tau_old));
        if (j >= steps_old) j = steps_old - 1;
        if (j < 0) j = 0;
        const double theta = std::clamp(t / tau_old - j, 0.0, 1.0);
        out.series[static_cast<std::size_t>(k)] =
            (1.0 - theta) * obs.series[static_cast<std::size_t>(j)] +
            theta * obs.series[static_cast<std::size_t>(j) + 1];
    }
    return out;
}

} // namespace emtomo
