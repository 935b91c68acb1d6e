#include "emtomo/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "emtomo/errors.hpp"
#include "emtomo/quad_rules.hpp"

namespace emtomo {

namespace {

void check_aligned(const ObservationSet& a, const ObservationSet& b) {
    if (a.nodes != b.nodes)
        throw DataError("observation series recorded on different node sets");
    if (a.series.size() != b.series.size())
        throw DataError("observation series of different lengths");
    if (std::abs(a.tau - b.tau) > 1e-12 * std::max(a.tau, b.tau))
        throw DataError("observation series with different timesteps");
}

} // namespace

double tikhonov_misfit(const ObservationSet& simulated, const ObservationSet& observed,
                       int taper_steps) {
    check_aligned(simulated, observed);
    const int N = simulated.steps();
    const double tau = simulated.tau;
    double J = 0.0;
    for (int k = 0; k <= N; ++k) {
        const double rho = (k == 0 || k == N) ? 0.5 : 1.0;
        const double z = taper_weight(k, N, taper_steps);
        if (z == 0.0)
            continue;
        double layer = 0.0;
        const Eigen::VectorXd& ys = simulated.series[k];
        const Eigen::VectorXd& yo = observed.series[k];
        for (std::size_t n = 0; n < simulated.nodes.size(); ++n) {
            double q = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double r = ys[3 * n + c] - yo[3 * n + c];
                q += r * r;
            }
            layer += simulated.weights[n] * q;
        }
        J += rho * tau * z * layer;
    }
    return 0.5 * J;
}

double tikhonov(const ObservationSet& simulated, const ObservationSet& observed, const FeMesh& fe,
                const std::vector<double>& eps_p0, const std::vector<double>& eps_prior,
                double gamma, int taper_steps) {
    if (eps_p0.size() != fe.element_count() || eps_prior.size() != fe.element_count())
        throw DataError("coefficient arrays do not match the element count");
    double J = tikhonov_misfit(simulated, observed, taper_steps);
    if (gamma != 0.0) {
        double reg = 0.0;
        for (std::size_t e = 0; e < fe.element_count(); ++e) {
            if (fe.element_region[e] != Region::IN)
                continue;
            const double d = eps_p0[e] - eps_prior[e];
            reg += fe.element_volume(e) * d * d;
        }
        J += 0.5 * gamma * reg;
    }
    return J;
}

std::vector<double> gradient(const HybridMesh& mesh, const RunResult& forward,
                             const RunResult& adjoint, const std::vector<double>& eps_p0,
                             const std::vector<double>& sigma_p0,
                             const std::vector<double>& eps_prior, double gamma,
                             const Constants& consts, const Eigen::VectorXd* f1) {
    (void)f1; // the first-step velocity is a fixed datum
    const FeMesh& fe = mesh.fe;
    if (forward.history.size() != adjoint.history.size() || forward.history.size() < 3)
        throw DataError("forward and adjoint traces are not time-aligned");
    if (eps_p0.size() != fe.element_count() || eps_prior.size() != fe.element_count() ||
        sigma_p0.size() != fe.element_count())
        throw DataError("coefficient arrays do not match the element count");
    const int N = static_cast<int>(forward.history.size()) - 1;
    const double tau = forward.tau;
    const double cc = consts.c * consts.c;

    // nodal interpolants as assembled; the clamps cannot bind for admissible
    // cell values, so the averaging stays linear
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> eps_p1 = p0_to_p1(eps_p0, fe, 1.0, inf);
    const std::vector<double> sig_p1 = p0_to_p1(sigma_p0, fe, 0.0, inf);

    std::vector<double> ring(fe.node_count(), 0.0); // cell-to-node weight denominators
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        const double v = fe.element_volume(static_cast<int>(e));
        for (int a = 0; a < 4; ++a)
            ring[fe.tets[e][a]] += v;
    }

    // sensitivities are needed at the vertices of IN elements, and every
    // element of a vertex ring feeds its nodes
    std::vector<char> wanted(fe.node_count(), 0);
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN)
            for (int a = 0; a < 4; ++a)
                wanted[fe.tets[e][a]] = 1;
    std::vector<std::size_t> active;
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        for (int a = 0; a < 4; ++a)
            if (wanted[fe.tets[e][a]]) {
                active.push_back(e);
                break;
            }

    struct ElemAcc {
        ElementShape shape;
        double en[4], sn[4];
        bool damped = false;
        double t1 = 0;       // sum_k sum_c grad(lam_c) . grad(E_c)
        double t3 = 0;       // sum_k div(lam) div(E)
        double z[4][3] = {}; // sum_k div(lam) E at the local dof
        double b[4] = {};    // sum_k lam . (E^{k+1} - E^{k-1}) at the local node
    };
    std::vector<ElemAcc> acc(active.size());
    for (std::size_t w = 0; w < active.size(); ++w) {
        ElemAcc& A = acc[w];
        A.shape = element_shape(fe, active[w]);
        for (int a = 0; a < 4; ++a) {
            A.en[a] = eps_p1[fe.tets[active[w]][a]];
            A.sn[a] = sig_p1[fe.tets[active[w]][a]];
            if (A.sn[a] != 0.0)
                A.damped = true;
        }
    }

    // the terminal multiplier levels are zero (the misfit taper ends at zero
    // and the last load lives on the grid side), so k runs over the interior
    for (int k = 1; k <= N - 1; ++k) {
        const Eigen::VectorXd& E = forward.history[k];
        const Eigen::VectorXd& L = adjoint.history[k];
        const Eigen::VectorXd& Ep = forward.history[k + 1];
        const Eigen::VectorXd& Em = forward.history[k - 1];
        for (std::size_t w = 0; w < active.size(); ++w) {
            ElemAcc& A = acc[w];
            const auto& t = fe.tets[active[w]];
            const auto& gr = A.shape.grad;
            double divE = 0.0, divL = 0.0, t1 = 0.0;
            for (int c = 0; c < 3; ++c) {
                double ge[3] = {0, 0, 0}, gl[3] = {0, 0, 0};
                for (int a = 0; a < 4; ++a) {
                    const double ea = E[3 * t[a] + c];
                    const double la = L[3 * t[a] + c];
                    for (int d = 0; d < 3; ++d) {
                        ge[d] += ea * gr[a][d];
                        gl[d] += la * gr[a][d];
                    }
                    divE += ea * gr[a][c];
                    divL += la * gr[a][c];
                }
                t1 += ge[0] * gl[0] + ge[1] * gl[1] + ge[2] * gl[2];
            }
            A.t1 += t1;
            A.t3 += divL * divE;
            for (int b = 0; b < 4; ++b)
                for (int d = 0; d < 3; ++d)
                    A.z[b][d] += divL * E[3 * t[b] + d];
            if (A.damped)
                for (int a = 0; a < 4; ++a)
                    for (int c = 0; c < 3; ++c)
                        A.b[a] += L[3 * t[a] + c] * (Ep[3 * t[a] + c] - Em[3 * t[a] + c]);
        }
    }

    // differentiate the assembled stiffness and damping quadratures in the
    // nodal values, then push through the cell-to-node averaging
    std::vector<double> s(fe.node_count(), 0.0);
    for (std::size_t w = 0; w < active.size(); ++w) {
        const ElemAcc& A = acc[w];
        const auto& t = fe.tets[active[w]];
        const auto& gr = A.shape.grad;
        double geps[3] = {0, 0, 0};
        for (int a = 0; a < 4; ++a)
            for (int d = 0; d < 3; ++d)
                geps[d] += A.en[a] * gr[a][d];
        double chi[4] = {0, 0, 0, 0};
        for (int q = 0; q < 5; ++q) {
            double eq = 0.0;
            for (int a = 0; a < 4; ++a)
                eq += quad::kCub5Pts[q][a] * A.en[a];
            const double wq = quad::kCub5W[q] * A.shape.vol;
            double Y[3] = {0, 0, 0};
            for (int b = 0; b < 4; ++b)
                for (int d = 0; d < 3; ++d)
                    Y[d] += quad::kCub5Pts[q][b] * A.z[b][d];
            const double core =
                A.t1 - A.t3 +
                consts.eps0 * (Y[0] * geps[0] + Y[1] * geps[1] + Y[2] * geps[2]);
            for (int m = 0; m < 4; ++m) {
                const double yg = Y[0] * gr[m][0] + Y[1] * gr[m][1] + Y[2] * gr[m][2];
                chi[m] += wq * (consts.eps0 * yg / eq - quad::kCub5Pts[q][m] / (eq * eq) * core);
            }
        }
        for (int m = 0; m < 4; ++m)
            chi[m] *= tau * tau * cc;
        if (A.damped) {
            for (int q = 0; q < 4; ++q) {
                double eq = 0.0, sq = 0.0;
                for (int a = 0; a < 4; ++a) {
                    eq += quad::kPos4Pts[q][a] * A.en[a];
                    sq += quad::kPos4Pts[q][a] * A.sn[a];
                }
                const double wq = quad::kPos4W * A.shape.vol;
                double pair = 0.0;
                for (int a = 0; a < 4; ++a)
                    pair += quad::kPos4Pts[q][a] * A.b[a];
                for (int m = 0; m < 4; ++m)
                    chi[m] -= tau * cc * consts.mu0 * wq * quad::kPos4Pts[q][m] * sq /
                              (2.0 * eq * eq) * pair;
            }
        }
        for (int m = 0; m < 4; ++m)
            if (wanted[t[m]])
                s[t[m]] += chi[m];
    }

    // the multiplier convention flips the sign of the state pairing
    std::vector<double> g(fe.element_count(), 0.0);
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        if (fe.element_region[e] != Region::IN)
            continue;
        double val = 0.0;
        for (int a = 0; a < 4; ++a) {
            const int n = fe.tets[e][a];
            val -= s[n] / ring[n];
        }
        g[e] = val + gamma * (eps_p0[e] - eps_prior[e]);
    }
    return g;
}

std::vector<double> project_admissible(const FeMesh& fe, std::vector<double> eps_p0, double d1) {
    if (eps_p0.size() != fe.element_count())
        throw DataError("coefficient array does not match the element count");
    for (std::size_t e = 0; e < eps_p0.size(); ++e) {
        if (fe.element_region[e] != Region::IN)
            eps_p0[e] = 1.0;
        else
            eps_p0[e] = std::clamp(eps_p0[e], 1.0, d1);
    }
    return eps_p0;
}

double in_norm(const FeMesh& fe, const std::vector<double>& per_element) {
    double s = 0.0;
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN)
            s += fe.element_volume(e) * per_element[e] * per_element[e];
    return std::sqrt(s);
}

double contrast_error(const FeMesh& fe, const std::vector<double>& eps_p0,
                      const std::vector<double>& truth) {
    double mr = 0.0, mt = 0.0;
    for (std::size_t e = 0; e < fe.element_count(); ++e) {
        if (fe.element_region[e] != Region::IN)
            continue;
        mr = std::max(mr, eps_p0[e]);
        mt = std::max(mt, truth[e]);
    }
    if (mt <= 0.0)
        throw DataError("truth table has no positive permittivity");
    return std::abs(mr - mt) / mt;
}

namespace {

double in_dot(const FeMesh& fe, const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN)
            s += fe.element_volume(e) * a[e] * b[e];
    return s;
}

double max_in(const FeMesh& fe, const std::vector<double>& v) {
    double m = 0.0;
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN)
            m = std::max(m, v[e]);
    return m;
}

double max_abs_in(const FeMesh& fe, const std::vector<double>& v) {
    double m = 0.0;
    for (std::size_t e = 0; e < fe.element_count(); ++e)
        if (fe.element_region[e] == Region::IN)
            m = std::max(m, std::abs(v[e]));
    return m;
}

} // namespace

CgmResult cgm_minimize(const HybridMesh& mesh, const std::vector<double>& sigma_p0,
                       std::vector<double> eps_start, const std::vector<double>& eps_prior,
                       const ObservationSet& observed, const SourceSpec& src, double T,
                       double tau, const InversionConfig& cfg, const std::vector<double>* truth,
                       int level) {
    const FeMesh& fe = mesh.fe;
    CgmResult out;

    RunOptions light;
    light.record_history = false;
    light.taper_steps = cfg.taper_steps;
    RunOptions full;
    full.record_history = true;
    full.taper_steps = cfg.taper_steps;

    auto simulate = [&](const std::vector<double>& eps, bool with_history) {
        CoefficientPair coeff = make_coefficients(fe, eps, sigma_p0, cfg.d1, cfg.d2);
        AssembledOperators ops = assemble(fe, coeff, tau, cfg.consts);
        return run_forward(mesh, ops, src, T, tau, nullptr, with_history ? full : light);
    };
    auto functional = [&](const RunResult& run, const std::vector<double>& eps) {
        return tikhonov(run.obs, observed, fe, eps, eps_prior, cfg.gamma, cfg.taper_steps);
    };

    std::vector<double> eps = project_admissible(fe, std::move(eps_start), cfg.d1);
    RunResult fwd = simulate(eps, true);
    double J = functional(fwd, eps);

    auto compute_gradient = [&](const RunResult& run, const std::vector<double>& e) {
        ObservationSet residual = run.obs;
        for (std::size_t k = 0; k < residual.series.size(); ++k)
            residual.series[k] -= observed.series[k];
        CoefficientPair coeff = make_coefficients(fe, e, sigma_p0, cfg.d1, cfg.d2);
        AssembledOperators ops = assemble(fe, coeff, tau, cfg.consts);
        RunResult adj = run_adjoint(mesh, ops, src, residual, full);
        return gradient(mesh, run, adj, e, sigma_p0, eps_prior, cfg.gamma, cfg.consts);
    };

    std::vector<double> g = compute_gradient(fwd, eps);
    double gnorm = in_norm(fe, g);
    std::vector<double> d(fe.element_count(), 0.0);
    double gnorm_prev = 0.0;
    double eps_norm_prev = in_norm(fe, eps);
    out.status = "max-iterations";

    for (int m = 0; m < cfg.max_iterations; ++m) {
        IterationRecord rec;
        rec.level = level;
        rec.iteration = m;
        rec.J = J;
        rec.gnorm = gnorm;
        rec.max_eps = max_in(fe, eps);
        rec.contrast_error = truth ? contrast_error(fe, eps, *truth) : -1.0;

        if (gnorm <= cfg.theta) {
            rec.alpha = 0;
            rec.beta = 0;
            out.history.push_back(rec);
            out.status = "gradient-converged";
            break;
        }

        double beta = 0.0;
        if (m == 0 || (cfg.restart_every > 0 && m % cfg.restart_every == 0)) {
            for (std::size_t e = 0; e < d.size(); ++e)
                d[e] = -g[e];
        } else {
            beta = (gnorm * gnorm) / (gnorm_prev * gnorm_prev);
            for (std::size_t e = 0; e < d.size(); ++e)
                d[e] = -g[e] + beta * d[e];
            if (in_dot(fe, d, g) >= 0.0) { // lost descent, reset
                beta = 0.0;
                for (std::size_t e = 0; e < d.size(); ++e)
                    d[e] = -g[e];
            }
        }
        rec.beta = beta;

        // Armijo backtracking on the projected iterate; the direction is
        // max-normalized over IN so alpha is a permittivity increment
        const double dmax = max_abs_in(fe, d);
        if (dmax == 0.0) {
            rec.alpha = 0;
            out.history.push_back(rec);
            out.status = "gradient-converged";
            break;
        }
        double alpha = cfg.alpha0;
        bool accepted = false;
        std::vector<double> trial;
        RunResult trial_run;
        double J_trial = 0.0;
        for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
            trial = eps;
            for (std::size_t e = 0; e < trial.size(); ++e)
                trial[e] += (alpha / dmax) * d[e];
            trial = project_admissible(fe, std::move(trial), cfg.d1);
            std::vector<double> step(trial.size());
            for (std::size_t e = 0; e < trial.size(); ++e)
                step[e] = trial[e] - eps[e];
            const double decrease = in_dot(fe, g, step);
            trial_run = simulate(trial, true);
            J_trial = functional(trial_run, trial);
            if (J_trial <= J + cfg.armijo_c1 * decrease && decrease < 0.0) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            rec.alpha = 0;
            out.history.push_back(rec);
            out.status = "line-search-failed";
            break;
        }
        rec.alpha = alpha;
        out.history.push_back(rec);

        eps = std::move(trial);
        fwd = std::move(trial_run);
        J = J_trial;
        gnorm_prev = gnorm;
        g = compute_gradient(fwd, eps);
        gnorm = in_norm(fe, g);

        const double eps_norm = in_norm(fe, eps);
        if (std::abs(eps_norm - eps_norm_prev) / std::max(eps_norm, 1e-30) < cfg.stabilize_tol) {
            IterationRecord fin;
            fin.level = level;
            fin.iteration = m + 1;
            fin.J = J;
            fin.gnorm = gnorm;
            fin.max_eps = max_in(fe, eps);
            fin.contrast_error = truth ? contrast_error(fe, eps, *truth) : -1.0;
            out.history.push_back(fin);
            out.status = "iterate-stabilized";
            break;
        }
        eps_norm_prev = eps_norm;
    }

    out.eps_p0 = std::move(eps);
    out.final_gradient = std::move(g);
    out.J = J;
    return out;
}

void write_convergence_csv(const std::string& path, const std::vector<IterationRecord>& records,
                           bool append) {
    std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
    if (!f)
        throw DataError("cannot open " + path + " for writing");
    if (!append)
        f << "level,iteration,J,gnorm,alpha,beta,max_eps,contrast_error\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,", r.level,
                      r.iteration, r.J, r.gnorm, r.alpha, r.beta, r.max_eps);
        f << buf;
        if (r.contrast_error < 0)
            f << "n/a\n";
        else {
            std::snprintf(buf, sizeof buf, "%.17g\n", r.contrast_error);
            f << buf;
        }
    }
}

} // namespace emtomo
