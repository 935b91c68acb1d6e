#include "emtomo/solver.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <utility>

#include "emtomo/errors.hpp"

namespace emtomo {

namespace {

// per-axis lumped weights: spacing inside, half at the two ends
struct AxisWeights {
    std::array<std::vector<double>, 3> w;

    void build(const FdGrid& g) {
        for (int a = 0; a < 3; ++a) {
            w[a].assign(g.nodes(a), g.spacing[a]);
            w[a].front() = 0.5 * g.spacing[a];
            w[a].back() = 0.5 * g.spacing[a];
        }
    }
};

// one leapfrog update of the structured grid:
//   D+ next = 2 m curr - D- prev - tau^2 c^2 (A curr) + load
// A is the tensor-product stiffness with natural (mirror) side walls; the
// x1-max face always damps, the x1-min face damps when the flags say so
// (the drive has ended); `drive` carries tau^2 c^2 f(t) for the pulse
void fd_sweep(const FdGrid& g, const AxisWeights& aw, const Eigen::VectorXd& prev,
              const Eigen::VectorXd& curr, Eigen::VectorXd& next, double tau, double c,
              bool min_damp_plus, bool min_damp_minus, double drive, int drive_comp) {
    const int n1 = g.nodes(0), n2 = g.nodes(1), n3 = g.nodes(2);
    const std::ptrdiff_t s1 = 3, s2 = 3 * std::ptrdiff_t(n1), s3 = 3 * std::ptrdiff_t(n1) * n2;
    const double h1 = g.spacing[0], h2 = g.spacing[1], h3 = g.spacing[2];
    const double tcc = tau * tau * c * c;

    for (int k = 0; k < n3; ++k) {
        for (int j = 0; j < n2; ++j) {
            const double wjk = aw.w[1][j] * aw.w[2][k];
            for (int i = 0; i < n1; ++i) {
                const std::size_t node = g.node_index(i, j, k);
                const FdRole role = g.role[node];
                if (role == FdRole::Inactive || role == FdRole::InnerBoundary)
                    continue;
                const std::ptrdiff_t d = 3 * std::ptrdiff_t(node);
                const double m = aw.w[0][i] * wjk;
                const double t1w = m / aw.w[0][i]; // transverse area along axis 1
                const double t2w = m / aw.w[1][j];
                const double t3w = m / aw.w[2][k];

                double a_abs = (i == n1 - 1) ? t1w : 0.0;
                const double a_min = (i == 0) ? t1w : 0.0;
                const double dp = m + 0.5 * tau * c * (a_abs + (min_damp_plus ? a_min : 0.0));
                const double dm = m - 0.5 * tau * c * (a_abs + (min_damp_minus ? a_min : 0.0));

                for (int cc = 0; cc < 3; ++cc) {
                    const double u = curr[d + cc];
                    double arow;
                    if (i == 0)
                        arow = t1w * (u - curr[d + s1 + cc]) / h1;
                    else if (i == n1 - 1)
                        arow = t1w * (u - curr[d - s1 + cc]) / h1;
                    else
                        arow = t1w * (2.0 * u - curr[d - s1 + cc] - curr[d + s1 + cc]) / h1;
                    if (j == 0)
                        arow += t2w * (u - curr[d + s2 + cc]) / h2;
                    else if (j == n2 - 1)
                        arow += t2w * (u - curr[d - s2 + cc]) / h2;
                    else
                        arow += t2w * (2.0 * u - curr[d - s2 + cc] - curr[d + s2 + cc]) / h2;
                    if (k == 0)
                        arow += t3w * (u - curr[d + s3 + cc]) / h3;
                    else if (k == n3 - 1)
                        arow += t3w * (u - curr[d - s3 + cc]) / h3;
                    else
                        arow += t3w * (2.0 * u - curr[d - s3 + cc] - curr[d + s3 + cc]) / h3;

                    double numer = 2.0 * m * u - dm * prev[d + cc] - tcc * arow;
                    if (i == 0 && cc == drive_comp)
                        numer += drive * t1w;
                    next[d + cc] = numer / dp;
                }
            }
        }
    }
}

void check_finite(const Eigen::VectorXd& v, double bound, int step, const char* what) {
    const double m = v.cwiseAbs().maxCoeff();
    if (!(m < bound))
        throw NumericalError(std::string(what) + " field exceeded the blow-up bound at step " +
                             std::to_string(step));
}

// stitched diagnostic energy of the coupled system on the full lattice;
// meaningful for unrefined meshes with unit permittivity
struct EnergyAudit {
    const HybridMesh* mesh = nullptr;
    const AxisWeights* aw = nullptr;
    double c = 1.0;
    std::vector<std::size_t> fe_to_fd;
    Eigen::VectorXd ga, gb;

    void init(const HybridMesh& m, const AxisWeights& weights, double cval) {
        mesh = &m;
        aw = &weights;
        c = cval;
        const auto& g = m.fd;
        if (m.refinement_level != 0)
            throw NumericalError("energy audit requires the unrefined mesh");
        std::array<int, 3> span;
        for (int a = 0; a < 3; ++a)
            span[a] = g.fem_hi[a] - g.fem_lo[a] + 1;
        if (std::size_t(span[0]) * span[1] * span[2] != m.fe.node_count())
            throw NumericalError("energy audit requires a lattice-aligned FE mesh");
        fe_to_fd.resize(m.fe.node_count());
        std::size_t v = 0;
        for (int k = 0; k < span[2]; ++k)
            for (int j = 0; j < span[1]; ++j)
                for (int i = 0; i < span[0]; ++i, ++v)
                    fe_to_fd[v] = g.node_index(g.fem_lo[0] + i, g.fem_lo[1] + j, g.fem_lo[2] + k);
        ga.resize(3 * g.node_count());
        gb.resize(3 * g.node_count());
    }

    void stitch(const Eigen::VectorXd& fe, const Eigen::VectorXd& fd, Eigen::VectorXd& out) const {
        out.setZero();
        for (std::size_t n = 0; n < fe_to_fd.size(); ++n)
            for (int cc = 0; cc < 3; ++cc)
                out[3 * fe_to_fd[n] + cc] = fe[3 * n + cc];
        const auto& g = mesh->fd;
        for (std::size_t n = 0; n < g.node_count(); ++n)
            if (g.role[n] != FdRole::Inactive)
                for (int cc = 0; cc < 3; ++cc)
                    out[3 * n + cc] = fd[3 * n + cc];
    }

    // H^{k+1/2} = 1/2 v' M v + c^2/2 b' A a with v = (b - a)/tau
    double half_step_energy(const Eigen::VectorXd& fe_a, const Eigen::VectorXd& fd_a,
                            const Eigen::VectorXd& fe_b, const Eigen::VectorXd& fd_b, double tau) {
        stitch(fe_a, fd_a, ga);
        stitch(fe_b, fd_b, gb);
        const auto& g = mesh->fd;
        const int n1 = g.nodes(0), n2 = g.nodes(1), n3 = g.nodes(2);
        const std::ptrdiff_t s[3] = {3, 3 * std::ptrdiff_t(n1), 3 * std::ptrdiff_t(n1) * n2};

        double kinetic = 0.0, cross = 0.0;
        for (int k = 0; k < n3; ++k)
            for (int j = 0; j < n2; ++j)
                for (int i = 0; i < n1; ++i) {
                    const std::ptrdiff_t d = 3 * std::ptrdiff_t(g.node_index(i, j, k));
                    const double m = aw->w[0][i] * aw->w[1][j] * aw->w[2][k];
                    const int idx[3] = {i, j, k};
                    for (int cc = 0; cc < 3; ++cc) {
                        const double v = (gb[d + cc] - ga[d + cc]) / tau;
                        kinetic += m * v * v;
                    }
                    for (int a = 0; a < 3; ++a) {
                        if (idx[a] + 1 >= g.nodes(a))
                            continue;
                        const double tw = m / aw->w[a][idx[a]] / g.spacing[a];
                        for (int cc = 0; cc < 3; ++cc)
                            cross += tw * (ga[d + s[a] + cc] - ga[d + cc]) *
                                     (gb[d + s[a] + cc] - gb[d + cc]);
                    }
                }
        return 0.5 * kinetic + 0.5 * c * c * cross;
    }
};

Eigen::VectorXd gather_obs(const ObservationSet& obs, const Eigen::VectorXd& fd) {
    Eigen::VectorXd y(3 * obs.nodes.size());
    for (std::size_t n = 0; n < obs.nodes.size(); ++n)
        for (int cc = 0; cc < 3; ++cc)
            y[3 * n + cc] = fd[3 * std::ptrdiff_t(obs.nodes[n]) + cc];
    return y;
}

double overlap_disagreement(const HybridMesh& mesh, const Eigen::VectorXd& fe,
                            const Eigen::VectorXd& fd) {
    double diff = 0.0;
    for (const auto& [fn, gn] : mesh.classes.lattice_pairs)
        for (int cc = 0; cc < 3; ++cc)
            diff = std::max(diff, std::abs(fe[3 * std::ptrdiff_t(fn) + cc] -
                                           fd[3 * std::ptrdiff_t(gn) + cc]));
    const double scale = std::max(fd.cwiseAbs().maxCoeff(), fe.cwiseAbs().maxCoeff());
    return scale > 1e-30 ? diff / scale : 0.0;
}

// per-dof expansions of the nodal diagonals
void expand_diagonals(const AssembledOperators& ops, Eigen::ArrayXd& Md, Eigen::ArrayXd& Dp,
                      Eigen::ArrayXd& Dm) {
    const std::ptrdiff_t nn = ops.M.size();
    Md.resize(3 * nn);
    Dp.resize(3 * nn);
    Dm.resize(3 * nn);
    for (std::ptrdiff_t n = 0; n < nn; ++n) {
        const double dmn = 2.0 * ops.M[n] - ops.M1[n];
        for (int cc = 0; cc < 3; ++cc) {
            Md[3 * n + cc] = ops.M[n];
            Dp[3 * n + cc] = ops.M1[n];
            Dm[3 * n + cc] = dmn;
        }
    }
}

int step_count(double T, double tau) {
    if (!(tau > 0.0) || !(T > 0.0))
        throw ConfigError("time window and step must be positive");
    const int n = static_cast<int>(std::ceil(T / tau - 1e-12));
    if (n < 2)
        throw ConfigError("time window shorter than two steps");
    return n;
}

} // namespace

double SourceSpec::pulse_end() const { return 2.0 * std::numbers::pi / omega; }

double plane_wave(const SourceSpec& src, double t) {
    if (t <= 0.0 || t > src.pulse_end())
        return 0.0;
    return src.amplitude * std::sin(src.omega * t);
}

ObservationSet make_observation_set(const HybridMesh& mesh, double tau) {
    const auto& g = mesh.fd;
    AxisWeights aw;
    aw.build(g);
    ObservationSet obs;
    obs.tau = tau;
    obs.face_dims = {g.nodes(1), g.nodes(2)};
    const int i = g.nodes(0) - 1;
    for (int k = 0; k < g.nodes(2); ++k)
        for (int j = 0; j < g.nodes(1); ++j) {
            obs.nodes.push_back(static_cast<int>(g.node_index(i, j, k)));
            obs.positions.push_back(g.node_pos(i, j, k));
            obs.weights.push_back(aw.w[1][j] * aw.w[2][k]);
        }
    return obs;
}

double taper_weight(int k, int n_steps, int width) {
    if (width <= 0)
        return 1.0;
    const int start = n_steps - width;
    if (k <= start)
        return 1.0;
    if (k >= n_steps)
        return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * double(k - start) / double(width)));
}

void exchange_to_fd(const HybridMesh& mesh, const Eigen::VectorXd& fe, Eigen::VectorXd& fd) {
    for (const auto& [gn, fn] : mesh.classes.diamond_pairs)
        for (int cc = 0; cc < 3; ++cc)
            fd[3 * std::ptrdiff_t(gn) + cc] = fe[3 * std::ptrdiff_t(fn) + cc];
}

void exchange_to_fe(const HybridMesh& mesh, const Eigen::VectorXd& fd, Eigen::VectorXd& fe) {
    for (const auto& [fn, gn] : mesh.classes.o_pairs)
        for (int cc = 0; cc < 3; ++cc)
            fe[3 * std::ptrdiff_t(fn) + cc] = fd[3 * std::ptrdiff_t(gn) + cc];
}

std::vector<int> deep_interior_fe_nodes(const HybridMesh& mesh) {
    std::vector<char> paired(mesh.fe.node_count(), 0);
    for (const auto& [fn, gn] : mesh.classes.lattice_pairs) {
        (void)gn;
        paired[fn] = 1;
    }
    std::vector<int> out;
    for (std::size_t n = 0; n < paired.size(); ++n)
        if (!paired[n])
            out.push_back(static_cast<int>(n));
    return out;
}

RunResult run_forward(const HybridMesh& mesh, const AssembledOperators& ops,
                      const SourceSpec& src, double T, double tau, const Eigen::VectorXd* f1,
                      const RunOptions& opts) {
    const auto t_begin = std::chrono::steady_clock::now();
    const auto& g = mesh.fd;
    const double c = ops.consts.c;
    const int N = step_count(T, tau);
    const double t1 = src.pulse_end();

    AxisWeights aw;
    aw.build(g);
    Eigen::ArrayXd Md, Dp, Dm;
    expand_diagonals(ops, Md, Dp, Dm);
    const SpMat& S = ops.combined();

    Eigen::VectorXd fe_prev = Eigen::VectorXd::Zero(3 * mesh.fe.node_count());
    Eigen::VectorXd fe_curr = fe_prev, fe_next = fe_prev;
    Eigen::VectorXd fd_prev = Eigen::VectorXd::Zero(3 * g.node_count());
    Eigen::VectorXd fd_curr = fd_prev, fd_next = fd_prev;

    if (f1) {
        if (f1->size() != fe_curr.size())
            throw DataError("initial velocity does not match the FE dof count");
        fe_curr = tau * (*f1);
        for (const auto& [fn, gn] : mesh.classes.lattice_pairs)
            for (int cc = 0; cc < 3; ++cc)
                fd_curr[3 * std::ptrdiff_t(gn) + cc] = fe_curr[3 * std::ptrdiff_t(fn) + cc];
    }

    RunResult res;
    res.tau = tau;
    res.steps = N;
    res.obs = make_observation_set(mesh, tau);
    res.obs.series.reserve(N + 1);
    res.obs.series.push_back(gather_obs(res.obs, fd_prev));
    res.obs.series.push_back(gather_obs(res.obs, fd_curr));
    if (opts.record_history) {
        res.history.reserve(N + 1);
        res.history.push_back(fe_prev);
        res.history.push_back(fe_curr);
    }

    EnergyAudit audit;
    if (opts.energy_audit) {
        audit.init(mesh, aw, c);
        res.energy.push_back(audit.half_step_energy(fe_prev, fd_prev, fe_curr, fd_curr, tau));
    }

    Eigen::VectorXd stiff(fe_curr.size());
    for (int k = 1; k < N; ++k) {
        const double tk = k * tau;
        const bool min_damp = tk > t1;
        const double drive = tau * tau * c * c * plane_wave(src, tk);
        fd_sweep(g, aw, fd_prev, fd_curr, fd_next, tau, c, min_damp, min_damp, drive,
                 src.component);

        stiff.noalias() = S * fe_curr;
        fe_next.array() =
            (2.0 * Md * fe_curr.array() - Dm * fe_prev.array() - tau * tau * stiff.array()) / Dp;

        exchange_to_fd(mesh, fe_next, fd_next);
        exchange_to_fe(mesh, fd_next, fe_next);

        check_finite(fd_next, opts.blowup, k + 1, "grid");
        check_finite(fe_next, opts.blowup, k + 1, "element");

        res.obs.series.push_back(gather_obs(res.obs, fd_next));
        if (opts.record_history)
            res.history.push_back(fe_next);
        if (opts.track_overlap)
            res.overlap_rel.push_back(overlap_disagreement(mesh, fe_next, fd_next));
        if (opts.energy_audit)
            res.energy.push_back(audit.half_step_energy(fe_curr, fd_curr, fe_next, fd_next, tau));

        std::swap(fe_prev, fe_curr);
        std::swap(fe_curr, fe_next);
        std::swap(fd_prev, fd_curr);
        std::swap(fd_curr, fd_next);
    }

    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return res;
}

RunResult run_adjoint(const HybridMesh& mesh, const AssembledOperators& ops,
                      const SourceSpec& src, const ObservationSet& residual,
                      const RunOptions& opts) {
    const auto t_begin = std::chrono::steady_clock::now();
    const auto& g = mesh.fd;
    const double c = ops.consts.c;
    const int N = residual.steps();
    const double tau = residual.tau;
    if (N < 2 || !(tau > 0.0))
        throw DataError("residual series too short for the backward sweep");
    for (const auto& s : residual.series)
        if (s.size() != 3 * std::ptrdiff_t(residual.nodes.size()))
            throw DataError("residual series misaligned with its node set");
    const double t1 = src.pulse_end();

    AxisWeights aw;
    aw.build(g);
    Eigen::ArrayXd Md, Dp, Dm;
    expand_diagonals(ops, Md, Dp, Dm);
    const SpMat& St = ops.combined_transpose();
    const double w_face = aw.w[0].back();

    Eigen::VectorXd fe_next = Eigen::VectorXd::Zero(3 * mesh.fe.node_count()); // lambda^{j+1}
    Eigen::VectorXd fe_curr = fe_next, fe_prev = fe_next;                      // ^j and ^{j-1}
    Eigen::VectorXd fd_next = Eigen::VectorXd::Zero(3 * g.node_count());
    Eigen::VectorXd fd_curr = fd_next, fd_prev = fd_next;

    // terminal data: lambda^N = 0 and D+ lambda^{N-1} = w^N (the taper makes
    // w^N vanish in practice; kept for generality)
    {
        const double zN = taper_weight(N, N, opts.taper_steps);
        for (std::size_t n = 0; n < residual.nodes.size(); ++n) {
            const double a = residual.weights[n];
            const double m = a * w_face;
            const double dp = m + 0.5 * tau * c * a;
            for (int cc = 0; cc < 3; ++cc)
                fd_curr[3 * std::ptrdiff_t(residual.nodes[n]) + cc] =
                    0.5 * tau * zN * a * residual.series[N][3 * n + cc] / dp;
        }
    }

    RunResult res;
    res.tau = tau;
    res.steps = N;
    if (opts.record_history) {
        res.history.assign(N + 1, Eigen::VectorXd::Zero(3 * mesh.fe.node_count()));
    }

    Eigen::VectorXd stiff(fe_curr.size());
    for (int j = N - 1; j >= 1; --j) {
        const bool plus_flag = (j - 1) * tau > t1;
        const bool minus_flag = (j + 1) * tau > t1;
        fd_sweep(g, aw, fd_next, fd_curr, fd_prev, tau, c, plus_flag, minus_flag, 0.0, 0);

        // residual load with the trapezoid and taper weights baked in
        const double rho = (j == 0 || j == N) ? 0.5 : 1.0;
        const double zj = taper_weight(j, N, opts.taper_steps);
        if (zj != 0.0) {
            for (std::size_t n = 0; n < residual.nodes.size(); ++n) {
                const double a = residual.weights[n];
                const double m = a * w_face;
                const double dp = m + 0.5 * tau * c * a;
                const double w = rho * tau * zj * a;
                for (int cc = 0; cc < 3; ++cc)
                    fd_prev[3 * std::ptrdiff_t(residual.nodes[n]) + cc] +=
                        w * residual.series[j][3 * n + cc] / dp;
            }
        }

        stiff.noalias() = St * fe_curr;
        fe_prev.array() =
            (2.0 * Md * fe_curr.array() - Dm * fe_next.array() - tau * tau * stiff.array()) / Dp;

        exchange_to_fd(mesh, fe_prev, fd_prev);
        exchange_to_fe(mesh, fd_prev, fe_prev);

        check_finite(fd_prev, opts.blowup, j - 1, "adjoint grid");
        check_finite(fe_prev, opts.blowup, j - 1, "adjoint element");

        if (opts.record_history)
            res.history[j - 1] = fe_prev;

        std::swap(fe_next, fe_curr);
        std::swap(fe_curr, fe_prev);
        std::swap(fd_next, fd_curr);
        std::swap(fd_curr, fd_prev);
    }

    // pairing weight against an initial velocity: tau * D+ lambda^0
    res.f1_pairing = tau * (Dp * fe_curr.array()).matrix();

    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return res;
}

} // namespace emtomo
