#ifndef EMTOMO_INVERSE_HPP
#define EMTOMO_INVERSE_HPP

#include <string>
#include <vector>

#include "emtomo/solver.hpp"

namespace emtomo {

struct InversionConfig {
    double gamma = 1e-5;        // regularization weight
    double theta = 1e-5;        // gradient-norm stopping tolerance
    double alpha0 = 0.1;        // initial step, applied to the max-normalized direction
    double armijo_c1 = 1e-4;
    int max_backtracks = 20;
    int max_iterations = 25;
    int restart_every = 10;     // conjugate direction reset period
    double stabilize_tol = 1e-4; // relative iterate-norm change stop
    double d1 = 10.0;           // admissible permittivity upper bound
    double d2 = 2.0;            // conductivity bound (pass-through)
    int taper_steps = 10;
    Constants consts;
};

struct IterationRecord {
    int level = 0;
    int iteration = 0;
    double J = 0;
    double gnorm = 0;
    double alpha = 0;
    double beta = 0;
    double max_eps = 0;
    double contrast_error = -1; // negative when no truth was supplied
};

// data-fit part: 1/2 sum_k rho_k tau z_k sum_n a_n |y - y~|^2
double tikhonov_misfit(const ObservationSet& simulated, const ObservationSet& observed,
                       int taper_steps);

// misfit plus 1/2 gamma sum_K |K| (eps_K - eps0_K)^2 over IN elements
double tikhonov(const ObservationSet& simulated, const ObservationSet& observed,
                const FeMesh& fe, const std::vector<double>& eps_p0,
                const std::vector<double>& eps_prior, double gamma, int taper_steps);

// per-element derivative of the Tikhonov functional with respect to the cell
// permittivity, paired from stored forward/adjoint traces through the exact
// dependence of the assembled operators on the coefficient; zero outside IN.
// sigma enters through the damping mass, f1 is accepted for callers that
// drive the forward run with an initial velocity (it carries no coefficient
// dependence of its own)
std::vector<double> gradient(const HybridMesh& mesh, const RunResult& forward,
                             const RunResult& adjoint, const std::vector<double>& eps_p0,
                             const std::vector<double>& sigma_p0,
                             const std::vector<double>& eps_prior, double gamma,
                             const Constants& consts, const Eigen::VectorXd* f1 = nullptr);

// clamp to [1, d1]; elements outside IN pinned to 1
std::vector<double> project_admissible(const FeMesh& fe, std::vector<double> eps_p0,
                                       double d1 = 10.0);

// volume-weighted L2 over IN elements (the norm of the stopping rules)
double in_norm(const FeMesh& fe, const std::vector<double>& per_element);

struct CgmResult {
    std::vector<double> eps_p0;
    std::vector<double> final_gradient;
    std::vector<IterationRecord> history;
    std::string status;
    double J = 0;
};

// projected conjugate-gradient descent on the Tikhonov functional; sigma is
// held fixed (known), truth (optional) only feeds the error column
CgmResult cgm_minimize(const HybridMesh& mesh, const std::vector<double>& sigma_p0,
                       std::vector<double> eps_start, const std::vector<double>& eps_prior,
                       const ObservationSet& observed, const SourceSpec& src, double T,
                       double tau, const InversionConfig& cfg,
                       const std::vector<double>* truth = nullptr, int level = 0);

// iteration, J, |g|, alpha, beta, max eps, contrast error ("n/a" without truth)
void write_convergence_csv(const std::string& path, const std::vector<IterationRecord>& records,
                           bool append);

// |max eps - max truth| / max truth over IN elements
double contrast_error(const FeMesh& fe, const std::vector<double>& eps_p0,
                      const std::vector<double>& truth);

} // namespace emtomo

#endif
