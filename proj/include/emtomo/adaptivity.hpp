#ifndef EMTOMO_ADAPTIVITY_HPP
#define EMTOMO_ADAPTIVITY_HPP

#include <vector>

#include "emtomo/inverse.hpp"

namespace emtomo {

struct RefinementConfig {
    enum class Indicator { CoefficientSize, GradientSize };
    Indicator indicator = Indicator::CoefficientSize;
    double beta = 0.8;          // mark scores >= beta * max
    double tol_iterate = 1e-3;  // level-to-level iterate change stop
    double tol_gradient = 1e-5; // gradient-norm stop
    int max_levels = 2;
    int max_splits = 3;         // per-element bisection generations
    double cfl_safety = 0.9;
};

// score |h_K eps_K| on IN elements, zero elsewhere
std::vector<double> indicator_first(const FeMesh& fe, const std::vector<double>& eps_p0);

// score |g_K| on IN elements, zero elsewhere
std::vector<double> indicator_second(const FeMesh& fe, const std::vector<double>& g);

// elements with score >= beta * max score (ties included); empty when all
// scores vanish
std::vector<std::size_t> mark_elements(const FeMesh& fe, const std::vector<double>& score,
                                       double beta);

// child elements inherit the parent's piecewise-constant value
std::vector<double> transfer_coefficients(const std::vector<double>& coarse_values,
                                          const FeMesh& fine);

struct LevelSummary {
    int level = 0;
    std::size_t elements = 0;
    std::size_t fe_nodes = 0;
    int cgm_iterations = 0;
    double J = 0;
    double max_eps = 0;
    double contrast_error = -1;
    double seconds = 0;
    double tau = 0;
};

struct AdaptiveResult {
    HybridMesh mesh;
    std::vector<double> eps_p0;
    std::vector<IterationRecord> iterations;
    std::vector<LevelSummary> levels;
    std::string status;
};

// outer mesh-refinement loop: CGM on the current mesh, indicator, local
// bisection, coefficient transfer, new CFL timestep, repeat
AdaptiveResult adaptive_reconstruct(const HybridMesh& mesh0, const std::vector<double>& sigma0,
                                    const std::vector<double>& eps_prior0,
                                    const ObservationSet& observed, const SourceSpec& src,
                                    double T, const InversionConfig& inv,
                                    const RefinementConfig& ref,
                                    const std::vector<double>* truth0 = nullptr);

// wall-clock seconds per timestep per mesh node
double relative_time(double seconds, double n_steps, double n_nodes);

} // namespace emtomo

#endif
