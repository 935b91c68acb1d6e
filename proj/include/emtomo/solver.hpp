#ifndef EMTOMO_SOLVER_HPP
#define EMTOMO_SOLVER_HPP

#include <Eigen/Dense>
#include <vector>

#include "emtomo/fem_assembly.hpp"
#include "emtomo/mesh.hpp"

namespace emtomo {

// incident plane pulse driven through the x1-min face; after one period the
// face switches to the absorbing condition
struct SourceSpec {
    double omega = 40.0;
    double amplitude = 1.0;
    int component = 1; // driven field component

    double pulse_end() const;
};

// f(t) = A sin(omega t) inside (0, 2 pi / omega], zero elsewhere
double plane_wave(const SourceSpec& src, double t);

// transmitted-signal records on the x1-max face of the outer grid
struct ObservationSet {
    std::vector<int> nodes;      // FD grid node ids
    std::vector<Vec3> positions;
    std::vector<double> weights; // lumped surface areas
    std::array<int, 2> face_dims{0, 0}; // node counts across the face
    double tau = 0;
    std::vector<Eigen::VectorXd> series; // per time level, 3 values per node

    int steps() const { return series.empty() ? 0 : static_cast<int>(series.size()) - 1; }
    std::size_t node_count() const { return nodes.size(); }
};

ObservationSet make_observation_set(const HybridMesh& mesh, double tau);

// data-fit weight: one until `width` steps before the end, cosine taper to
// zero at the final step
double taper_weight(int k, int n_steps, int width);

struct RunOptions {
    bool record_history = true;
    bool energy_audit = false;   // unrefined mesh, unit eps only
    bool track_overlap = false;
    double blowup = 1e12;
    int taper_steps = 10;
};

struct RunResult {
    std::vector<Eigen::VectorXd> history; // FE nodal field at levels 0..N
    ObservationSet obs;                   // filled by forward runs
    std::vector<double> energy;           // stitched half-step energies
    std::vector<double> overlap_rel;      // per-step FE/FD disagreement
    Eigen::VectorXd f1_pairing;           // adjoint runs: tau * D+ lambda^0
    int steps = 0;
    double tau = 0;
    double seconds = 0;
};

// leapfrog sweep of the coupled FD/FE system from zero initial state;
// f1 (optional, FE dof vector) enters as initial velocity, E^1 = tau f1
RunResult run_forward(const HybridMesh& mesh, const AssembledOperators& ops,
                      const SourceSpec& src, double T, double tau,
                      const Eigen::VectorXd* f1 = nullptr, const RunOptions& opts = {});

// backward sweep of the transposed system driven by the data residual;
// residual.series holds raw differences (simulated - observed)
RunResult run_adjoint(const HybridMesh& mesh, const AssembledOperators& ops,
                      const SourceSpec& src, const ObservationSet& residual,
                      const RunOptions& opts = {});

// nodal value hand-off between the two meshes (exposed for tests)
void exchange_to_fd(const HybridMesh& mesh, const Eigen::VectorXd& fe, Eigen::VectorXd& fd);
void exchange_to_fe(const HybridMesh& mesh, const Eigen::VectorXd& fd, Eigen::VectorXd& fe);

// FE nodes with no coincident active grid node (strict interior), used to
// support initial-velocity data
std::vector<int> deep_interior_fe_nodes(const HybridMesh& mesh);

} // namespace emtomo

#endif
