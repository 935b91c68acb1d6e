#ifndef EMTOMO_FEM_ASSEMBLY_HPP
#define EMTOMO_FEM_ASSEMBLY_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "emtomo/mesh.hpp"
#include "emtomo/phantom.hpp"

namespace emtomo {

// physical constants; the computational domain is dimensionless with unit
// wave speed by default
struct Constants {
    double c = 1.0;
    double eps0 = 1.0;
    double mu0 = 1.0;
};

// control variables: piecewise-constant (per element) permittivity and
// conductivity, plus their nodal interpolates used inside the weak forms
struct CoefficientPair {
    std::vector<double> eps_p0;
    std::vector<double> sigma_p0;
    std::vector<double> eps_p1;
    std::vector<double> sigma_p1;
    double d1 = 10.0; // admissible eps_r upper bound
    double d2 = 2.0;  // admissible sigma upper bound

    void validate(const FeMesh& fe) const; // bounds + vacuum outside IN
};

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// lumped masses are diagonal vectors per node; stiffness blocks act on
// 3-component nodal fields with dof = 3*node + component
struct AssembledOperators {
    Eigen::VectorXd M;   // (phi_i, phi_j) row-sum lumped
    Eigen::VectorXd M2;  // (sigma/(2 eps) phi_i, phi_j) row-sum lumped
    Eigen::VectorXd M1;  // M + tau c^2 mu0 M2
    SpMat G1;            // (1/eps grad phi_i, grad phi_j), N x N scalar
    SpMat G2;            // (1/eps div(eps phi_i), div phi_j), 3N x 3N
    SpMat G3;            // (1/eps div phi_i, div phi_j), 3N x 3N
    double tau = 0;
    Constants consts;

    // c^2 (G1 x I3 + eps0 G2 - G3): the full explicit stiffness
    const SpMat& combined() const;
    // its transpose (G2 is nonsymmetric when eps varies)
    const SpMat& combined_transpose() const;

private:
    mutable SpMat S_, St_;
    mutable bool have_S_ = false, have_St_ = false;
};

// volume and constant shape-function gradients of one tetrahedron
struct ElementShape {
    double vol = 0;
    Vec3 grad[4];
};
ElementShape element_shape(const FeMesh& fe, std::size_t e);

// node value = volume-weighted average of incident element values, clamped
std::vector<double> p0_to_p1(const std::vector<double>& per_element, const FeMesh& fe,
                             double lo, double hi);

// builds both nodal interpolates from the element controls
CoefficientPair make_coefficients(const FeMesh& fe, std::vector<double> eps_p0,
                                  std::vector<double> sigma_p0, double d1 = 10.0, double d2 = 2.0);

// ground truth from a phantom: element value sampled at the tet centroid;
// OUT/OVERLAP elements pinned to vacuum
CoefficientPair sample_coefficients(const FeMesh& fe, const VoxelPhantom& phantom,
                                    const MediaTable& table, double d1 = 10.0, double d2 = 2.0);

AssembledOperators assemble(const FeMesh& fe, const CoefficientPair& coeff, double tau,
                            const Constants& consts = {});

// surface load (g_h / eps_h, phi_j) over the FE box boundary triangles;
// g given per FE node (read only on boundary nodes); result size 3N
Eigen::VectorXd boundary_load(const FeMesh& fe, const std::vector<Vec3>& g,
                              const CoefficientPair& coeff);

} // namespace emtomo

#endif
