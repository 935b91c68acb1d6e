#ifndef EMTOMO_VTK_IO_HPP
#define EMTOMO_VTK_IO_HPP

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "emtomo/mesh.hpp"

namespace emtomo {

// legacy ASCII unstructured grid; per-element scalars plus optional nodal
// vector fields (3 values per mesh node)
void write_vtk_mesh(const std::string& path, const FeMesh& fe,
                    const std::vector<std::pair<std::string, const std::vector<double>*>>& cell_scalars,
                    const std::vector<std::pair<std::string, const Eigen::VectorXd*>>& point_vectors = {});

// legacy ASCII structured points over the full grid with one nodal vector
void write_vtk_grid(const std::string& path, const FdGrid& fd, const Eigen::VectorXd& field,
                    const std::string& name);

} // namespace emtomo

#endif
