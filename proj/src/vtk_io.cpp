#include "emtomo/vtk_io.hpp"

#include "emtomo/errors.hpp"

#include <cstdio>
#include <fstream>

namespace emtomo {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_vtk_mesh(const std::string& path, const FeMesh& fe,
                    const std::vector<std::pair<std::string, const std::vector<double>*>>& cell_scalars,
                    const std::vector<std::pair<std::string, const Eigen::VectorXd*>>& point_vectors) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");

    out << "# vtk DataFile Version 3.0\n";
    out << "emtomo finite element mesh\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << fe.node_count() << " double\n";
    for (const Vec3& v : fe.vertices)
        out << fmt(v[0]) << " " << fmt(v[1]) << " " << fmt(v[2]) << "\n";

    out << "CELLS " << fe.element_count() << " " << 5 * fe.element_count() << "\n";
    for (const auto& t : fe.tets)
        out << "4 " << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
    out << "CELL_TYPES " << fe.element_count() << "\n";
    for (std::size_t e = 0; e < fe.element_count(); ++e) out << "10\n";

    if (!cell_scalars.empty()) {
        out << "CELL_DATA " << fe.element_count() << "\n";
        for (const auto& [name, values] : cell_scalars) {
            if (!values || values->size() != fe.element_count())
                throw DataError("cell field '" + name + "' does not match element count");
            out << "SCALARS " << name << " double 1\n";
            out << "LOOKUP_TABLE default\n";
            for (double v : *values) out << fmt(v) << "\n";
        }
    }

    if (!point_vectors.empty()) {
        out << "POINT_DATA " << fe.node_count() << "\n";
        for (const auto& [name, field] : point_vectors) {
            if (!field || field->size() != static_cast<Eigen::Index>(3 * fe.node_count()))
                throw DataError("point field '" + name + "' does not match node count");
            out << "VECTORS " << name << " double\n";
            for (std::size_t n = 0; n < fe.node_count(); ++n)
                out << fmt((*field)[3 * n]) << " " << fmt((*field)[3 * n + 1]) << " "
                    << fmt((*field)[3 * n + 2]) << "\n";
        }
    }
    if (!out) throw DataError("write failed on '" + path + "'");
}

void write_vtk_grid(const std::string& path, const FdGrid& fd, const Eigen::VectorXd& field,
                    const std::string& name) {
    if (field.size() != static_cast<Eigen::Index>(3 * fd.node_count()))
        throw DataError("grid field '" + name + "' does not match node count");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");

    out << "# vtk DataFile Version 3.0\n";
    out << "emtomo grid field\n";
    out << "ASCII\n";
    out << "DATASET STRUCTURED_POINTS\n";
    out << "DIMENSIONS " << fd.nodes(0) << " " << fd.nodes(1) << " " << fd.nodes(2) << "\n";
    out << "ORIGIN " << fmt(fd.origin[0]) << " " << fmt(fd.origin[1]) << " " << fmt(fd.origin[2])
        << "\n";
    out << "SPACING " << fmt(fd.spacing[0]) << " " << fmt(fd.spacing[1]) << " "
        << fmt(fd.spacing[2]) << "\n";
    out << "POINT_DATA " << fd.node_count() << "\n";
    out << "VECTORS " << name << " double\n";
    for (std::size_t n = 0; n < fd.node_count(); ++n)
        out << fmt(field[3 * n]) << " " << fmt(field[3 * n + 1]) << " " << fmt(field[3 * n + 2])
            << "\n";
    if (!out) throw DataError("write failed on '" + path + "'");
}

} // namespace emtomo
