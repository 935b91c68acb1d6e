#include "emtomo/obs_io.hpp"

#include "emtomo/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace emtomo {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_observations(const std::string& path, const ObservationSet& obs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "emtomo-observations 1\n";
    out << "tau " << fmt(obs.tau) << "\n";
    out << "face_dims " << obs.face_dims[0] << " " << obs.face_dims[1] << "\n";
    out << "nodes " << obs.nodes.size() << "\n";
    for (std::size_t i = 0; i < obs.nodes.size(); ++i) {
        out << obs.nodes[i] << " " << fmt(obs.positions[i][0]) << " " << fmt(obs.positions[i][1])
            << " " << fmt(obs.positions[i][2]) << " " << fmt(obs.weights[i]) << "\n";
    }
    out << "levels " << obs.series.size() << "\n";
    for (const Eigen::VectorXd& level : obs.series) {
        if (level.size() != static_cast<Eigen::Index>(3 * obs.nodes.size()))
            throw DataError("observation series width does not match node count");
        for (Eigen::Index j = 0; j < level.size(); ++j) {
            if (j) out << " ";
            out << fmt(level[j]);
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed on '" + path + "'");
}

ObservationSet read_observations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "emtomo-observations" || version != 1)
        throw DataError("'" + path + "' is not an observation archive");

    ObservationSet obs;
    std::string key;
    if (!(in >> key >> obs.tau) || key != "tau") throw DataError(path + ": expected tau line");
    if (!(in >> key >> obs.face_dims[0] >> obs.face_dims[1]) || key != "face_dims")
        throw DataError(path + ": expected face_dims line");

    std::size_t n = 0;
    if (!(in >> key >> n) || key != "nodes") throw DataError(path + ": expected node count");
    obs.nodes.resize(n);
    obs.positions.resize(n);
    obs.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> obs.nodes[i] >> obs.positions[i][0] >> obs.positions[i][1] >>
              obs.positions[i][2] >> obs.weights[i]))
            throw DataError(path + ": truncated node table");
    }

    std::size_t levels = 0;
    if (!(in >> key >> levels) || key != "levels") throw DataError(path + ": expected level count");
    obs.series.assign(levels, Eigen::VectorXd(static_cast<Eigen::Index>(3 * n)));
    for (std::size_t k = 0; k < levels; ++k)
        for (Eigen::Index j = 0; j < obs.series[k].size(); ++j)
            if (!(in >> obs.series[k][j])) throw DataError(path + ": truncated series");
    return obs;
}

} // namespace emtomo
