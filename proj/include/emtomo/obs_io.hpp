#ifndef EMTOMO_OBS_IO_HPP
#define EMTOMO_OBS_IO_HPP

#include <string>

#include "emtomo/solver.hpp"

namespace emtomo {

// plain-text observation archive; values printed with %.17g so a write/read
// cycle reproduces every double bit for bit
void write_observations(const std::string& path, const ObservationSet& obs);
ObservationSet read_observations(const std::string& path);

} // namespace emtomo

#endif
