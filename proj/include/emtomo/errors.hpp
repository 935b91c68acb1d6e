#ifndef EMTOMO_ERRORS_HPP
#define EMTOMO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace emtomo {

// thrown for malformed input files, inconsistent headers, out-of-range values
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// thrown for bad geometry: misaligned boxes, degenerate elements, broken conformity
class MeshError : public std::runtime_error {
public:
    explicit MeshError(const std::string& msg) : std::runtime_error(msg) {}
};

// thrown when a time stepping run turns unstable (NaN or runaway field growth)
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// thrown for unusable configuration (missing keys, unparsable values)
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace emtomo

#endif
