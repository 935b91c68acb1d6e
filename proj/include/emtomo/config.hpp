#ifndef EMTOMO_CONFIG_HPP
#define EMTOMO_CONFIG_HPP

#include <map>
#include <string>

#include "emtomo/geometry.hpp"

namespace emtomo {

// flat key = value file; '#' starts a comment, blank lines ignored
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    Vec3 get_vec3(const std::string& key, const Vec3& fallback) const;

    std::string require_string(const std::string& key) const;
    double require_double(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

} // namespace emtomo

#endif
