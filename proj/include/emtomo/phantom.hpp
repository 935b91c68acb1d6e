#ifndef EMTOMO_PHANTOM_HPP
#define EMTOMO_PHANTOM_HPP

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emtomo/geometry.hpp"

namespace emtomo {

// one tissue entry: relative permittivity, conductivity, human-readable label
struct MediaEntry {
    double eps_r = 1.0;
    double sigma = 0.0;
    std::string label;
};

// media codes are kept as exact decimal strings ("-1", "1.1", "3.2"): they are
// lookup keys, not numbers
class MediaTable {
public:
    void set(const std::string& code, MediaEntry entry);
    bool has(const std::string& code) const;
    const MediaEntry& get(const std::string& code) const; // throws DataError if absent
    const std::map<std::string, MediaEntry>& entries() const { return entries_; }

    // checks eps_r in [1, d1], sigma in [0, d2]; throws DataError on violation
    void validate(double d1, double d2) const;

private:
    std::map<std::string, MediaEntry> entries_;
};

// voxel raster of media codes, x-fastest ordering, values at lattice nodes
struct VoxelPhantom {
    std::array<int, 3> dims{0, 0, 0};   // node counts per axis
    Vec3 spacing{0, 0, 0};
    Vec3 origin{0, 0, 0};
    std::vector<std::string> codes;      // distinct media codes present
    std::vector<uint16_t> media;         // per-voxel index into codes, size nx*ny*nz

    std::size_t voxel_count() const {
        return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return std::size_t(i) + std::size_t(dims[0]) * (std::size_t(j) + std::size_t(dims[1]) * std::size_t(k));
    }
    const std::string& code_at(int i, int j, int k) const { return codes[media[index(i, j, k)]]; }

    // media code at the raster node nearest to point p (clamped to the raster)
    const std::string& code_near(const Vec3& p) const;
};

// parses only the 9-value header line; used to announce raster metadata
// (dims, spacing, origin, voxel count) before committing to a full load
struct PhantomHeader {
    std::array<int, 3> dims;
    Vec3 spacing;
    Vec3 origin;
    std::size_t voxel_count() const {
        return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
    }
};
PhantomHeader parse_phantom_header(const std::string& raster_path);

// raster file: line 1 "nx ny nz dx dy dz ox oy oz", then nx*ny*nz codes, x-fastest.
// media table file: lines "code eps_r sigma label".  '#' comments allowed in both.
std::pair<VoxelPhantom, MediaTable> load_phantom(const std::string& raster_path,
                                                 const std::string& table_path);

// point sampling at stride multiples; output dims = ceil(dim/stride)
VoxelPhantom subsample(const VoxelPhantom& phantom, int stride);

// divides every eps_r by factor, clamping at 1 (clamps are counted, not fatal)
MediaTable weight_media(const MediaTable& table, double factor);

// shipped weighted tables for the two reconstruction tests
MediaTable test1_media_table();
MediaTable test2_media_table();

} // namespace emtomo

#endif
