#include "emtomo/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "emtomo/errors.hpp"

namespace emtomo {

void MediaTable::set(const std::string& code, MediaEntry entry) { entries_[code] = std::move(entry); }

bool MediaTable::has(const std::string& code) const { return entries_.count(code) != 0; }

const MediaEntry& MediaTable::get(const std::string& code) const {
    auto it = entries_.find(code);
    if (it == entries_.end()) throw DataError("unknown media code: " + code);
    return it->second;
}

void MediaTable::validate(double d1, double d2) const {
    for (const auto& [code, e] : entries_) {
        if (e.eps_r < 1.0 || e.eps_r > d1)
            throw DataError("media " + code + ": eps_r " + std::to_string(e.eps_r) +
                            " outside [1, " + std::to_string(d1) + "]");
        if (e.sigma < 0.0 || e.sigma > d2)
            throw DataError("media " + code + ": sigma " + std::to_string(e.sigma) +
                            " outside [0, " + std::to_string(d2) + "]");
    }
}

const std::string& VoxelPhantom::code_near(const Vec3& p) const {
    int idx[3];
    for (int d = 0; d < 3; ++d) {
        int i = int(std::lround((p[d] - origin[d]) / spacing[d]));
        idx[d] = std::clamp(i, 0, dims[d] - 1);
    }
    return code_at(idx[0], idx[1], idx[2]);
}

namespace {

// strips '#' comments, returns stream over remaining tokens
std::string strip_comments(std::istream& in) {
    std::string out, line;
    while (std::getline(in, line)) {
        auto pos = line.find('#');
        if (pos != std::string::npos) line.erase(pos);
        out += line;
        out += '\n';
    }
    return out;
}

} // namespace

PhantomHeader parse_phantom_header(const std::string& raster_path) {
    std::ifstream f(raster_path);
    if (!f) throw DataError("cannot open phantom raster: " + raster_path);
    std::string text = strip_comments(f);
    std::istringstream in(text);
    PhantomHeader h{};
    if (!(in >> h.dims[0] >> h.dims[1] >> h.dims[2] >> h.spacing[0] >> h.spacing[1] >> h.spacing[2] >>
          h.origin[0] >> h.origin[1] >> h.origin[2]))
        throw DataError("malformed phantom header in " + raster_path);
    for (int d = 0; d < 3; ++d) {
        if (h.dims[d] <= 0) throw DataError("phantom dims must be positive");
        if (h.spacing[d] <= 0) throw DataError("phantom spacing must be positive");
    }
    return h;
}

std::pair<VoxelPhantom, MediaTable> load_phantom(const std::string& raster_path,
                                                 const std::string& table_path) {
    MediaTable table;
    {
        std::ifstream f(table_path);
        if (!f) throw DataError("cannot open media table: " + table_path);
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            auto pos = line.find('#');
            if (pos != std::string::npos) line.erase(pos);
            std::istringstream in(line);
            std::string code;
            if (!(in >> code)) continue; // blank line
            MediaEntry e;
            if (!(in >> e.eps_r >> e.sigma))
                throw DataError(table_path + ":" + std::to_string(lineno) + ": malformed media entry");
            std::getline(in, e.label);
            auto first = e.label.find_first_not_of(" \t");
            e.label = first == std::string::npos ? "" : e.label.substr(first);
            table.set(code, std::move(e));
        }
        if (table.entries().empty()) throw DataError("media table is empty: " + table_path);
    }

    std::ifstream f(raster_path);
    if (!f) throw DataError("cannot open phantom raster: " + raster_path);
    std::string text = strip_comments(f);
    std::istringstream in(text);

    VoxelPhantom p;
    if (!(in >> p.dims[0] >> p.dims[1] >> p.dims[2] >> p.spacing[0] >> p.spacing[1] >> p.spacing[2] >>
          p.origin[0] >> p.origin[1] >> p.origin[2]))
        throw DataError("malformed phantom header in " + raster_path);
    for (int d = 0; d < 3; ++d) {
        if (p.dims[d] <= 0) throw DataError("phantom dims must be positive");
        if (p.spacing[d] <= 0) throw DataError("phantom spacing must be positive");
    }

    const std::size_t n = p.voxel_count();
    std::cout << "phantom " << raster_path << ": " << p.dims[0] << "x" << p.dims[1] << "x" << p.dims[2]
              << " = " << n << " voxels\n";

    p.media.resize(n);
    std::unordered_map<std::string, uint16_t> code_ids;
    std::string tok;
    for (std::size_t v = 0; v < n; ++v) {
        if (!(in >> tok))
            throw DataError(raster_path + ": media count mismatch, expected " + std::to_string(n) +
                            " values, got " + std::to_string(v));
        auto it = code_ids.find(tok);
        if (it == code_ids.end()) {
            if (!table.has(tok)) throw DataError("unknown media code: " + tok);
            if (p.codes.size() >= 65535) throw DataError("too many distinct media codes");
            it = code_ids.emplace(tok, uint16_t(p.codes.size())).first;
            p.codes.push_back(tok);
        }
        p.media[v] = it->second;
    }
    if (in >> tok)
        throw DataError(raster_path + ": trailing data after " + std::to_string(n) + " media values");
    return {std::move(p), std::move(table)};
}

VoxelPhantom subsample(const VoxelPhantom& phantom, int stride) {
    if (stride < 1) throw DataError("subsample stride must be >= 1");
    for (int d = 0; d < 3; ++d)
        if (stride >= phantom.dims[d] && phantom.dims[d] > 1)
            throw DataError("subsample stride " + std::to_string(stride) + " >= dim " +
                            std::to_string(phantom.dims[d]));
    if (stride == 1) return phantom;

    VoxelPhantom out;
    for (int d = 0; d < 3; ++d) {
        out.dims[d] = (phantom.dims[d] + stride - 1) / stride;
        out.spacing[d] = phantom.spacing[d] * stride;
    }
    out.origin = phantom.origin;
    out.codes = phantom.codes;
    out.media.resize(out.voxel_count());
    for (int k = 0; k < out.dims[2]; ++k)
        for (int j = 0; j < out.dims[1]; ++j)
            for (int i = 0; i < out.dims[0]; ++i)
                out.media[out.index(i, j, k)] = phantom.media[phantom.index(i * stride, j * stride, k * stride)];
    return out;
}

MediaTable weight_media(const MediaTable& table, double factor) {
    if (factor <= 0) throw DataError("weight factor must be positive");
    MediaTable out;
    int clamped = 0;
    for (const auto& [code, e] : table.entries()) {
        MediaEntry w = e;
        w.eps_r = e.eps_r / factor;
        if (w.eps_r < 1.0) {
            w.eps_r = 1.0;
            ++clamped;
        }
        out.set(code, std::move(w));
    }
    if (clamped > 0) std::cout << "weight_media: clamped " << clamped << " eps_r values to 1\n";
    return out;
}

namespace {

MediaTable base_table(bool test1) {
    // weighted tissue values; vacuum-like entries share eps_r = 1, sigma = 0
    MediaTable t;
    t.set("-1", {1, 0, "immersion medium"});
    t.set("-2", {1, 0, "skin"});
    t.set("-4", {1, 0, "muscle"});
    t.set("1.1", {9, 1.2, "fibroconnective/glandular-1"});
    t.set("1.2", test1 ? MediaEntry{8, 1, "fibroconnective/glandular-2"}
                       : MediaEntry{1, 0, "fibroconnective/glandular-2"});
    t.set("1.3", test1 ? MediaEntry{8, 1, "fibroconnective/glandular-3"}
                       : MediaEntry{1, 0, "fibroconnective/glandular-3"});
    t.set("2", {1, 0, "transitional"});
    t.set("3.1", {1, 0, "fatty-1"});
    t.set("3.2", {1, 0, "fatty-2"});
    t.set("3.3", {1, 0, "fatty-3"});
    return t;
}

} // namespace

MediaTable test1_media_table() { return base_table(true); }
MediaTable test2_media_table() { return base_table(false); }

} // namespace emtomo
