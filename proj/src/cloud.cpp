#include "habitus/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace habitus {

std::string species_name(Species s) {
    switch (s) {
        case Species::Birch: return "Birch";
        case Species::Beech: return "Beech";
        case Species::Ash: return "Ash";
        case Species::Oak: return "Oak";
        case Species::Pine: return "Pine";
        case Species::Spruce: return "Spruce";
        case Species::DouglasFir: return "DouglasFir";
    }
    throw Error("cloudio", "invalid species value");
}

Species species_from_name(const std::string& name) {
    for (Species s : kAllSpecies)
        if (species_name(s) == name) return s;
    throw Error("cloudio", "unknown species: " + name);
}

bool is_broadleaf(Species s) {
    return s == Species::Birch || s == Species::Beech || s == Species::Ash || s == Species::Oak;
}

double PointCloud::min_z() const {
    double m = std::numeric_limits<double>::infinity();
    for (const Point3& p : points) m = std::min(m, p.z);
    return m;
}

double PointCloud::max_z() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const Point3& p : points) m = std::max(m, p.z);
    return m;
}

namespace {

bool parse_xyz_line(const std::string& line, Point3& out) {
    const char* s = line.c_str();
    char* end = nullptr;
    out.x = std::strtod(s, &end);
    if (end == s) return false;
    s = end;
    out.y = std::strtod(s, &end);
    if (end == s) return false;
    s = end;
    out.z = std::strtod(s, &end);
    if (end == s) return false;
    // trailing columns (intensity etc.) are ignored
    return std::isfinite(out.x) && std::isfinite(out.y) && std::isfinite(out.z);
}

PointCloud load_xyz(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cloudio", "cannot open " + path.string());
    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        Point3 p;
        if (!parse_xyz_line(t, p))
            throw Error("cloudio", "parse error in " + path.string() + " at line " +
                                       std::to_string(line_no));
        cloud.points.push_back(p);
    }
    return cloud;
}

PointCloud load_ply(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cloudio", "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;

    auto next_line = [&]() -> std::string {
        if (!std::getline(in, line)) throw Error("cloudio", "truncated PLY header: " + path.string());
        ++line_no;
        return trim(line);
    };

    if (next_line() != "ply") throw Error("cloudio", "not a PLY file: " + path.string());
    std::size_t vertex_count = 0;
    int xi = -1, yi = -1, zi = -1;
    int prop_idx = 0;
    bool in_vertex_element = false;
    while (true) {
        const std::string t = next_line();
        if (t == "end_header") break;
        std::istringstream ss(t);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii")
                throw Error("cloudio", "only ASCII PLY supported: " + path.string());
        } else if (word == "element") {
            std::string name;
            std::size_t count;
            ss >> name >> count;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) vertex_count = count;
            prop_idx = 0;
        } else if (word == "property" && in_vertex_element) {
            std::string type, name;
            ss >> type >> name;
            if (name == "x") xi = prop_idx;
            if (name == "y") yi = prop_idx;
            if (name == "z") zi = prop_idx;
            ++prop_idx;
        }
    }
    if (xi < 0 || yi < 0 || zi < 0)
        throw Error("cloudio", "PLY lacks x/y/z vertex properties: " + path.string());

    PointCloud cloud;
    cloud.points.reserve(vertex_count);
    for (std::size_t i = 0; i < vertex_count; ++i) {
        if (!std::getline(in, line))
            throw Error("cloudio", "truncated PLY vertex data: " + path.string());
        ++line_no;
        std::istringstream ss(line);
        std::vector<double> vals;
        double v;
        while (ss >> v) vals.push_back(v);
        const int needed = std::max({xi, yi, zi});
        if (static_cast<int>(vals.size()) <= needed)
            throw Error("cloudio", "parse error in " + path.string() + " at line " +
                                       std::to_string(line_no));
        cloud.points.push_back({vals[xi], vals[yi], vals[zi]});
    }
    return cloud;
}

}  // namespace

PointCloud load_cloud(const fs::path& path) {
    PointCloud cloud;
    if (path.extension() == ".ply")
        cloud = load_ply(path);
    else
        cloud = load_xyz(path);
    if (cloud.points.empty()) throw Error("cloudio", "empty cloud: " + path.string());
    const double z0 = cloud.min_z();
    for (Point3& p : cloud.points) p.z -= z0;
    return cloud;
}

void save_cloud_xyz(const fs::path& path, const PointCloud& cloud) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cloudio", "cannot write " + path.string());
    char buf[128];
    for (const Point3& p : cloud.points) {
        std::snprintf(buf, sizeof(buf), "%.10f %.10f %.10f\n", p.x, p.y, p.z);
        out << buf;
    }
    if (!out) throw Error("cloudio", "write failed: " + path.string());
}

PointCloud jitter(const PointCloud& cloud, std::uint64_t rng_seed) {
    if (cloud.points.empty()) throw Error("cloudio", "jitter on empty cloud");
    Rng rng(rng_seed);
    PointCloud out = cloud;
    for (Point3& p : out.points) {
        // isotropic direction: z uniform in [-1,1], azimuth uniform
        const double cz = rng.uniform(-1.0, 1.0);
        const double az = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double r = std::sqrt(std::max(0.0, 1.0 - cz * cz));
        const double mag = rng.uniform(0.0, kJitterMaxMetres);
        p.x += mag * r * std::cos(az);
        p.y += mag * r * std::sin(az);
        p.z += mag * cz;
    }
    return out;
}

Extent extent(const PointCloud& cloud, double alpha_deg) {
    if (cloud.points.empty()) throw Error("cloudio", "extent of empty cloud");
    const double a = alpha_deg * 3.14159265358979323846 / 180.0;
    const double ux = std::cos(a), uy = std::sin(a);
    double umin = std::numeric_limits<double>::infinity();
    double umax = -std::numeric_limits<double>::infinity();
    double zmin = std::numeric_limits<double>::infinity();
    double zmax = -std::numeric_limits<double>::infinity();
    for (const Point3& p : cloud.points) {
        const double u = p.x * ux + p.y * uy;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        zmin = std::min(zmin, p.z);
        zmax = std::max(zmax, p.z);
    }
    Extent e{umax - umin, zmax - zmin};
    if (e.w <= 0.0 || e.h <= 0.0)
        throw Error("cloudio", "degenerate extent (w=" + fmt_double(e.w) + ", h=" +
                                   fmt_double(e.h) + ")");
    return e;
}

std::vector<ManifestEntry> read_manifest(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw Error("cloudio", "cannot open manifest " + csv_path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    if (!std::getline(in, line)) throw Error("cloudio", "empty manifest " + csv_path.string());
    const std::vector<std::string> header = split(trim(line), ',');
    auto col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int c_path = col("path"), c_species = col("species"), c_source = col("source_id");
    const int c_split = col("split"), c_fold = col("fold");
    if (c_path < 0 || c_species < 0)
        throw Error("cloudio", "manifest needs path,species columns: " + csv_path.string());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::vector<std::string> f = split(trim(line), ',');
        if (f.size() < header.size())
            throw Error("cloudio", "manifest row too short at line " + std::to_string(line_no));
        ManifestEntry e;
        e.path = f[c_path];
        e.species = species_from_name(f[c_species]);
        if (c_source >= 0) e.source_id = f[c_source];
        if (c_split >= 0) e.split = f[c_split];
        if (c_fold >= 0 && !f[c_fold].empty()) e.fold = std::stoi(f[c_fold]);
        entries.push_back(std::move(e));
    }
    return entries;
}

void write_manifest(const fs::path& csv_path, const std::vector<ManifestEntry>& entries) {
    std::ostringstream out;
    out << "path,species,source_id,split,fold\n";
    for (const ManifestEntry& e : entries) {
        out << e.path << "," << species_name(e.species) << "," << e.source_id << "," << e.split
            << "," << (e.fold > 0 ? std::to_string(e.fold) : std::string()) << "\n";
    }
    write_text_file(csv_path, out.str());
}

}  // namespace habitus
