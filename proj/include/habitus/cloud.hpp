#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "habitus/common.hpp"

namespace habitus {

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

enum class Species : int {
    Birch = 0,
    Beech = 1,
    Ash = 2,
    Oak = 3,
    Pine = 4,
    Spruce = 5,
    DouglasFir = 6,
};

inline constexpr int kSpeciesCount = 7;
inline constexpr std::array<Species, kSpeciesCount> kAllSpecies = {
    Species::Birch, Species::Beech, Species::Ash,    Species::Oak,
    Species::Pine,  Species::Spruce, Species::DouglasFir};

std::string species_name(Species s);
Species species_from_name(const std::string& name);
bool is_broadleaf(Species s);

// One tree. Coordinates are metres; z is elevation above the cloud minimum
// (load_cloud normalises min z to 0).
struct PointCloud {
    std::vector<Point3> points;
    Species species = Species::Birch;
    std::string source_id;

    double min_z() const;
    double max_z() const;
    double height() const { return max_z() - min_z(); }
};

// ASCII XYZ ("x y z" per line, '#' comments allowed) or ASCII PLY with
// x/y/z vertex properties. Shifts z so min z = 0; point order preserved.
PointCloud load_cloud(const fs::path& path);
void save_cloud_xyz(const fs::path& path, const PointCloud& cloud);

// Displaces each point by a uniformly random direction on the unit sphere
// with magnitude uniform in [0, 5 mm]. Deterministic in the seed.
PointCloud jitter(const PointCloud& cloud, std::uint64_t rng_seed);
inline constexpr double kJitterMaxMetres = 0.005;

// Extent of the cloud as seen from view angle alpha (degrees):
// w = spread along the in-plane horizontal axis u(alpha), h = max z - min z.
struct Extent {
    double w = 0.0, h = 0.0;
};
Extent extent(const PointCloud& cloud, double alpha_deg);

// Dataset manifest row. `split` is "train" or "test"; fold is 1..5 for
// training rows and 0 for test rows.
struct ManifestEntry {
    std::string path;
    Species species = Species::Birch;
    std::string source_id;
    std::string split;
    int fold = 0;
};

std::vector<ManifestEntry> read_manifest(const fs::path& csv_path);
void write_manifest(const fs::path& csv_path, const std::vector<ManifestEntry>& entries);

}  // namespace habitus
