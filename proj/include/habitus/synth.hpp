#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "habitus/cloud.hpp"

namespace habitus {

enum class CrownShape { Cone, Ellipsoid, OpenBroom };

// Structural parameters of one species archetype. Crown width is the crown
// diameter expressed as a fraction of tree height; crown ratio is crown
// length over tree height.
struct SpeciesArchetype {
    Species species = Species::Birch;
    CrownShape crown_shape = CrownShape::Ellipsoid;
    double crown_ratio_min = 0.5, crown_ratio_max = 0.6;
    double crown_width_min = 0.4, crown_width_max = 0.5;
    int branch_order_depth = 3;  // <= 4
    bool stem_dead_branches = false;
    double stem_bend_probability = 0.0;
    double height_min = 15.0, height_max = 20.0;
};

SpeciesArchetype default_archetype(Species s);

// Ground truth of one generated tree, for tests and annotation checks.
struct GenTruth {
    double height = 0.0;
    double crown_base_z = 0.0;
    double crown_width = 0.0;
    double crown_ratio = 0.0;
    std::size_t crown_points = 0;
    std::size_t crown_points_above_base = 0;
};

PointCloud generate_tree(const SpeciesArchetype& archetype, std::uint64_t rng_seed,
                         std::size_t points_min, std::size_t points_max,
                         GenTruth* truth = nullptr);

// Rotates all points above bend_height_fraction * height about a horizontal
// axis through the stem at that height. The axis azimuth is drawn from the
// seed. Point count is preserved.
PointCloud plant_bend_artifact(const PointCloud& cloud, double bend_height_fraction,
                               double bend_angle_deg, std::uint64_t rng_seed);

struct GenConfig {
    int trees_per_species = 60;
    std::uint64_t rng_seed = 1;
    std::size_t points_min = 3000;
    std::size_t points_max = 6000;
    std::optional<Species> artifact_species;  // every tree of it gets the bend
    double bend_height_fraction = 0.35;
    double bend_angle_deg = 16.0;
};

// Writes XYZ clouds plus a manifest CSV with 90/10 train/test split per
// species and 5-fold assignment of the training portion.
std::vector<ManifestEntry> generate_dataset(const GenConfig& config, const fs::path& out_dir);

}  // namespace habitus
