#include "habitus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace habitus {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

SpeciesArchetype default_archetype(Species s) {
    SpeciesArchetype a;
    a.species = s;
    switch (s) {
        case Species::Birch:
            a.crown_shape = CrownShape::OpenBroom;
            a.crown_ratio_min = 0.50; a.crown_ratio_max = 0.60;
            a.crown_width_min = 0.40; a.crown_width_max = 0.50;
            a.branch_order_depth = 4;
            a.height_min = 14.0; a.height_max = 18.0;
            break;
        case Species::Beech:
            a.crown_shape = CrownShape::Ellipsoid;
            a.crown_ratio_min = 0.60; a.crown_ratio_max = 0.70;
            a.crown_width_min = 0.45; a.crown_width_max = 0.55;
            a.branch_order_depth = 3;
            a.height_min = 22.0; a.height_max = 27.0;
            break;
        case Species::Ash:
            // silhouette deliberately close to Beech; the stem bend is the
            // cue that sets it apart when it is the designated artifact
            a.crown_shape = CrownShape::Ellipsoid;
            a.crown_ratio_min = 0.55; a.crown_ratio_max = 0.65;
            a.crown_width_min = 0.40; a.crown_width_max = 0.50;
            a.branch_order_depth = 3;
            a.height_min = 18.0; a.height_max = 22.0;
            break;
        case Species::Oak:
            a.crown_shape = CrownShape::Ellipsoid;
            a.crown_ratio_min = 0.55; a.crown_ratio_max = 0.65;
            a.crown_width_min = 0.58; a.crown_width_max = 0.72;
            a.branch_order_depth = 2;
            a.height_min = 16.0; a.height_max = 20.0;
            break;
        case Species::Pine:
            a.crown_shape = CrownShape::OpenBroom;
            a.crown_ratio_min = 0.25; a.crown_ratio_max = 0.35;
            a.crown_width_min = 0.30; a.crown_width_max = 0.38;
            a.branch_order_depth = 2;
            a.stem_dead_branches = true;
            a.height_min = 24.0; a.height_max = 30.0;
            break;
        case Species::Spruce:
            a.crown_shape = CrownShape::Cone;
            a.crown_ratio_min = 0.65; a.crown_ratio_max = 0.80;
            a.crown_width_min = 0.28; a.crown_width_max = 0.34;
            a.branch_order_depth = 2;
            a.height_min = 28.0; a.height_max = 34.0;
            break;
        case Species::DouglasFir:
            a.crown_shape = CrownShape::Cone;
            a.crown_ratio_min = 0.50; a.crown_ratio_max = 0.60;
            a.crown_width_min = 0.30; a.crown_width_max = 0.36;
            a.branch_order_depth = 2;
            a.stem_dead_branches = true;
            a.height_min = 34.0; a.height_max = 40.0;
            break;
    }
    return a;
}

namespace {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double norm(Vec3 a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

struct Segment {
    Vec3 a, b;
    double radius = 0.05;
    bool crown = false;
    double weight = 1.0;  // point density multiplier per unit length
};

// radius of the crown envelope at height z, per shape
double crown_radius_at(CrownShape shape, double z, double crown_base, double top, double r_max) {
    const double t = std::clamp((z - crown_base) / std::max(1e-9, top - crown_base), 0.0, 1.0);
    switch (shape) {
        case CrownShape::Cone: return r_max * (1.0 - t);
        case CrownShape::Ellipsoid: {
            const double u = 2.0 * t - 1.0;
            return r_max * std::sqrt(std::max(0.0, 1.0 - u * u));
        }
        case CrownShape::OpenBroom: return r_max * std::pow(t, 0.7);
    }
    return r_max;
}

struct Skeleton {
    std::vector<Segment> segments;
    double total_weighted_length() const {
        double s = 0.0;
        for (const Segment& seg : segments) s += seg.weight * norm(seg.b - seg.a);
        return s;
    }
};

void grow_branch(Skeleton& skel, Rng& rng, const SpeciesArchetype& arch, Vec3 origin, Vec3 dir,
                 double length, double radius, int order, double crown_base, double top,
                 double r_max) {
    if (order > arch.branch_order_depth || length < 0.2) return;
    const Vec3 tip = origin + length * dir;
    skel.segments.push_back({origin, tip, radius, true, order >= 2 ? 1.6 : 1.0});

    const int children = (order == 1) ? 3 : 2;
    for (int c = 0; c < children; ++c) {
        const double t = rng.uniform(0.45, 0.95);
        const Vec3 base = origin + (t * length) * dir;
        // perturb direction; higher orders arc upward for broom shapes
        const double az = rng.uniform(0.0, 2.0 * kPi);
        const double lift = (arch.crown_shape == CrownShape::OpenBroom) ? 0.5 : 0.1;
        Vec3 nd{dir.x + 0.8 * std::cos(az), dir.y + 0.8 * std::sin(az), dir.z + lift};
        const double n = norm(nd);
        if (n < 1e-9) continue;
        nd = (1.0 / n) * nd;
        grow_branch(skel, rng, arch, base, nd, length * rng.uniform(0.4, 0.55), radius * 0.55,
                    order + 1, crown_base, top, r_max);
    }
}

Skeleton build_skeleton(Rng& rng, const SpeciesArchetype& arch, double height, double crown_base,
                        double r_max) {
    Skeleton skel;
    const double stem_radius = std::max(0.08, 0.009 * height);

    // stem below the crown; conifers and broom forms keep a leader to the top
    skel.segments.push_back({{0, 0, 0}, {0, 0, crown_base}, stem_radius, false, 2.2});
    const bool leader = arch.crown_shape != CrownShape::Ellipsoid;
    if (leader)
        skel.segments.push_back({{0, 0, crown_base}, {0, 0, height}, stem_radius * 0.5, true, 1.2});

    // first-order branches within the crown
    const int n_branches = (arch.crown_shape == CrownShape::Cone) ? 14 : 9;
    for (int i = 0; i < n_branches; ++i) {
        const double z = crown_base + (height - crown_base) * (i + rng.uniform(0.1, 0.9)) /
                                          (n_branches + 1.0);
        const double az = i * 2.399963 + rng.uniform(-0.3, 0.3);  // golden angle spiral
        double elev;                                              // from horizontal
        switch (arch.crown_shape) {
            case CrownShape::Cone: elev = rng.uniform(-0.25, 0.0); break;
            case CrownShape::Ellipsoid: elev = rng.uniform(0.3, 0.8); break;
            case CrownShape::OpenBroom: elev = rng.uniform(0.8, 1.2); break;
        }
        Vec3 dir{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
        const double reach = crown_radius_at(arch.crown_shape, z, crown_base, height, r_max);
        const double length = std::max(0.4, reach * rng.uniform(0.8, 1.1));
        grow_branch(skel, rng, arch, {0, 0, z}, dir, length, stem_radius * 0.35, 1, crown_base,
                    height, r_max);
    }

    // short dead branch stubs on the bare stem
    if (arch.stem_dead_branches) {
        const int stubs = 10 + static_cast<int>(rng.next_below(6));
        for (int i = 0; i < stubs; ++i) {
            const double z = rng.uniform(0.15 * height, 0.95 * crown_base);
            const double az = rng.uniform(0.0, 2.0 * kPi);
            const double len = rng.uniform(0.5, 1.3);
            Vec3 dir{std::cos(az), std::sin(az), rng.uniform(-0.2, 0.05)};
            const double n = norm(dir);
            skel.segments.push_back(
                {{0, 0, z}, Vec3{0, 0, z} + (len / n) * dir, 0.03, false, 1.4});
        }
    }
    return skel;
}

}  // namespace

PointCloud generate_tree(const SpeciesArchetype& arch, std::uint64_t rng_seed,
                         std::size_t points_min, std::size_t points_max, GenTruth* truth) {
    if (arch.branch_order_depth < 1 || arch.branch_order_depth > 4)
        throw Error("synth", "branch order depth must be in [1,4]");
    Rng rng(rng_seed);
    const double height = rng.uniform(arch.height_min, arch.height_max);
    const double crown_ratio = rng.uniform(arch.crown_ratio_min, arch.crown_ratio_max);
    const double crown_width = height * rng.uniform(arch.crown_width_min, arch.crown_width_max);
    const double crown_base = height * (1.0 - crown_ratio);
    const double r_max = 0.5 * crown_width;
    const std::size_t n_total =
        points_min + static_cast<std::size_t>(rng.next_below(points_max - points_min + 1));

    Skeleton skel = build_skeleton(rng, arch, height, crown_base, r_max);

    // 55% of the budget goes to skeleton segments, 45% to the crown shell
    const std::size_t n_skel = static_cast<std::size_t>(n_total * 0.55);
    const std::size_t n_shell = n_total - n_skel;

    PointCloud cloud;
    cloud.species = arch.species;
    cloud.points.reserve(n_total);
    std::size_t crown_points = 0, crown_above_base = 0;

    const double wtotal = skel.total_weighted_length();
    std::size_t emitted = 0;
    for (std::size_t si = 0; si < skel.segments.size(); ++si) {
        const Segment& seg = skel.segments[si];
        const double wl = seg.weight * norm(seg.b - seg.a);
        std::size_t count = (si + 1 == skel.segments.size())
                                ? n_skel - emitted
                                : static_cast<std::size_t>(n_skel * wl / wtotal);
        count = std::min(count, n_skel - emitted);
        emitted += count;
        for (std::size_t i = 0; i < count; ++i) {
            const double t = rng.next_double();
            const Vec3 p = seg.a + t * (seg.b - seg.a);
            const double r = seg.radius;
            Point3 q{p.x + r * rng.normal(), p.y + r * rng.normal(), p.z + r * rng.normal()};
            cloud.points.push_back(q);
            if (seg.crown) {
                ++crown_points;
                if (q.z >= crown_base) ++crown_above_base;
            }
        }
    }

    // crown shell: points near the envelope surface
    for (std::size_t i = 0; i < n_shell; ++i) {
        const double z = crown_base + (height - crown_base) * rng.next_double();
        const double env = crown_radius_at(arch.crown_shape, z, crown_base, height, r_max);
        const double az = rng.uniform(0.0, 2.0 * kPi);
        const double rf = rng.uniform(0.6, 1.0);
        Point3 q{env * rf * std::cos(az) + 0.05 * rng.normal(),
                 env * rf * std::sin(az) + 0.05 * rng.normal(), z + 0.05 * rng.normal()};
        cloud.points.push_back(q);
        ++crown_points;
        if (q.z >= crown_base) ++crown_above_base;
    }

    // normalise elevation like load_cloud does
    double z0 = cloud.min_z();
    for (Point3& p : cloud.points) p.z -= z0;

    if (truth) {
        truth->height = height - z0;
        truth->crown_base_z = crown_base - z0;
        truth->crown_width = crown_width;
        truth->crown_ratio = crown_ratio;
        truth->crown_points = crown_points;
        truth->crown_points_above_base = crown_above_base;
    }
    return cloud;
}

PointCloud plant_bend_artifact(const PointCloud& cloud, double bend_height_fraction,
                               double bend_angle_deg, std::uint64_t rng_seed) {
    if (bend_height_fraction <= 0.0 || bend_height_fraction >= 1.0)
        throw Error("synth", "bend height fraction must be in (0,1)");
    const double zmin = cloud.min_z();
    const double z_bend = zmin + bend_height_fraction * (cloud.max_z() - zmin);

    Rng rng(rng_seed);
    const double az = rng.uniform(0.0, 2.0 * kPi);
    const double ax = std::cos(az), ay = std::sin(az);  // horizontal rotation axis
    const double beta = bend_angle_deg * kPi / 180.0;
    const double c = std::cos(beta), s = std::sin(beta);

    // stem centreline passes through (0,0); pivot at the bend height
    PointCloud out = cloud;
    for (Point3& p : out.points) {
        if (p.z <= z_bend) continue;
        const double px = p.x, py = p.y, pz = p.z - z_bend;
        // Rodrigues rotation around unit axis (ax, ay, 0)
        const double dot = ax * px + ay * py;
        const double cx = ay * pz;          // a x p
        const double cy = -ax * pz;
        const double cz = ax * py - ay * px;
        p.x = px * c + cx * s + ax * dot * (1 - c);
        p.y = py * c + cy * s + ay * dot * (1 - c);
        p.z = pz * c + cz * s + z_bend;
    }
    return out;
}

std::vector<ManifestEntry> generate_dataset(const GenConfig& config, const fs::path& out_dir) {
    if (config.trees_per_species < 1) throw Error("synth", "trees_per_species must be >= 1");
    if (config.points_max < config.points_min) throw Error("synth", "bad points_per_tree range");

    std::vector<ManifestEntry> manifest;
    const fs::path cloud_dir = out_dir / "clouds";
    fs::create_directories(cloud_dir);

    for (Species species : kAllSpecies) {
        const SpeciesArchetype arch = default_archetype(species);
        const int T = config.trees_per_species;
        const int n_test = std::max(1, static_cast<int>(std::lround(0.1 * T)));

        // deterministic shuffle for split/fold assignment
        std::vector<int> order(T);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(Rng::derive(config.rng_seed, 900 + static_cast<int>(species)));
        for (int i = T - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.next_below(static_cast<std::uint64_t>(i) + 1)]);

        std::vector<std::string> split(T);
        std::vector<int> fold(T, 0);
        for (int rank = 0; rank < T; ++rank) {
            const int idx = order[rank];
            if (rank < n_test) {
                split[idx] = "test";
            } else {
                split[idx] = "train";
                fold[idx] = (rank - n_test) % 5 + 1;
            }
        }

        for (int i = 0; i < T; ++i) {
            const std::uint64_t tree_seed =
                Rng::derive(config.rng_seed, static_cast<std::uint64_t>(species) * 100000 + i);
            PointCloud cloud = generate_tree(arch, tree_seed, config.points_min, config.points_max);
            if (config.artifact_species && *config.artifact_species == species)
                cloud = plant_bend_artifact(cloud, config.bend_height_fraction,
                                            config.bend_angle_deg, Rng::derive(tree_seed, 77));

            const std::string name = species_name(species) + "_" + std::to_string(i) + ".xyz";
            save_cloud_xyz(cloud_dir / name, cloud);

            ManifestEntry e;
            e.path = (fs::path("clouds") / name).generic_string();
            e.species = species;
            e.source_id = "synth:" + species_name(species) + ":" + std::to_string(i);
            e.split = split[i];
            e.fold = fold[i];
            manifest.push_back(std::move(e));
        }
    }
    write_manifest(out_dir / "manifest.csv", manifest);
    return manifest;
}

}  // namespace habitus
