#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "habitus/cloud.hpp"
#include "habitus/image.hpp"

namespace habitus {

inline constexpr std::array<double, 4> kViewAngles = {0.0, 45.0, 90.0, 135.0};
inline constexpr int kDefaultCanvas = 640;

// Orthographic side-view plane rotated around the z axis by alpha degrees:
// u = [cos a, sin a, 0], v = [0, 0, 1].
struct ProjectionPlane {
    double alpha_deg = 0.0;
    std::array<double, 3> u{1.0, 0.0, 0.0};
    std::array<double, 3> v{0.0, 0.0, 1.0};
};

ProjectionPlane plane_basis(double alpha_deg);

// In-plane coordinates of p: x = p.u, y = p.v.
struct PlaneXY {
    double x = 0.0, y = 0.0;
};
PlaneXY project_point(const Point3& p, const ProjectionPlane& plane);

// Density-adjusted pixel size (metres): sqrt(w*h / n).
double pixel_size(double w, double h, std::size_t n);

struct RasterSpec {
    double pixel_size_m = 0.0;
    int canvas = kDefaultCanvas;
    double w = 0.0, h = 0.0;  // extent used to derive pixel_size_m
    std::size_t n = 0;        // point count
};

RasterSpec make_raster_spec(const PointCloud& cloud, double alpha_deg, int canvas);

// Grey-scale side-view projection: per-pixel log-scaled point count.
struct ProjectionImage {
    GrayImage values;  // row 0 = top of the tree
    ProjectionPlane plane;
    RasterSpec spec;
};

// Cell (row, col) holds the number of points falling in it. The cloud is
// centred horizontally; y = 0 maps to the bottom row. Points outside the
// canvas are clipped.
Image<std::uint32_t> rasterize(const PointCloud& cloud, const ProjectionPlane& plane,
                               const RasterSpec& spec);

// value = ln(1 + count)
ProjectionImage log_scale(const Image<std::uint32_t>& counts, const ProjectionPlane& plane,
                          const RasterSpec& spec);

// The four side views at 0/45/90/135 degrees, each with its own pixel size.
std::vector<ProjectionImage> render_views(const PointCloud& cloud, int canvas = kDefaultCanvas);

// 8-bit export: byte = round(255 * value / max value); an all-zero image
// stays all zero.
ByteImage to_bytes(const ProjectionImage& img);
void write_image(const ProjectionImage& img, const fs::path& path);

}  // namespace habitus
