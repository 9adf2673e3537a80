#include "habitus/projection.hpp"

#include <cmath>

namespace habitus {

ProjectionPlane plane_basis(double alpha_deg) {
    if (!std::isfinite(alpha_deg)) throw Error("projector", "non-finite view angle");
    const double a = alpha_deg * 3.14159265358979323846 / 180.0;
    ProjectionPlane p;
    p.alpha_deg = alpha_deg;
    p.u = {std::cos(a), std::sin(a), 0.0};
    p.v = {0.0, 0.0, 1.0};
    return p;
}

PlaneXY project_point(const Point3& p, const ProjectionPlane& plane) {
    return {p.x * plane.u[0] + p.y * plane.u[1] + p.z * plane.u[2],
            p.x * plane.v[0] + p.y * plane.v[1] + p.z * plane.v[2]};
}

double pixel_size(double w, double h, std::size_t n) {
    if (n == 0) throw Error("projector", "pixel size of empty cloud");
    if (w <= 0.0 || h <= 0.0) throw Error("projector", "degenerate extent");
    return std::sqrt((w * h) / static_cast<double>(n));
}

RasterSpec make_raster_spec(const PointCloud& cloud, double alpha_deg, int canvas) {
    if (canvas < 32) throw Error("projector", "canvas must be >= 32 px");
    const Extent e = extent(cloud, alpha_deg);
    RasterSpec spec;
    spec.canvas = canvas;
    spec.w = e.w;
    spec.h = e.h;
    spec.n = cloud.points.size();
    spec.pixel_size_m = pixel_size(e.w, e.h, cloud.points.size());
    return spec;
}

Image<std::uint32_t> rasterize(const PointCloud& cloud, const ProjectionPlane& plane,
                               const RasterSpec& spec) {
    Image<std::uint32_t> counts(spec.canvas, spec.canvas, 0);
    // horizontal centre of the projected cloud
    double umin = std::numeric_limits<double>::infinity();
    double umax = -std::numeric_limits<double>::infinity();
    for (const Point3& p : cloud.points) {
        const double u = project_point(p, plane).x;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    const double cx = 0.5 * (umin + umax);
    const double half = spec.canvas / 2.0;
    for (const Point3& p : cloud.points) {
        const PlaneXY q = project_point(p, plane);
        const int col = static_cast<int>(std::floor((q.x - cx) / spec.pixel_size_m + half));
        const int vrow = static_cast<int>(std::floor(q.y / spec.pixel_size_m));
        const int row = spec.canvas - 1 - vrow;
        if (col >= 0 && col < spec.canvas && row >= 0 && row < spec.canvas)
            ++counts.at(row, col);
    }
    return counts;
}

ProjectionImage log_scale(const Image<std::uint32_t>& counts, const ProjectionPlane& plane,
                          const RasterSpec& spec) {
    ProjectionImage img;
    img.plane = plane;
    img.spec = spec;
    img.values = GrayImage(counts.width, counts.height);
    for (std::size_t i = 0; i < counts.data.size(); ++i)
        img.values.data[i] = std::log1p(static_cast<double>(counts.data[i]));
    return img;
}

std::vector<ProjectionImage> render_views(const PointCloud& cloud, int canvas) {
    std::vector<ProjectionImage> views;
    views.reserve(kViewAngles.size());
    for (double alpha : kViewAngles) {
        const ProjectionPlane plane = plane_basis(alpha);
        const RasterSpec spec = make_raster_spec(cloud, alpha, canvas);
        views.push_back(log_scale(rasterize(cloud, plane, spec), plane, spec));
    }
    return views;
}

ByteImage to_bytes(const ProjectionImage& img) {
    double vmax = 0.0;
    for (double v : img.values.data) vmax = std::max(vmax, v);
    ByteImage out(img.values.width, img.values.height, 0);
    if (vmax > 0.0) {
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] =
                static_cast<std::uint8_t>(std::lround(255.0 * img.values.data[i] / vmax));
    }
    return out;
}

void write_image(const ProjectionImage& img, const fs::path& path) {
    write_pgm8(path, to_bytes(img));
}

}  // namespace habitus
