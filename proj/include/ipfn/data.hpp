#ifndef IPFN_DATA_HPP
#define IPFN_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ipfn/error.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"

namespace ipfn {

// Dense channels-last grid of float samples (an image or a volume).
struct Raster {
    std::vector<int> dims;      // H x W or H x W x D
    int channels = 0;
    std::vector<float> values;  // volume(dims) * channels

    Raster() = default;
    Raster(std::vector<int> d, int c) : dims(std::move(d)), channels(c), values(volume(dims) * c, 0.0f) {}

    int k() const { return static_cast<int>(dims.size()); }
    std::size_t points() const { return volume(dims); }
    float& at(std::size_t point, int ch) { return values[point * channels + ch]; }
    float at(std::size_t point, int ch) const { return values[point * channels + ch]; }
    bool operator==(const Raster&) const = default;
};

enum class ExemplarKind { image2d, sdf3d };

inline const char* to_string(ExemplarKind k) { return k == ExemplarKind::image2d ? "image2d" : "sdf3d"; }

// Source pattern. Generator outputs live in (0,1); `value_offset` and
// `value_scale` map them back to exemplar units (identity for images, a
// truncated symmetric range for signed distances).
struct Exemplar {
    ExemplarKind kind = ExemplarKind::image2d;
    Raster data;
    std::vector<std::string> channel_labels;
    double value_offset = 0.0;
    double value_scale = 1.0;

    int k() const { return data.k(); }
    int channels() const { return data.channels; }
    const std::vector<int>& dims() const { return data.dims; }

    float to_unit(float v) const {
        return static_cast<float>(std::clamp((v - value_offset) / value_scale, 0.0, 1.0));
    }
    float from_unit(float u) const { return static_cast<float>(value_offset + value_scale * u); }

    void validate() const {
        if (data.values.size() != data.points() * static_cast<std::size_t>(data.channels))
            throw FormatError("exemplar: value count does not match dims");
        for (float v : data.values) {
            if (!std::isfinite(v)) throw FormatError("exemplar: non-finite value");
            if (kind == ExemplarKind::image2d && (v < 0.0f || v > 1.0f))
                throw FormatError("exemplar: image values must lie in [0,1]");
        }
    }
};

inline Exemplar make_image_exemplar(Raster r, std::vector<std::string> labels = {}) {
    if (r.k() != 2) throw ConfigError("image exemplar must be 2D");
    Exemplar e;
    e.kind = ExemplarKind::image2d;
    e.data = std::move(r);
    e.channel_labels = std::move(labels);
    e.validate();
    return e;
}

// Signed distances are mapped to (0,1) through 0.5 + sdf / (2 * truncation);
// truncation defaults to max |sdf|.
inline Exemplar make_sdf_exemplar(Raster r, double truncation = 0.0) {
    if (r.k() != 3) throw ConfigError("SDF exemplar must be 3D");
    Exemplar e;
    e.kind = ExemplarKind::sdf3d;
    e.data = std::move(r);
    e.channel_labels = {"sdf"};
    e.validate();
    if (!(truncation > 0.0)) {
        for (float v : e.data.values) truncation = std::max(truncation, static_cast<double>(std::abs(v)));
        if (!(truncation > 0.0)) truncation = 1.0;
    }
    e.value_scale = 2.0 * truncation;
    e.value_offset = -truncation;
    return e;
}

// ---------------------------------------------------------------------------
// Guidance
// ---------------------------------------------------------------------------

enum class GuidanceKind { none, directional, density };

inline const char* to_string(GuidanceKind k) {
    switch (k) {
        case GuidanceKind::none: return "none";
        case GuidanceKind::directional: return "directional";
        case GuidanceKind::density: return "density";
    }
    return "none";
}

inline GuidanceKind guidance_kind_from_string(const std::string& s) {
    if (s == "none") return GuidanceKind::none;
    if (s == "directional") return GuidanceKind::directional;
    if (s == "density") return GuidanceKind::density;
    throw ConfigError("unknown guidance kind '" + s + "'");
}

// Implicit line a*x + b*y + c = 0 in normalized coordinates.
struct Line {
    double a = 0.0, b = 1.0, c = 0.0;

    static Line horizontal() { return {0.0, 1.0, 0.0}; }  // y = 0
    static Line vertical() { return {1.0, 0.0, 0.0}; }    // x = 0
    bool degenerate() const { return a == 0.0 && b == 0.0 && c == 0.0; }
};

// (x, y) = (2 p_x / w - 1, 2 p_y / h - 1).
inline std::array<double, 2> normalize_pixel_coords(double px, double py, double w, double h) {
    return {2.0 * px / w - 1.0, 2.0 * py / h - 1.0};
}

// Guidance g = a x + b y + c at the normalized center of a crop. Axis 0 of
// the exemplar is the row (y) axis, axis 1 the column (x) axis.
inline double directional_guidance(const std::vector<int>& crop_origin, const std::vector<int>& crop_dims,
                                   const std::vector<int>& exemplar_dims, const Line& line) {
    if (line.degenerate()) throw ConfigError("directional guidance: degenerate line (0,0,0)");
    if (exemplar_dims.size() < 2) throw ConfigError("directional guidance needs a 2D exemplar");
    const double py = crop_origin[0] + 0.5 * crop_dims[0];
    const double px = crop_origin[1] + 0.5 * crop_dims[1];
    const auto [x, y] = normalize_pixel_coords(px, py, exemplar_dims[1], exemplar_dims[0]);
    return line.a * x + line.b * y + line.c;
}

// g = (1/m) sum |sdf| over the patch; m defaults to the voxel count.
inline double density_guidance(std::span<const float> sdf_patch, double m = 0.0) {
    if (m == 0.0) m = static_cast<double>(sdf_patch.size());
    if (!(m > 0.0)) throw ConfigError("density guidance: m must be positive");
    double s = 0.0;
    for (float v : sdf_patch) s += std::abs(static_cast<double>(v));
    return s / m;
}

// ---------------------------------------------------------------------------
// Cropping
// ---------------------------------------------------------------------------

inline Raster crop(const Raster& src, const std::vector<int>& origin, const std::vector<int>& dims) {
    const int k = src.k();
    if (static_cast<int>(origin.size()) != k || static_cast<int>(dims.size()) != k)
        throw ConfigError("crop: dimensionality mismatch");
    for (int a = 0; a < k; ++a)
        if (origin[a] < 0 || dims[a] < 1 || origin[a] + dims[a] > src.dims[a])
            throw ConfigError("crop " + dims_to_string(dims) + " does not fit exemplar " + dims_to_string(src.dims));
    Raster out(dims, src.channels);
    std::vector<int> p(k);
    std::size_t dst = 0;
    for_each_index(dims, [&](const std::vector<int>& q) {
        for (int a = 0; a < k; ++a) p[a] = origin[a] + q[a];
        const std::size_t s = flat_index(src.dims, p);
        std::copy_n(src.values.begin() + s * src.channels, src.channels, out.values.begin() + dst * src.channels);
        ++dst;
    });
    return out;
}

struct GuidanceSpec {
    GuidanceKind kind = GuidanceKind::none;
    Line line;           // directional
    double density_m = 0.0;  // density normalizer; 0 = voxel count
};

struct RealPatch {
    Raster patch;               // exemplar units
    std::vector<int> origin;
    double guidance = 0.0;
};

inline double patch_guidance(const Exemplar& ex, const Raster& patch, const std::vector<int>& origin,
                             const GuidanceSpec& g) {
    switch (g.kind) {
        case GuidanceKind::none: return 0.0;
        case GuidanceKind::directional: return directional_guidance(origin, patch.dims, ex.dims(), g.line);
        case GuidanceKind::density: return density_guidance(patch.values, g.density_m);
    }
    return 0.0;
}

// Uniformly random axis-aligned crop and its paired guidance value.
inline RealPatch sample_real_patch(const Exemplar& ex, const std::vector<int>& patch_size, Rng& rng,
                                   const GuidanceSpec& g = {}) {
    const int k = ex.k();
    if (static_cast<int>(patch_size.size()) != k) throw ConfigError("patch size must have one entry per axis");
    RealPatch out;
    out.origin.resize(k);
    for (int a = 0; a < k; ++a) {
        if (patch_size[a] > ex.dims()[a])
            throw ConfigError("patch " + dims_to_string(patch_size) + " larger than exemplar " +
                              dims_to_string(ex.dims()));
        out.origin[a] = static_cast<int>(rng.index(static_cast<std::uint64_t>(ex.dims()[a] - patch_size[a] + 1)));
    }
    out.patch = crop(ex.data, out.origin, patch_size);
    out.guidance = patch_guidance(ex, out.patch, out.origin, g);
    return out;
}

}  // namespace ipfn

#endif
