#ifndef IPFN_FIELDMATH_HPP
#define IPFN_FIELDMATH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ipfn/error.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"

namespace ipfn {

// ---------------------------------------------------------------------------
// Coordinate grids
// ---------------------------------------------------------------------------

// Dense grid of k-dimensional coordinates, one row per cell in row-major
// order. Coordinates are kept in double precision: the encoding phase is
// evaluated in double so that exact periodicity survives large offsets.
struct CoordGrid {
    std::vector<int> dims;
    int k = 0;
    std::vector<double> coords;  // volume(dims) * k

    std::size_t count() const { return k ? coords.size() / static_cast<std::size_t>(k) : 0; }
    std::span<const double> row(std::size_t i) const { return {coords.data() + i * k, static_cast<std::size_t>(k)}; }
};

// c[idx] = scale_s * (center + spacing * (idx - (dims - 1) / 2)) per axis.
inline double grid_coordinate(int idx, int dim, double scale_s, double center, double spacing) {
    return scale_s * (center + spacing * (idx - 0.5 * (dim - 1)));
}

inline CoordGrid make_coord_grid(const std::vector<int>& dims, int k, double scale_s, std::span<const double> center,
                                 double spacing) {
    if (static_cast<int>(dims.size()) != k)
        throw ConfigError("coordinate grid: got " + std::to_string(dims.size()) + " dims for k=" + std::to_string(k));
    if (static_cast<int>(center.size()) != k) throw ConfigError("coordinate grid: center must have k components");
    if (!(scale_s > 0.0)) throw ConfigError("coordinate grid: scale_s must be positive");
    if (!(spacing > 0.0)) throw ConfigError("coordinate grid: spacing must be positive");
    for (int d : dims)
        if (d <= 0) throw ConfigError("coordinate grid: dims must be positive");

    CoordGrid g{dims, k, {}};
    g.coords.resize(volume(dims) * k);
    std::size_t row = 0;
    for_each_index(dims, [&](const std::vector<int>& pos) {
        for (int a = 0; a < k; ++a) g.coords[row * k + a] = grid_coordinate(pos[a], dims[a], scale_s, center[a], spacing);
        ++row;
    });
    return g;
}

inline std::vector<double> sample_center_offset(Rng& rng, int k, double lo, double hi) {
    if (lo > hi) throw ConfigError("shift range must satisfy lo <= hi");
    std::vector<double> off(k);
    for (auto& v : off) v = (lo == hi) ? lo : rng.uniform(lo, hi);
    return off;
}

// ---------------------------------------------------------------------------
// Periodic encoding
// ---------------------------------------------------------------------------

// Learnable per-axis period parameter, stored as log(a) so that a stays
// positive under unconstrained updates.
template <typename Scalar>
struct PeriodVector {
    std::vector<Scalar> rho;
    bool trainable = true;

    static PeriodVector from_a(const std::vector<double>& a, bool trainable = true) {
        PeriodVector p;
        p.trainable = trainable;
        for (double v : a) {
            if (!(v > 0.0)) throw ConfigError("period parameter a must be positive");
            p.rho.push_back(static_cast<Scalar>(std::log(v)));
        }
        return p;
    }

    int k() const { return static_cast<int>(rho.size()); }
    double a(int axis) const { return std::exp(static_cast<double>(rho[axis])); }
    std::vector<double> a() const {
        std::vector<double> out(rho.size());
        for (std::size_t i = 0; i < rho.size(); ++i) out[i] = a(static_cast<int>(i));
        return out;
    }
    // Spatial period 2/a of the lowest frequency level along an axis.
    double period(int axis) const { return 2.0 / a(axis); }
};

struct EncoderConfig {
    int bandwidth_i = 5;
    int k = 2;

    int out_dim() const { return 2 * (bandwidth_i + 1) * k; }
};

// Channel layout: for each level l = 0..i, for each axis j:
//   cos(2^l * pi * a_j * c_j), sin(2^l * pi * a_j * c_j).
template <typename Scalar>
Mat<Scalar> periodic_encode(std::span<const double> coords, const PeriodVector<Scalar>& period,
                            const EncoderConfig& cfg) {
    const int k = cfg.k;
    if (period.k() != k) throw ConfigError("periodic_encode: period vector has wrong dimensionality");
    if (cfg.bandwidth_i < 0) throw ConfigError("periodic_encode: bandwidth must be nonnegative");
    const std::size_t m = coords.size() / k;
    Mat<Scalar> out(static_cast<Eigen::Index>(m), cfg.out_dim());
    const std::vector<double> a = period.a();
    for (std::size_t r = 0; r < m; ++r) {
        for (int j = 0; j < k; ++j) {
            const double c = coords[r * k + j];
            if (!std::isfinite(c)) throw NumericError("periodic_encode: non-finite coordinate");
            const double base = std::numbers::pi * a[j] * c;
            double freq = 1.0;
            for (int l = 0; l <= cfg.bandwidth_i; ++l, freq *= 2.0) {
                const double phase = freq * base;
                const int col = 2 * (l * k + j);
                out(static_cast<Eigen::Index>(r), col) = static_cast<Scalar>(std::cos(phase));
                out(static_cast<Eigen::Index>(r), col + 1) = static_cast<Scalar>(std::sin(phase));
            }
        }
    }
    return out;
}

// Reverse pass of periodic_encode. Accumulates into d_rho (size k) and, when
// non-empty, into d_coords (size m*k).
template <typename Scalar>
void periodic_encode_backward(std::span<const double> coords, const PeriodVector<Scalar>& period,
                              const EncoderConfig& cfg, const Mat<Scalar>& d_encoded, std::span<double> d_rho,
                              std::span<double> d_coords = {}) {
    const int k = cfg.k;
    const std::size_t m = coords.size() / k;
    if (d_encoded.rows() != static_cast<Eigen::Index>(m) || d_encoded.cols() != cfg.out_dim())
        throw ConfigError("periodic_encode_backward: gradient shape mismatch");
    const std::vector<double> a = period.a();
    for (std::size_t r = 0; r < m; ++r) {
        for (int j = 0; j < k; ++j) {
            const double c = coords[r * k + j];
            const double base = std::numbers::pi * a[j] * c;
            double freq = 1.0;
            double d_phase_base = 0.0;  // d loss / d (pi * a_j * c_j)
            for (int l = 0; l <= cfg.bandwidth_i; ++l, freq *= 2.0) {
                const double phase = freq * base;
                const int col = 2 * (l * k + j);
                const double g_cos = static_cast<double>(d_encoded(static_cast<Eigen::Index>(r), col));
                const double g_sin = static_cast<double>(d_encoded(static_cast<Eigen::Index>(r), col + 1));
                d_phase_base += freq * (-std::sin(phase) * g_cos + std::cos(phase) * g_sin);
            }
            // base = pi * exp(rho) * c  =>  d base / d rho = base, d base / d c = pi * a.
            if (!d_rho.empty()) d_rho[j] += d_phase_base * base;
            if (!d_coords.empty()) d_coords[r * k + j] += d_phase_base * std::numbers::pi * a[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Latent random field
// ---------------------------------------------------------------------------

// Discrete toroidal grid of latent vectors, smoothly interpolated in space.
// Corner j along an axis sits at (j - (G-1)/2) * base_spacing * extent_scale;
// the field wraps with period G * (scaled spacing) on every axis.
template <typename Scalar>
struct LatentFieldSpec {
    std::vector<int> grid_dims;          // G_1 .. G_k
    int latent_dim = 5;                  // d
    std::vector<Scalar> values;          // volume(grid_dims) * d, row-major, d innermost
    double base_spacing = 1.0;
    std::vector<double> extent_scale;    // per axis
    double sigma = 0.5;                  // in units of the unscaled grid

    int k() const { return static_cast<int>(grid_dims.size()); }
    std::size_t corner_count() const { return volume(grid_dims); }
    double spacing(int axis) const { return base_spacing * extent_scale[axis]; }

    // Effective softmax temperature in coordinate units. Uses the mean
    // per-axis extent so it scales together with the corner positions.
    double effective_sigma() const {
        double s = 0.0;
        for (double e : extent_scale) s += e;
        return sigma * base_spacing * s / static_cast<double>(extent_scale.size());
    }

    void validate() const {
        if (grid_dims.empty()) throw ConfigError("latent field: empty grid");
        for (int g : grid_dims)
            if (g < 1) throw ConfigError("latent field: grid dims must be positive");
        if (latent_dim < 1) throw ConfigError("latent field: latent dim must be positive");
        if (values.size() != corner_count() * static_cast<std::size_t>(latent_dim))
            throw ConfigError("latent field: value count does not match grid");
        if (extent_scale.size() != grid_dims.size()) throw ConfigError("latent field: extent_scale needs k entries");
        if (!(base_spacing > 0.0)) throw ConfigError("latent field: spacing must be positive");
        for (double e : extent_scale)
            if (!(e > 0.0)) throw ConfigError("latent field: extent_scale must be positive");
        if (!(sigma > 0.0)) throw ConfigError("latent field: sigma must be positive");
    }

    const Scalar* corner(std::size_t flat) const { return values.data() + flat * latent_dim; }
};

template <typename Scalar>
LatentFieldSpec<Scalar> make_latent_field(std::vector<int> grid_dims, int latent_dim, double sigma = 0.5,
                                          double base_spacing = 1.0) {
    LatentFieldSpec<Scalar> s;
    s.grid_dims = std::move(grid_dims);
    s.latent_dim = latent_dim;
    s.values.assign(s.corner_count() * latent_dim, Scalar(0));
    s.base_spacing = base_spacing;
    s.extent_scale.assign(s.grid_dims.size(), 1.0);
    s.sigma = sigma;
    return s;
}

template <typename Scalar>
void fill_gaussian(LatentFieldSpec<Scalar>& spec, Rng& rng) {
    for (auto& v : spec.values) v = static_cast<Scalar>(rng.normal());
}

// Rescale the grid so one latent cell spans one encoding period 2/a per axis.
// Grid values are untouched.
template <typename Scalar, typename PScalar>
LatentFieldSpec<Scalar> scale_latent_grid(LatentFieldSpec<Scalar> spec, const PeriodVector<PScalar>& period,
                                          double extra_scale = 1.0) {
    if (period.k() != spec.k()) throw ConfigError("scale_latent_grid: dimensionality mismatch");
    for (int j = 0; j < spec.k(); ++j) spec.extent_scale[j] = extra_scale * period.period(j) / spec.base_spacing;
    return spec;
}

namespace detail {

// Per-point interpolation stencil: the 2^k enclosing corners, their flat
// indices, signed offsets x - c_i and softmax weights.
struct LatentStencil {
    static constexpr int max_k = 3;
    int k = 0;
    int corners = 0;
    std::array<std::size_t, 8> flat{};
    std::array<std::array<double, max_k>, 8> offset{};  // x - c_i
    std::array<double, 8> dist{};
    std::array<double, 8> weight{};
};

inline double wrap_unit(double t, int g) {
    double w = std::fmod(t, static_cast<double>(g));
    if (w < 0.0) w += g;
    if (w >= g) w -= g;  // fmod of a tiny negative can round up to g
    return w;
}

template <typename Scalar>
LatentStencil latent_stencil(const LatentFieldSpec<Scalar>& spec, const double* x) {
    LatentStencil st;
    st.k = spec.k();
    if (st.k > LatentStencil::max_k) throw ConfigError("latent field supports k <= 3");
    st.corners = 1 << st.k;
    std::array<int, LatentStencil::max_k> j0{}, j1{};
    std::array<double, LatentStencil::max_k> frac{}, h{};
    for (int a = 0; a < st.k; ++a) {
        const int g = spec.grid_dims[a];
        h[a] = spec.spacing(a);
        const double origin = -0.5 * (g - 1) * h[a];
        const double t = wrap_unit((x[a] - origin) / h[a], g);
        int cell = static_cast<int>(std::floor(t));
        if (cell >= g) cell = g - 1;
        j0[a] = cell;
        j1[a] = (cell + 1) % g;
        frac[a] = t - cell;
    }
    const double inv_sigma = 1.0 / spec.effective_sigma();
    double max_e = -1e300;
    for (int c = 0; c < st.corners; ++c) {
        std::size_t flat = 0;
        double d2 = 0.0;
        for (int a = 0; a < st.k; ++a) {
            const bool upper = (c >> (st.k - 1 - a)) & 1;
            flat = flat * static_cast<std::size_t>(spec.grid_dims[a]) + (upper ? j1[a] : j0[a]);
            const double off = upper ? (frac[a] - 1.0) * h[a] : frac[a] * h[a];
            st.offset[c][a] = off;
            d2 += off * off;
        }
        st.flat[c] = flat;
        st.dist[c] = std::sqrt(d2);
        st.weight[c] = -st.dist[c] * inv_sigma;
        max_e = std::max(max_e, st.weight[c]);
    }
    double z = 0.0;
    for (int c = 0; c < st.corners; ++c) z += (st.weight[c] = std::exp(st.weight[c] - max_e));
    for (int c = 0; c < st.corners; ++c) st.weight[c] /= z;
    return st;
}

}  // namespace detail

// Interpolation weights of the 2^k enclosing corners at one point (for
// inspection and tests).
template <typename Scalar>
std::vector<double> latent_weights(const LatentFieldSpec<Scalar>& spec, std::span<const double> x) {
    spec.validate();
    const auto st = detail::latent_stencil(spec, x.data());
    return {st.weight.begin(), st.weight.begin() + st.corners};
}

// f(x) = sum_i w_i(x) f_z(c_i), w = softmax(-|x - c_i| / sigma) over the
// enclosing cell corners. Coordinates outside the grid wrap around.
template <typename Scalar>
Mat<Scalar> latent_field_eval(const LatentFieldSpec<Scalar>& spec, std::span<const double> coords) {
    spec.validate();
    const int k = spec.k();
    const int d = spec.latent_dim;
    const std::size_t m = coords.size() / k;
    Mat<Scalar> out = Mat<Scalar>::Zero(static_cast<Eigen::Index>(m), d);
    for (std::size_t r = 0; r < m; ++r) {
        const double* x = coords.data() + r * k;
        for (int a = 0; a < k; ++a)
            if (!std::isfinite(x[a])) throw NumericError("latent_field_eval: non-finite coordinate");
        const auto st = detail::latent_stencil(spec, x);
        for (int e = 0; e < d; ++e) {
            double acc = 0.0;
            for (int c = 0; c < st.corners; ++c) acc += st.weight[c] * static_cast<double>(spec.corner(st.flat[c])[e]);
            out(static_cast<Eigen::Index>(r), e) = static_cast<Scalar>(acc);
        }
    }
    return out;
}

// Reverse pass of latent_field_eval. Accumulates into d_values (same layout as
// spec.values) and, when non-empty, into d_coords.
template <typename Scalar>
void latent_field_backward(const LatentFieldSpec<Scalar>& spec, std::span<const double> coords,
                           const Mat<Scalar>& d_out, std::span<double> d_values, std::span<double> d_coords = {}) {
    const int k = spec.k();
    const int d = spec.latent_dim;
    const std::size_t m = coords.size() / k;
    if (d_out.rows() != static_cast<Eigen::Index>(m) || d_out.cols() != d)
        throw ConfigError("latent_field_backward: gradient shape mismatch");
    const double inv_sigma = 1.0 / spec.effective_sigma();
    for (std::size_t r = 0; r < m; ++r) {
        const auto st = detail::latent_stencil(spec, coords.data() + r * k);
        std::array<double, 8> d_w{};
        for (int c = 0; c < st.corners; ++c) {
            const Scalar* v = spec.corner(st.flat[c]);
            for (int e = 0; e < d; ++e) {
                const double g = static_cast<double>(d_out(static_cast<Eigen::Index>(r), e));
                if (!d_values.empty()) d_values[st.flat[c] * d + e] += st.weight[c] * g;
                d_w[c] += g * static_cast<double>(v[e]);
            }
        }
        if (d_coords.empty()) continue;
        double mean_dw = 0.0;
        for (int c = 0; c < st.corners; ++c) mean_dw += st.weight[c] * d_w[c];
        for (int c = 0; c < st.corners; ++c) {
            const double d_logit = st.weight[c] * (d_w[c] - mean_dw);
            if (st.dist[c] <= 0.0) continue;  // subgradient 0 at a corner
            const double d_dist = -d_logit * inv_sigma;
            for (int a = 0; a < k; ++a) d_coords[r * k + a] += d_dist * st.offset[c][a] / st.dist[c];
        }
    }
}

// Cyclically shift latent values by `shift` cells per axis:
// rolled[j] = values[j - shift].
template <typename Scalar>
LatentFieldSpec<Scalar> roll_latent_grid(const LatentFieldSpec<Scalar>& spec, const std::vector<int>& shift) {
    LatentFieldSpec<Scalar> out = spec;
    const int k = spec.k();
    std::vector<int> src(k);
    std::size_t flat_dst = 0;
    for_each_index(spec.grid_dims, [&](const std::vector<int>& pos) {
        for (int a = 0; a < k; ++a) {
            const int g = spec.grid_dims[a];
            src[a] = ((pos[a] - shift[a]) % g + g) % g;
        }
        const std::size_t flat_src = flat_index(spec.grid_dims, src);
        std::copy_n(spec.corner(flat_src), spec.latent_dim, out.values.data() + flat_dst * spec.latent_dim);
        ++flat_dst;
    });
    return out;
}

}  // namespace ipfn

#endif
