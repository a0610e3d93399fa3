#ifndef IPFN_SYNTH_HPP
#define IPFN_SYNTH_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ipfn/data.hpp"
#include "ipfn/error.hpp"
#include "ipfn/fieldmath.hpp"
#include "ipfn/model.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"

namespace ipfn {

// Guidance supplied at inference: one value per output position.
struct GuidanceRequest {
    enum class Mode { none, scalar, map, ramp };
    Mode mode = Mode::none;
    double value = 0.0;    // scalar
    Raster map;            // k-dim single-channel grid stretched over the output, multilinear
    int ramp_axis = 0;     // ramp: linear from ramp_from at index 0 to ramp_to at the last index
    double ramp_from = 0.0, ramp_to = 1.0;

    static GuidanceRequest scalar(double v) {
        GuidanceRequest g;
        g.mode = Mode::scalar;
        g.value = v;
        return g;
    }
    static GuidanceRequest ramp(int axis, double from, double to) {
        GuidanceRequest g;
        g.mode = Mode::ramp;
        g.ramp_axis = axis;
        g.ramp_from = from;
        g.ramp_to = to;
        return g;
    }
    static GuidanceRequest grid(Raster m) {
        GuidanceRequest g;
        g.mode = Mode::map;
        g.map = std::move(m);
        return g;
    }
};

struct SynthesisRequest {
    std::vector<int> out_dims;
    std::uint64_t seed = 0;
    double latent_extent = 1.0;                    // multiplies the latent grid extent
    std::optional<std::vector<double>> constant_latent;
    GuidanceRequest guidance;
    std::vector<int> chunk_dims;                   // empty: 256 per axis (2D), 64 per axis (3D)
    std::vector<double> center;                    // post-scale offset; empty: origin
    int threads = 0;                               // 0: IPFN_THREADS, else 1
};

// Worker count: explicit request, else IPFN_THREADS, else 1; capped by the
// hardware and by IPFN_THREADS when set.
inline int resolve_threads(int requested) {
    int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    int env = 0;
    if (const char* s = std::getenv("IPFN_THREADS")) env = std::atoi(s);
    if (env > 0) cap = std::min(cap, env);
    const int want = requested > 0 ? requested : (env > 0 ? env : 1);
    return std::clamp(want, 1, cap);
}

inline std::vector<int> default_chunk_dims(int k) { return std::vector<int>(k, k == 2 ? 256 : 64); }

// ---------------------------------------------------------------------------
// Synthesis context
// ---------------------------------------------------------------------------

// Everything fixed for one output: the latent realization, guidance source and
// coordinate frame. Read-only once built, so chunks may run concurrently.
template <typename Scalar>
struct SynthesisContext {
    const Model<Scalar>* model = nullptr;
    std::vector<int> out_dims;
    std::vector<double> center;  // pre-scale
    LatentFieldSpec<Scalar> latent;
    std::optional<std::vector<double>> constant_latent;
    GuidanceRequest guidance;
    bool conditional = false;

    static constexpr std::size_t block_rows = 1024;

    int k() const { return model->arch.k; }

    double coordinate(int axis, int idx) const {
        return grid_coordinate(idx, out_dims[axis], model->mapping.scale_s, center[axis], model->mapping.spacing);
    }

    double guidance_at(const int* idx) const {
        switch (guidance.mode) {
            case GuidanceRequest::Mode::none: return model->guidance_mean;
            case GuidanceRequest::Mode::scalar: return guidance.value;
            case GuidanceRequest::Mode::ramp: {
                const int n = out_dims[guidance.ramp_axis];
                const double t = n > 1 ? static_cast<double>(idx[guidance.ramp_axis]) / (n - 1) : 0.5;
                return guidance.ramp_from + t * (guidance.ramp_to - guidance.ramp_from);
            }
            case GuidanceRequest::Mode::map: return sample_map(idx);
        }
        return 0.0;
    }

    // Multilinear lookup with the map's corners pinned to the output corners.
    double sample_map(const int* idx) const {
        const int kk = k();
        std::array<int, 3> lo{}, hi{};
        std::array<double, 3> f{};
        for (int a = 0; a < kk; ++a) {
            const int m = guidance.map.dims[a];
            const int n = out_dims[a];
            const double u = (n > 1 && m > 1) ? static_cast<double>(idx[a]) * (m - 1) / (n - 1) : 0.0;
            lo[a] = std::min(static_cast<int>(std::floor(u)), m - 1);
            hi[a] = std::min(lo[a] + 1, m - 1);
            f[a] = u - lo[a];
        }
        double out = 0.0;
        std::vector<int> pos(kk);
        for (int corner = 0; corner < (1 << kk); ++corner) {
            double w = 1.0;
            for (int a = 0; a < kk; ++a) {
                const bool up = (corner >> a) & 1;
                pos[a] = up ? hi[a] : lo[a];
                w *= up ? f[a] : 1.0 - f[a];
            }
            if (w != 0.0) out += w * guidance.map.values[flat_index(guidance.map.dims, pos)];
        }
        return out;
    }
};

template <typename Scalar>
void validate_request(const Model<Scalar>& m, const SynthesisRequest& req) {
    const int k = m.arch.k;
    if (static_cast<int>(req.out_dims.size()) != k)
        throw ConfigError("synthesis: checkpoint is " + std::to_string(k) + "D but " +
                          std::to_string(req.out_dims.size()) + " output dims were requested");
    for (int d : req.out_dims)
        if (d < 1) throw ConfigError("synthesis: output dims must be positive");
    if (!req.chunk_dims.empty()) {
        if (static_cast<int>(req.chunk_dims.size()) != k) throw ConfigError("synthesis: chunk dims need k entries");
        for (int a = 0; a < k; ++a)
            if (req.chunk_dims[a] < 1 || req.chunk_dims[a] > req.out_dims[a])
                throw ConfigError("synthesis: chunk dims must lie in [1, out_dims]");
    }
    if (!req.center.empty() && static_cast<int>(req.center.size()) != k)
        throw ConfigError("synthesis: center needs k entries");
    if (!(req.latent_extent > 0.0) || !std::isfinite(req.latent_extent))
        throw ConfigError("synthesis: latent extent must be positive");
    if (req.constant_latent && static_cast<int>(req.constant_latent->size()) != m.arch.latent_dim)
        throw ConfigError("synthesis: constant latent needs " + std::to_string(m.arch.latent_dim) + " entries");
    const bool conditional = m.arch.guidance != GuidanceKind::none;
    const auto& g = req.guidance;
    if (!conditional && g.mode != GuidanceRequest::Mode::none)
        throw ConfigError("synthesis: guidance given for an unconditional checkpoint");
    if (g.mode == GuidanceRequest::Mode::ramp && (g.ramp_axis < 0 || g.ramp_axis >= k))
        throw ConfigError("synthesis: ramp axis out of range");
    if (g.mode == GuidanceRequest::Mode::map) {
        if (g.map.k() != k || g.map.channels != 1) throw ConfigError("synthesis: guidance map must be a k-dim scalar grid");
        if (g.map.values.size() != g.map.points()) throw ConfigError("synthesis: guidance map size mismatch");
        for (float v : g.map.values)
            if (!std::isfinite(v)) throw ConfigError("synthesis: guidance map holds non-finite values");
    }
    if (g.mode == GuidanceRequest::Mode::scalar && !std::isfinite(g.value))
        throw ConfigError("synthesis: guidance value must be finite");
}

// Fresh latent grid drawn from the seed, large enough that the output does
// not wrap around the torus, scaled to one period per cell times `extent`.
template <typename Scalar>
LatentFieldSpec<Scalar> inference_latent(const Model<Scalar>& m, const std::vector<int>& out_dims, std::uint64_t seed,
                                         double extent) {
    std::vector<int> grid = m.arch.latent_grid;
    for (int a = 0; a < m.arch.k; ++a) {
        const double span = out_dims[a] * m.mapping.pixel_step();
        const double cell = extent * m.period.period(a);
        grid[a] = std::max(grid[a], static_cast<int>(std::ceil(span / cell)) + 2);
    }
    auto spec = make_latent_field<Scalar>(grid, m.arch.latent_dim, m.arch.latent_sigma, m.latent.base_spacing);
    Rng rng(seed);
    fill_gaussian(spec, rng);
    return m.scaled_latent(spec, extent);
}

template <typename Scalar>
SynthesisContext<Scalar> make_context(const Model<Scalar>& m, const SynthesisRequest& req) {
    validate_request(m, req);
    SynthesisContext<Scalar> ctx;
    ctx.model = &m;
    ctx.out_dims = req.out_dims;
    ctx.center.assign(m.arch.k, 0.0);
    for (std::size_t a = 0; a < req.center.size(); ++a) ctx.center[a] = req.center[a] / m.mapping.scale_s;
    ctx.constant_latent = req.constant_latent;
    if (!req.constant_latent) ctx.latent = inference_latent(m, req.out_dims, req.seed, req.latent_extent);
    ctx.guidance = req.guidance;
    ctx.conditional = m.arch.guidance != GuidanceKind::none;
    return ctx;
}

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

// Evaluates the field at `coords` (n x k) with per-row guidance, writing n x C
// unit-range values. Rows go through the network in zero-padded blocks of a
// fixed size so every GEMM has the same shape and each row's result does not
// depend on how the caller partitions the points.
template <typename Scalar>
void evaluate_points(const SynthesisContext<Scalar>& ctx, std::span<const double> coords,
                     std::span<const double> guidance, Mat<Scalar>& out) {
    const Model<Scalar>& m = *ctx.model;
    const int k = m.arch.k;
    const std::size_t n = coords.size() / k;
    const std::size_t R = SynthesisContext<Scalar>::block_rows;
    out.resize(static_cast<Eigen::Index>(n), m.arch.channels);
    std::vector<double> block(R * k);
    Mat<Scalar> lat(static_cast<Eigen::Index>(R), m.arch.latent_dim);
    Mat<Scalar> gcol(static_cast<Eigen::Index>(R), 1);
    for (std::size_t start = 0; start < n; start += R) {
        const std::size_t rows = std::min(R, n - start);
        std::fill(block.begin(), block.end(), 0.0);
        std::copy_n(coords.begin() + start * k, rows * k, block.begin());
        const Mat<Scalar> enc = periodic_encode(std::span<const double>(block), m.period, m.arch.encoder());
        if (ctx.constant_latent) {
            for (int e = 0; e < m.arch.latent_dim; ++e) lat.col(e).setConstant(static_cast<Scalar>((*ctx.constant_latent)[e]));
        } else {
            lat = latent_field_eval(ctx.latent, std::span<const double>(block));
        }
        const Mat<Scalar>* gptr = nullptr;
        if (ctx.conditional) {
            gcol.setZero();
            for (std::size_t r = 0; r < rows; ++r) gcol(static_cast<Eigen::Index>(r), 0) = static_cast<Scalar>(guidance[start + r]);
            gptr = &gcol;
        }
        const Mat<Scalar> y = generator_forward(m.generator, enc, lat, gptr);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(rows)) =
            y.topRows(static_cast<Eigen::Index>(rows));
    }
}

// Evaluates the box [origin, origin + dims) of the output grid and writes the
// values (exemplar units) into `dst` at their global positions.
template <typename Scalar>
void evaluate_region(const SynthesisContext<Scalar>& ctx, const std::vector<int>& origin, const std::vector<int>& dims,
                     Raster& dst) {
    const int k = ctx.k();
    const std::size_t R = SynthesisContext<Scalar>::block_rows;
    std::vector<double> coords;
    std::vector<double> g;
    std::vector<std::size_t> targets;
    coords.reserve(R * k);
    Mat<Scalar> values;
    std::vector<int> pos(k), global(k);
    std::size_t done = 0;
    auto flush = [&] {
        evaluate_points(ctx, std::span<const double>(coords), std::span<const double>(g), values);
        const Model<Scalar>& m = *ctx.model;
        for (std::size_t r = 0; r < targets.size(); ++r)
            for (int c = 0; c < m.arch.channels; ++c)
                dst.values[targets[r] * dst.channels + c] = static_cast<float>(
                    m.value_offset + m.value_scale * static_cast<double>(values(static_cast<Eigen::Index>(r), c)));
        coords.clear();
        g.clear();
        targets.clear();
    };
    for_each_index(dims, [&](const std::vector<int>& q) {
        for (int a = 0; a < k; ++a) {
            global[a] = origin[a] + q[a];
            coords.push_back(ctx.coordinate(a, global[a]));
        }
        if (ctx.conditional) g.push_back(ctx.guidance_at(global.data()));
        targets.push_back(flat_index(dst.dims, global));
        if (++done % R == 0) flush();
    });
    if (!targets.empty()) flush();
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

template <typename Scalar>
Raster synthesize_with_context(const SynthesisContext<Scalar>& ctx, std::vector<int> chunk_dims, int threads,
                               const ProgressFn& progress = {}) {
    const int k = ctx.k();
    if (chunk_dims.empty()) chunk_dims = default_chunk_dims(k);
    for (int a = 0; a < k; ++a) chunk_dims[a] = std::min(chunk_dims[a], ctx.out_dims[a]);
    Raster out(ctx.out_dims, ctx.model->arch.channels);

    std::vector<int> grid(k);
    for (int a = 0; a < k; ++a) grid[a] = (ctx.out_dims[a] + chunk_dims[a] - 1) / chunk_dims[a];
    std::vector<std::vector<int>> chunks;
    for_each_index(grid, [&](const std::vector<int>& c) { chunks.push_back(c); });

    std::atomic<std::size_t> next{0}, finished{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i = next++; i < chunks.size(); i = next++) {
            try {
                std::vector<int> origin(k), dims(k);
                for (int a = 0; a < k; ++a) {
                    origin[a] = chunks[i][a] * chunk_dims[a];
                    dims[a] = std::min(chunk_dims[a], ctx.out_dims[a] - origin[a]);
                }
                evaluate_region(ctx, origin, dims, out);
                const std::size_t f = ++finished;
                if (progress) {
                    std::lock_guard lock(mu);
                    progress(f, chunks.size());
                }
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = chunks.size();
            }
        }
    };
    const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(chunks.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

// Arbitrary-size output in exemplar units (images in [0,1], SDF in distance units).
template <typename Scalar>
Raster synthesize(const Model<Scalar>& m, const SynthesisRequest& req, const ProgressFn& progress = {}) {
    const auto ctx = make_context(m, req);
    return synthesize_with_context(ctx, req.chunk_dims, req.threads, progress);
}

// Evaluates one sub-box of the output defined by `req` on its own.
template <typename Scalar>
Raster synthesize_region(const Model<Scalar>& m, const SynthesisRequest& req, const std::vector<int>& origin,
                         const std::vector<int>& dims) {
    const auto ctx = make_context(m, req);
    for (int a = 0; a < ctx.k(); ++a)
        if (origin[a] < 0 || dims[a] < 1 || origin[a] + dims[a] > req.out_dims[a])
            throw ConfigError("synthesis: region outside the output");
    Raster region(dims, m.arch.channels);
    // Global coordinates, local storage order.
    const int k = ctx.k();
    std::vector<double> coords, g;
    for_each_index(dims, [&](const std::vector<int>& q) {
        std::vector<int> global(k);
        for (int a = 0; a < k; ++a) {
            global[a] = origin[a] + q[a];
            coords.push_back(ctx.coordinate(a, global[a]));
        }
        if (ctx.conditional) g.push_back(ctx.guidance_at(global.data()));
    });
    Mat<Scalar> values;
    evaluate_points(ctx, std::span<const double>(coords), std::span<const double>(g), values);
    for (std::size_t r = 0; r < volume(dims); ++r)
        for (int c = 0; c < m.arch.channels; ++c)
            region.values[r * region.channels + c] = static_cast<float>(
                m.value_offset + m.value_scale * static_cast<double>(values(static_cast<Eigen::Index>(r), c)));
    return region;
}

// Latent extent control: a request identical to `req` except for the extent.
inline SynthesisRequest set_latent_extent(SynthesisRequest req, double scale) {
    if (!(scale > 0.0)) throw ConfigError("latent extent must be positive");
    req.latent_extent = scale;
    return req;
}

// ---------------------------------------------------------------------------
// Seamless tiles
// ---------------------------------------------------------------------------

struct TileRequest {
    std::vector<int> periods;                      // periods per axis, >= 1
    std::vector<double> constant_latent;           // empty: zero vector
    std::optional<double> guidance;                // conditional models; default: training mean
    double samples_per_period = 0.0;               // 0: the training sample pitch
};

// Constant-latent tile spanning exactly periods * (2/a) per axis. Sample i of
// n sits at i * span / n, so the last sample coincides with the wrapped-around
// first one (n + 1 samples per axis).
template <typename Scalar>
Raster seamless_tile(const Model<Scalar>& m, const TileRequest& req) {
    const int k = m.arch.k;
    if (static_cast<int>(req.periods.size()) != k) throw ConfigError("tile: periods need k entries");
    for (int p : req.periods)
        if (p < 1) throw ConfigError("tile: periods must be positive integers");
    std::vector<double> z = req.constant_latent.empty() ? std::vector<double>(m.arch.latent_dim, 0.0) : req.constant_latent;
    if (static_cast<int>(z.size()) != m.arch.latent_dim)
        throw ConfigError("tile: constant latent needs " + std::to_string(m.arch.latent_dim) + " entries");
    const bool conditional = m.arch.guidance != GuidanceKind::none;
    if (!conditional && req.guidance) throw ConfigError("tile: guidance given for an unconditional checkpoint");

    std::vector<int> n(k), dims(k);
    std::vector<double> span(k);
    for (int a = 0; a < k; ++a) {
        const double per = req.samples_per_period > 0.0 ? req.samples_per_period
                                                        : m.mapping.period_in_samples(m.period.period(a));
        n[a] = std::max(1, static_cast<int>(std::lround(req.periods[a] * per)));
        dims[a] = n[a] + 1;
        span[a] = req.periods[a] * m.period.period(a);
    }
    if (volume(dims) > (std::size_t(1) << 28)) throw ConfigError("tile: too many samples");

    SynthesisContext<Scalar> ctx;
    ctx.model = &m;
    ctx.out_dims = dims;
    ctx.center.assign(k, 0.0);
    ctx.constant_latent = z;
    ctx.conditional = conditional;
    if (conditional) ctx.guidance = GuidanceRequest::scalar(req.guidance.value_or(m.guidance_mean));

    std::vector<double> coords;
    coords.reserve(volume(dims) * k);
    for_each_index(dims, [&](const std::vector<int>& q) {
        for (int a = 0; a < k; ++a) coords.push_back(q[a] * span[a] / n[a]);
    });
    std::vector<double> g(conditional ? volume(dims) : 0, ctx.guidance.value);
    Mat<Scalar> values;
    evaluate_points(ctx, std::span<const double>(coords), std::span<const double>(g), values);
    Raster out(dims, m.arch.channels);
    for (std::size_t r = 0; r < volume(dims); ++r)
        for (int c = 0; c < m.arch.channels; ++c)
            out.values[r * out.channels + c] = static_cast<float>(
                m.value_offset + m.value_scale * static_cast<double>(values(static_cast<Eigen::Index>(r), c)));
    return out;
}

// Drops the duplicated last sample per axis so copies can be laid side by side.
inline Raster tile_unit(const Raster& tile) {
    std::vector<int> dims = tile.dims;
    for (auto& d : dims) d = std::max(1, d - 1);
    return crop(tile, std::vector<int>(tile.k(), 0), dims);
}

}  // namespace ipfn

#endif
