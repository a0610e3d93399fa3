#ifndef IPFN_METRICS_HPP
#define IPFN_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipfn/data.hpp"
#include "ipfn/error.hpp"
#include "ipfn/model.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"
#include "ipfn/training.hpp"

namespace ipfn {

// ---------------------------------------------------------------------------
// Seam error
// ---------------------------------------------------------------------------

struct SeamError {
    double boundary_mad = 0.0;           // averaged over axes
    double interior_gradient_mad = 0.0;  // mean |adjacent difference| over all axes
    std::vector<double> boundary_per_axis;

    bool seamless() const { return boundary_mad <= interior_gradient_mad; }
};

// Compares the first and last slice along every axis against the typical
// step between neighbouring samples inside the tile.
inline SeamError seam_error(const Raster& tile) {
    const int k = tile.k();
    for (int d : tile.dims)
        if (d < 2) throw ConfigError("seam_error: tile needs at least 2 samples per axis");
    const int C = tile.channels;
    SeamError out;
    double interior_sum = 0.0;
    std::size_t interior_n = 0;
    std::vector<int> nb(k);
    for (int a = 0; a < k; ++a) {
        double sum = 0.0;
        std::size_t n = 0;
        for_each_index(tile.dims, [&](const std::vector<int>& p) {
            const std::size_t i = flat_index(tile.dims, p);
            if (p[a] + 1 < tile.dims[a]) {
                nb = p;
                ++nb[a];
                const std::size_t j = flat_index(tile.dims, nb);
                for (int c = 0; c < C; ++c)
                    interior_sum += std::abs(static_cast<double>(tile.values[i * C + c]) - tile.values[j * C + c]);
                interior_n += C;
            }
            if (p[a] == 0) {
                nb = p;
                nb[a] = tile.dims[a] - 1;
                const std::size_t j = flat_index(tile.dims, nb);
                for (int c = 0; c < C; ++c) sum += std::abs(static_cast<double>(tile.values[i * C + c]) - tile.values[j * C + c]);
                n += C;
            }
        });
        out.boundary_per_axis.push_back(n ? sum / n : 0.0);
    }
    for (double b : out.boundary_per_axis) out.boundary_mad += b / k;
    out.interior_gradient_mad = interior_n ? interior_sum / interior_n : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Periodicity error
// ---------------------------------------------------------------------------

// Field under test: n x k coordinates in, n x C values out.
using FieldFn = std::function<Mat<float>(std::span<const double>)>;

// Max |f(c) - f(c + period_j e_j)| over random points and all axes.
inline double periodicity_error(const FieldFn& f, const std::vector<double>& periods, int n_points, std::uint64_t seed = 0,
                                double coord_range = 8.0) {
    if (n_points <= 0) return 0.0;
    const int k = static_cast<int>(periods.size());
    Rng rng(seed);
    std::vector<double> coords(static_cast<std::size_t>(n_points) * k);
    for (auto& c : coords) c = rng.uniform(-coord_range, coord_range);
    const Mat<float> base = f(coords);
    double worst = 0.0;
    for (int a = 0; a < k; ++a) {
        std::vector<double> shifted = coords;
        for (int i = 0; i < n_points; ++i) shifted[static_cast<std::size_t>(i) * k + a] += periods[a];
        const Mat<float> moved = f(shifted);
        worst = std::max(worst, static_cast<double>((moved - base).cwiseAbs().maxCoeff()));
    }
    return worst;
}

// Same on a model under a random constant latent (and mean guidance).
template <typename Scalar>
double periodicity_error(const Model<Scalar>& m, int n_points, std::uint64_t seed = 0) {
    if (n_points <= 0) return 0.0;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<double> z(m.arch.latent_dim);
    for (auto& v : z) v = rng.normal();
    std::vector<double> periods(m.arch.k);
    for (int a = 0; a < m.arch.k; ++a) periods[a] = m.period.period(a);
    const bool conditional = m.arch.guidance != GuidanceKind::none;
    FieldFn f = [&](std::span<const double> coords) {
        const auto n = static_cast<Eigen::Index>(coords.size() / m.arch.k);
        Mat<Scalar> g = Mat<Scalar>::Constant(n, 1, static_cast<Scalar>(m.guidance_mean));
        const Mat<Scalar> y = evaluate_field_constant(m, coords, z, conditional ? &g : nullptr);
        return Mat<float>(y.template cast<float>());
    };
    return periodicity_error(f, periods, n_points, seed);
}

// ---------------------------------------------------------------------------
// Diversity
// ---------------------------------------------------------------------------

inline constexpr int histogram_bins = 64;

// Per-channel normalized histograms over [lo, hi], concatenated.
inline std::vector<double> channel_histograms(const Raster& r, double lo, double hi, int bins = histogram_bins) {
    const int C = r.channels;
    std::vector<double> h(static_cast<std::size_t>(C) * bins, 0.0);
    const std::size_t n = r.points();
    if (n == 0) return h;
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < C; ++c) {
            const double u = (r.values[i * C + c] - lo) / (hi - lo);
            const int b = std::clamp(static_cast<int>(std::floor(u * bins)), 0, bins - 1);
            h[static_cast<std::size_t>(c) * bins + b] += 1.0 / static_cast<double>(n);
        }
    return h;
}

// Mean pairwise L1 distance between histogram descriptors, averaged over
// channels so each pair lies in [0, 2]. Range defaults to [0, 1].
inline double diversity_score(const std::vector<Raster>& outputs, double lo = 0.0, double hi = 1.0) {
    if (outputs.size() < 2) throw UsageError("diversity_score needs at least 2 outputs");
    if (!(hi > lo)) throw UsageError("diversity_score: empty value range");
    for (const auto& o : outputs)
        if (o.dims != outputs[0].dims || o.channels != outputs[0].channels)
            throw UsageError("diversity_score: outputs must share one shape");
    std::vector<std::vector<double>> h;
    for (const auto& o : outputs) h.push_back(channel_histograms(o, lo, hi));
    const int C = outputs[0].channels;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < h.size(); ++i)
        for (std::size_t j = i + 1; j < h.size(); ++j) {
            double d = 0.0;
            for (std::size_t b = 0; b < h[i].size(); ++b) d += std::abs(h[i][b] - h[j][b]);
            total += d / C;
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct TraceSummary {
    std::size_t count = 0;
    double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0, last = 0.0;
};

inline TraceSummary summarize_trace(std::span<const double> xs) {
    TraceSummary s;
    s.count = xs.size();
    if (xs.empty()) return s;
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    s.last = xs.back();
    for (double x : xs) s.mean += x / static_cast<double>(xs.size());
    for (double x : xs) s.stddev += (x - s.mean) * (x - s.mean) / static_cast<double>(xs.size());
    s.stddev = std::sqrt(s.stddev);
    return s;
}

struct MetricReport {
    SeamError seam;
    double periodicity_error = 0.0;
    double diversity = 0.0;
    int n_seeds = 0;
    TraceSummary wasserstein;
    std::vector<double> learned_period_samples;
};

inline nlohmann::json to_json(const TraceSummary& s) {
    return {{"count", s.count}, {"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}, {"last", s.last}};
}

inline nlohmann::json to_json(const MetricReport& r) {
    return {{"seam_error",
             {{"boundary_mad", r.seam.boundary_mad},
              {"interior_gradient_mad", r.seam.interior_gradient_mad},
              {"boundary_per_axis", r.seam.boundary_per_axis},
              {"seamless", r.seam.seamless()}}},
            {"periodicity_error", r.periodicity_error},
            {"diversity", r.diversity},
            {"n_seeds", r.n_seeds},
            {"wasserstein_trace", to_json(r.wasserstein)},
            {"learned_period_samples", r.learned_period_samples}};
}

}  // namespace ipfn

#endif
