#ifndef IPFN_SYNTHETIC_HPP
#define IPFN_SYNTHETIC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "ipfn/data.hpp"
#include "ipfn/rng.hpp"

namespace ipfn {

// Product-of-sines pattern with period T pixels along both axes plus uniform
// noise: v = (1 - noise) * (0.5 + 0.5 sin(2 pi x / T) sin(2 pi y / T)) + noise * u.
inline Exemplar make_stripe_exemplar(int height, int width, int channels, double period_px, double noise, Rng& rng) {
    if (height < 1 || width < 1 || channels < 1) throw ConfigError("stripe exemplar: dims must be positive");
    if (!(period_px > 0.0) || noise < 0.0 || noise > 1.0) throw ConfigError("stripe exemplar: bad period or noise");
    Raster r({height, width}, channels);
    const double w = 2.0 * std::numbers::pi / period_px;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double v = 0.5 + 0.5 * std::sin(w * x) * std::sin(w * y);
            for (int c = 0; c < channels; ++c)
                r.at(static_cast<std::size_t>(y) * width + x, c) =
                    static_cast<float>(std::clamp((1.0 - noise) * v + noise * rng.uniform(), 0.0, 1.0));
        }
    return make_image_exemplar(std::move(r));
}

// Signed distance to a cubic lattice of spheres (period P voxels, radius R),
// negative inside. A stand-in for a periodic foam volume.
inline Raster make_sphere_lattice_sdf(int n, double period, double radius) {
    if (n < 1 || !(period > 0.0) || !(radius > 0.0)) throw ConfigError("sphere lattice: bad parameters");
    Raster r({n, n, n}, 1);
    std::size_t i = 0;
    for_each_index(r.dims, [&](const std::vector<int>& p) {
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
            double t = std::fmod(p[a] + 0.5, period);
            t = std::min(t, period - t);
            d2 += t * t;
        }
        r.values[i++] = static_cast<float>(std::sqrt(d2) - radius);
    });
    return r;
}

// Porous volume from superposed spheres at random centres with random radii,
// the union's signed distance with periodic wrap. Random clustering gives
// patches a spread of densities, which density guidance needs.
inline Raster make_porous_sdf(int n, int spheres, double r_min, double r_max, Rng& rng) {
    if (n < 1 || spheres < 1 || !(r_min > 0.0) || r_max < r_min) throw ConfigError("porous sdf: bad parameters");
    std::vector<std::array<double, 4>> balls(spheres);
    for (auto& b : balls) b = {rng.uniform(0.0, n), rng.uniform(0.0, n), rng.uniform(0.0, n), rng.uniform(r_min, r_max)};
    Raster r({n, n, n}, 1);
    std::size_t i = 0;
    for_each_index(r.dims, [&](const std::vector<int>& p) {
        double best = 1e300;
        for (const auto& b : balls) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                double t = std::abs(p[a] + 0.5 - b[a]);
                t = std::min(t, n - t);
                d2 += t * t;
            }
            best = std::min(best, std::sqrt(d2) - b[3]);
        }
        r.values[i++] = static_cast<float>(best);
    });
    return r;
}

}  // namespace ipfn

#endif
