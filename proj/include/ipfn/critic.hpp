#ifndef IPFN_CRITIC_HPP
#define IPFN_CRITIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ipfn/error.hpp"
#include "ipfn/params.hpp"
#include "ipfn/rng.hpp"
#include "ipfn/tensor.hpp"

namespace ipfn {

// DCGAN-style patch critic: stride-2 convolutions (kernel 4, padding 1) with
// leaky ReLU, followed by one affine map to an unbounded scalar score. The
// same code handles 2D and 3D patches.
struct CriticConfig {
    int k = 2;
    std::vector<int> patch;   // spatial dims of the training patch
    int in_channels = 3;      // exemplar channels (+1 when conditional)
    int base_width = 64;
    int layers = 4;
    double leaky_slope = 0.2;

    static constexpr int kernel = 4;

    int width(int layer) const { return base_width << layer; }
    int taps() const {
        int t = 1;
        for (int a = 0; a < k; ++a) t *= kernel;
        return t;
    }
    std::vector<int> spatial(int layer) const {  // input dims of `layer`; layer == layers gives the final map
        std::vector<int> s = patch;
        for (auto& d : s) d >>= layer;
        return s;
    }
    int final_features() const { return static_cast<int>(volume(spatial(layers))) * width(layers - 1); }

    void validate() const {
        if (k != 2 && k != 3) throw ConfigError("critic: k must be 2 or 3");
        if (static_cast<int>(patch.size()) != k) throw ConfigError("critic: patch needs k dims");
        if (layers < 1) throw ConfigError("critic: needs at least one conv layer");
        if (base_width < 1 || in_channels < 1) throw ConfigError("critic: widths must be positive");
        for (int d : patch)
            if (d < 1 || d % (1 << layers) != 0)
                throw ConfigError("critic: patch dim " + std::to_string(d) + " not divisible by 2^" +
                                  std::to_string(layers));
    }
};

// Default depth: log2(patch) - 2 layers clamped to 4..5, never shrinking the
// final map below one cell.
inline int default_critic_layers(const std::vector<int>& patch) {
    int smallest = patch.front();
    for (int d : patch) smallest = std::min(smallest, d);
    int log2 = 0;
    while ((2 << log2) <= smallest) ++log2;
    return std::max(1, std::min(log2, std::clamp(log2 - 2, 4, 5)));
}

template <typename Scalar>
struct CriticParams {
    CriticConfig config;
    std::vector<Mat<Scalar>> conv_weights;  // out x (taps * in), taps outer
    std::vector<Vec<Scalar>> conv_biases;
    Vec<Scalar> head_weight;                // final_features
    Scalar head_bias = Scalar(0);

    ParamVector<Scalar> view() {
        ParamVector<Scalar> pv;
        for (std::size_t l = 0; l < conv_weights.size(); ++l) {
            auto& w = conv_weights[l];
            auto& b = conv_biases[l];
            pv.add("critic.conv" + std::to_string(l) + ".weight", {static_cast<int>(w.rows()), static_cast<int>(w.cols())},
                   {w.data(), static_cast<std::size_t>(w.size())});
            pv.add("critic.conv" + std::to_string(l) + ".bias", {static_cast<int>(b.size())},
                   {b.data(), static_cast<std::size_t>(b.size())});
        }
        pv.add("critic.head.weight", {static_cast<int>(head_weight.size())},
               {head_weight.data(), static_cast<std::size_t>(head_weight.size())});
        pv.add("critic.head.bias", {1}, {&head_bias, 1});
        return pv;
    }

    static CriticParams zeros_like(const CriticParams& o) {
        CriticParams c;
        c.config = o.config;
        for (std::size_t l = 0; l < o.conv_weights.size(); ++l) {
            c.conv_weights.push_back(Mat<Scalar>::Zero(o.conv_weights[l].rows(), o.conv_weights[l].cols()));
            c.conv_biases.push_back(Vec<Scalar>::Zero(o.conv_biases[l].size()));
        }
        c.head_weight = Vec<Scalar>::Zero(o.head_weight.size());
        c.head_bias = Scalar(0);
        return c;
    }
};

template <typename Scalar>
CriticParams<Scalar> init_critic(Rng& rng, const CriticConfig& cfg) {
    cfg.validate();
    CriticParams<Scalar> p;
    p.config = cfg;
    int in = cfg.in_channels;
    for (int l = 0; l < cfg.layers; ++l) {
        const int out = cfg.width(l);
        const int fan_in = cfg.taps() * in;
        const double bound = std::sqrt(6.0 / ((1.0 + cfg.leaky_slope * cfg.leaky_slope) * fan_in));
        Mat<Scalar> w(out, fan_in);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        p.conv_weights.push_back(std::move(w));
        p.conv_biases.push_back(Vec<Scalar>::Zero(out));
        in = out;
    }
    const double bound = std::sqrt(3.0 / cfg.final_features());
    p.head_weight.resize(cfg.final_features());
    for (Eigen::Index i = 0; i < p.head_weight.size(); ++i)
        p.head_weight[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    return p;
}

namespace detail {

// For every (output position, kernel tap) the flat input position it reads,
// or -1 for zero padding.
inline std::vector<std::int32_t> conv_gather_table(const std::vector<int>& in_dims, int kernel) {
    const int k = static_cast<int>(in_dims.size());
    std::vector<int> out_dims = in_dims;
    for (auto& d : out_dims) d /= 2;
    std::vector<int> tap_dims(k, kernel);
    const std::size_t taps = volume(tap_dims);
    std::vector<std::int32_t> table;
    table.reserve(volume(out_dims) * taps);
    std::vector<int> src(k);
    for_each_index(out_dims, [&](const std::vector<int>& o) {
        for_each_index(tap_dims, [&](const std::vector<int>& q) {
            bool inside = true;
            for (int a = 0; a < k; ++a) {
                src[a] = 2 * o[a] + q[a] - 1;
                inside = inside && src[a] >= 0 && src[a] < in_dims[a];
            }
            table.push_back(inside ? static_cast<std::int32_t>(flat_index(in_dims, src)) : -1);
        });
    });
    return table;
}

template <typename Scalar>
Mat<Scalar> im2col(const Mat<Scalar>& x, int count, std::size_t in_points, const std::vector<std::int32_t>& table,
                   std::size_t out_points, int taps) {
    const int c = static_cast<int>(x.cols());
    Mat<Scalar> cols(static_cast<Eigen::Index>(count * out_points), taps * c);
    for (int n = 0; n < count; ++n) {
        const Scalar* src = x.data() + static_cast<std::size_t>(n) * in_points * c;
        for (std::size_t o = 0; o < out_points; ++o) {
            Scalar* dst = cols.data() + (n * out_points + o) * static_cast<std::size_t>(taps * c);
            const std::int32_t* t = table.data() + o * taps;
            for (int q = 0; q < taps; ++q, dst += c) {
                if (t[q] < 0) {
                    std::fill_n(dst, c, Scalar(0));
                } else {
                    std::copy_n(src + static_cast<std::size_t>(t[q]) * c, c, dst);
                }
            }
        }
    }
    return cols;
}

template <typename Scalar>
void col2im_add(const Mat<Scalar>& cols, int count, std::size_t in_points, const std::vector<std::int32_t>& table,
                std::size_t out_points, int taps, Mat<Scalar>& dx) {
    const int c = static_cast<int>(dx.cols());
    for (int n = 0; n < count; ++n) {
        Scalar* dst = dx.data() + static_cast<std::size_t>(n) * in_points * c;
        for (std::size_t o = 0; o < out_points; ++o) {
            const Scalar* src = cols.data() + (n * out_points + o) * static_cast<std::size_t>(taps * c);
            const std::int32_t* t = table.data() + o * taps;
            for (int q = 0; q < taps; ++q, src += c) {
                if (t[q] < 0) continue;
                Scalar* d = dst + static_cast<std::size_t>(t[q]) * c;
                for (int ch = 0; ch < c; ++ch) d[ch] += src[ch];
            }
        }
    }
}

}  // namespace detail

template <typename Scalar>
struct CriticTrace {
    bool recorded = false;
    int count = 0;
    std::vector<Mat<Scalar>> cols;     // im2col of each layer input
    std::vector<Mat<Scalar>> preact;   // z_l
    Mat<Scalar> features;              // final activations, count x final_features
    std::vector<Mat<Scalar>> deltas;   // d score / d z_l, filled by critic_backward
};

// Evaluates a critic. Holds the precomputed gather tables for its patch size;
// immutable after construction and safe to share across threads.
template <typename Scalar>
class Critic {
public:
    explicit Critic(CriticConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        for (int l = 0; l < cfg_.layers; ++l) tables_.push_back(detail::conv_gather_table(cfg_.spatial(l), cfg_.kernel));
    }

    const CriticConfig& config() const { return cfg_; }

    void check_input(const PatchBatch<Scalar>& x) const {
        if (x.spatial != cfg_.patch)
            throw ConfigError("critic: patch " + dims_to_string(x.spatial) + " does not match configured " +
                              dims_to_string(cfg_.patch));
        if (x.channels != cfg_.in_channels)
            throw ConfigError("critic: got " + std::to_string(x.channels) + " channels, expected " +
                              std::to_string(cfg_.in_channels));
    }

    // One unbounded score per patch, in batch order.
    Vec<Scalar> forward(const CriticParams<Scalar>& p, const PatchBatch<Scalar>& x, CriticTrace<Scalar>* trace = nullptr) const {
        check_input(x);
        const int n = x.count;
        if (trace) {
            *trace = CriticTrace<Scalar>{};
            trace->recorded = true;
            trace->count = n;
        }
        Mat<Scalar> act = x.data;
        for (int l = 0; l < cfg_.layers; ++l) {
            Mat<Scalar> cols = detail::im2col(act, n, volume(cfg_.spatial(l)), tables_[l], volume(cfg_.spatial(l + 1)),
                                              cfg_.taps());
            Mat<Scalar> z(cols.rows(), p.conv_weights[l].rows());
            z.noalias() = cols * p.conv_weights[l].transpose();
            z.rowwise() += p.conv_biases[l].transpose();
            act = leaky(z);
            if (trace) {
                trace->cols.push_back(std::move(cols));
                trace->preact.push_back(std::move(z));
            }
        }
        Eigen::Map<const Mat<Scalar>> feats(act.data(), n, cfg_.final_features());
        Vec<Scalar> scores = feats * p.head_weight;
        scores.array() += p.head_bias;
        if (trace) trace->features = feats;
        return scores;
    }

    // Reverse pass for upstream d_scores. Accumulates parameter gradients into
    // `grads` (may be null), keeps per-layer deltas in the trace, and returns
    // d score / d input in the input layout.
    Mat<Scalar> backward(const CriticParams<Scalar>& p, CriticTrace<Scalar>& trace, const Vec<Scalar>& d_scores,
                         CriticParams<Scalar>* grads) const {
        if (!trace.recorded) throw UsageError("critic backward: no forward trace recorded");
        const int n = trace.count;
        if (d_scores.size() != n) throw ConfigError("critic backward: need one upstream gradient per patch");
        if (grads) {
            grads->head_weight.noalias() += trace.features.transpose() * d_scores;
            grads->head_bias += d_scores.sum();
        }
        Mat<Scalar> d_feat = d_scores * p.head_weight.transpose();  // n x final_features
        Mat<Scalar> dz = Eigen::Map<const Mat<Scalar>>(d_feat.data(), trace.preact.back().rows(), trace.preact.back().cols());
        trace.deltas.assign(cfg_.layers, Mat<Scalar>{});
        Mat<Scalar> dx;
        for (int l = cfg_.layers - 1; l >= 0; --l) {
            dz = dz.cwiseProduct(leaky_grad(trace.preact[l]));
            if (grads) {
                grads->conv_weights[l].noalias() += dz.transpose() * trace.cols[l];
                grads->conv_biases[l].noalias() += dz.colwise().sum().transpose();
            }
            Mat<Scalar> dcols(dz.rows(), p.conv_weights[l].cols());
            dcols.noalias() = dz * p.conv_weights[l];
            const int in_c = l == 0 ? cfg_.in_channels : cfg_.width(l - 1);
            dx = Mat<Scalar>::Zero(static_cast<Eigen::Index>(n * volume(cfg_.spatial(l))), in_c);
            detail::col2im_add(dcols, n, volume(cfg_.spatial(l)), tables_[l], volume(cfg_.spatial(l + 1)), cfg_.taps(), dx);
            trace.deltas[l] = std::move(dz);
            dz = std::move(dx);
        }
        return dz;
    }

    // Gradient of sum_n u_n . v_n with respect to the parameters, where
    // v_n = d score_n / d input and u is held fixed. Requires a trace on which
    // backward() ran with unit upstream gradients. Leaky ReLU is piecewise
    // linear, so v depends on the conv and head weights only (the activation
    // pattern is locally constant) and this is exact almost everywhere.
    void input_gradient_vjp(const CriticParams<Scalar>& p, const CriticTrace<Scalar>& trace, const Mat<Scalar>& u,
                            CriticParams<Scalar>& grads) const {
        if (!trace.recorded || static_cast<int>(trace.deltas.size()) != cfg_.layers || trace.deltas[0].size() == 0)
            throw UsageError("input_gradient_vjp: trace lacks a backward pass");
        const int n = trace.count;
        Mat<Scalar> t = u;
        for (int l = 0; l < cfg_.layers; ++l) {
            Mat<Scalar> cols = detail::im2col(t, n, volume(cfg_.spatial(l)), tables_[l], volume(cfg_.spatial(l + 1)),
                                              cfg_.taps());
            grads.conv_weights[l].noalias() += trace.deltas[l].transpose() * cols;
            Mat<Scalar> z(cols.rows(), p.conv_weights[l].rows());
            z.noalias() = cols * p.conv_weights[l].transpose();
            t = z.cwiseProduct(leaky_grad(trace.preact[l]));
        }
        Eigen::Map<const Mat<Scalar>> feats(t.data(), n, cfg_.final_features());
        grads.head_weight.noalias() += feats.colwise().sum().transpose();
    }

private:
    Mat<Scalar> leaky(const Mat<Scalar>& z) const {
        const Scalar s = static_cast<Scalar>(cfg_.leaky_slope);
        return z.unaryExpr([s](Scalar v) { return v > Scalar(0) ? v : s * v; });
    }
    Mat<Scalar> leaky_grad(const Mat<Scalar>& z) const {
        const Scalar s = static_cast<Scalar>(cfg_.leaky_slope);
        return z.unaryExpr([s](Scalar v) { return v > Scalar(0) ? Scalar(1) : s; });
    }

    CriticConfig cfg_;
    std::vector<std::vector<std::int32_t>> tables_;
};

// Append a broadcast guidance channel holding g[n] to every point of patch n.
template <typename Scalar>
PatchBatch<Scalar> append_guidance_channel(const PatchBatch<Scalar>& x, const std::vector<Scalar>& g) {
    if (static_cast<int>(g.size()) != x.count) throw ConfigError("guidance: need one value per patch");
    PatchBatch<Scalar> out(x.count, x.spatial, x.channels + 1);
    const auto pts = static_cast<Eigen::Index>(x.points_per_patch());
    out.data.leftCols(x.channels) = x.data;
    for (int n = 0; n < x.count; ++n) out.data.col(x.channels).segment(n * pts, pts).setConstant(g[n]);
    return out;
}

}  // namespace ipfn

#endif
