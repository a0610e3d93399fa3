#ifndef IPFN_TRAINING_HPP
#define IPFN_TRAINING_HPP

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "ipfn/critic.hpp"
#include "ipfn/data.hpp"
#include "ipfn/error.hpp"
#include "ipfn/fieldmath.hpp"
#include "ipfn/generator.hpp"
#include "ipfn/model.hpp"
#include "ipfn/params.hpp"
#include "ipfn/rng.hpp"

namespace ipfn {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double adam_eps = 1e-8;
    int d_steps = 5;
    int g_steps = 5;
    long iterations = 12500;
    int batch = 8;
    double lambda_gp = 10.0;
    std::vector<int> patch;             // empty: 128 per axis (2D), 64 per axis (3D)
    double shift_lo = -4.0, shift_hi = 4.0;
    double scale_s = 4.0;
    double coord_spacing = 0.0;         // pre-scale step per sample; 0: patch spans 4 units (two periods at a = 1)
    int bandwidth_i = 5;
    int latent_dim = 5;
    std::vector<int> latent_grid;       // empty: 5 per axis
    double latent_sigma = 0.5;          // fraction of the scaled grid spacing
    bool trainable_latent = false;      // false: fresh Gaussian grid per sample and batch
    int hidden_width = 128;
    int gen_layers = 10;
    int critic_base_width = 64;
    int critic_layers = 0;              // 0: derived from the patch size
    double leaky_slope = 0.2;
    std::vector<double> period_init;    // empty: a = 1 per axis
    bool disable_period_learning = false;  // "w/o deformation"
    bool disable_shift = false;            // "w/o shift"
    GuidanceSpec guidance;
    int checkpoint_every = 500;
    int telemetry_every = 10;
    std::size_t history_size = 1000;
    std::uint64_t seed = 0;

    // Fill per-axis defaults for a k-dimensional exemplar and validate.
    void resolve(int k) {
        if (patch.empty()) patch.assign(k, k == 2 ? 128 : 64);
        if (latent_grid.empty()) latent_grid.assign(k, 5);
        if (period_init.empty()) period_init.assign(k, 1.0);
        if (period_init.size() == 1 && k > 1) period_init.assign(k, period_init[0]);
        if (static_cast<int>(patch.size()) != k) throw ConfigError("patch must have " + std::to_string(k) + " entries");
        if (static_cast<int>(latent_grid.size()) != k)
            throw ConfigError("latent_grid must have " + std::to_string(k) + " entries");
        if (static_cast<int>(period_init.size()) != k)
            throw ConfigError("period_init must have " + std::to_string(k) + " entries");
        if (coord_spacing == 0.0) {
            int longest = 0;
            for (int p : patch) longest = std::max(longest, p);
            coord_spacing = 4.0 / (scale_s * longest);
        }
        if (critic_layers == 0) critic_layers = default_critic_layers(patch);
        validate(k);
    }

    void validate(int k) const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
        };
        positive(lr, "lr");
        positive(adam_eps, "adam_eps");
        positive(scale_s, "scale_s");
        positive(coord_spacing, "coord_spacing");
        positive(latent_sigma, "latent_sigma");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("adam betas must lie in [0,1)");
        if (lambda_gp < 0.0) throw ConfigError("lambda_gp must be nonnegative");
        if (d_steps < 1 || g_steps < 1) throw ConfigError("d_steps and g_steps must be positive");
        if (iterations < 0) throw ConfigError("iterations must be nonnegative");
        if (batch < 1) throw ConfigError("batch must be positive");
        if (shift_lo > shift_hi) throw ConfigError("shift range must satisfy lo <= hi");
        if (checkpoint_every < 0 || telemetry_every < 1) throw ConfigError("invalid telemetry/checkpoint cadence");
        for (double a : period_init) positive(a, "period_init");
        if (guidance.kind == GuidanceKind::directional && k != 2)
            throw ConfigError("directional guidance needs a 2D exemplar");
        if (guidance.kind == GuidanceKind::directional && guidance.line.degenerate())
            throw ConfigError("directional guidance: degenerate line (0,0,0)");
        if (guidance.kind == GuidanceKind::density && k != 3)
            throw ConfigError("density guidance needs a 3D SDF exemplar");
    }

    ModelArch arch(int k, int channels) const {
        ModelArch a;
        a.k = k;
        a.channels = channels;
        a.bandwidth_i = bandwidth_i;
        a.latent_dim = latent_dim;
        a.latent_grid = latent_grid;
        a.latent_sigma = latent_sigma;
        a.hidden_width = hidden_width;
        a.layers = gen_layers;
        a.guidance = guidance.kind;
        a.trainable_latent = trainable_latent;
        return a;
    }

    CriticConfig critic(int k, int channels) const {
        CriticConfig c;
        c.k = k;
        c.patch = patch;
        c.in_channels = channels + (guidance.kind == GuidanceKind::none ? 0 : 1);
        c.base_width = critic_base_width;
        c.layers = critic_layers;
        c.leaky_slope = leaky_slope;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename Scalar>
struct AdamState {
    std::vector<Scalar> m, v;
    long t = 0;

    bool operator==(const AdamState&) const = default;
};

struct AdamHyper {
    double lr = 1e-4, beta1 = 0.5, beta2 = 0.9, eps = 1e-8;
};

// Bias-corrected Adam step on a flat parameter view.
template <typename Scalar>
void adam_update(ParamVector<Scalar>& params, std::span<const Scalar> grads, AdamState<Scalar>& st, const AdamHyper& h) {
    const std::size_t n = params.size();
    if (grads.size() != n) throw ConfigError("adam_update: gradient size mismatch");
    if (st.m.empty()) {
        st.m.assign(n, Scalar(0));
        st.v.assign(n, Scalar(0));
    }
    if (st.m.size() != n || st.v.size() != n) throw ConfigError("adam_update: moment size mismatch");
    ++st.t;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.t));
    std::size_t i = 0;
    for (const auto& ref : params.refs()) {
        for (auto& p : ref.values) {
            const double g = static_cast<double>(grads[i]);
            const double m = h.beta1 * static_cast<double>(st.m[i]) + (1.0 - h.beta1) * g;
            const double v = h.beta2 * static_cast<double>(st.v[i]) + (1.0 - h.beta2) * g * g;
            st.m[i] = static_cast<Scalar>(m);
            st.v[i] = static_cast<Scalar>(v);
            p = static_cast<Scalar>(static_cast<double>(p) - h.lr * (m / c1) / (std::sqrt(v / c2) + h.eps));
            ++i;
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

// mean_n (|v_n| - 1)^2 for per-sample input gradients stored as consecutive
// row blocks of `grad` (rows_per_sample rows each).
template <typename Scalar>
double penalty_from_gradients(const Mat<Scalar>& grad, int count, std::vector<double>* norms = nullptr) {
    const Eigen::Index rows = grad.rows() / count;
    double total = 0.0;
    if (norms) norms->assign(count, 0.0);
    for (int n = 0; n < count; ++n) {
        const double norm = std::sqrt(grad.middleRows(n * rows, rows).template cast<double>().squaredNorm());
        if (norms) (*norms)[n] = norm;
        total += (norm - 1.0) * (norm - 1.0);
    }
    return total / count;
}

// x_hat = eps * real + (1 - eps) * fake with one eps ~ U(0,1) per sample.
template <typename Scalar>
PatchBatch<Scalar> interpolate_patches(const PatchBatch<Scalar>& real, const PatchBatch<Scalar>& fake, Rng& rng,
                                       std::vector<double>* eps_out = nullptr) {
    if (real.count != fake.count || real.spatial != fake.spatial || real.channels != fake.channels)
        throw ConfigError("gradient penalty: real and fake shapes differ");
    PatchBatch<Scalar> x(real.count, real.spatial, real.channels);
    const auto rows = static_cast<Eigen::Index>(real.points_per_patch());
    if (eps_out) eps_out->clear();
    for (int n = 0; n < real.count; ++n) {
        const double eps = rng.uniform();
        if (eps_out) eps_out->push_back(eps);
        x.data.middleRows(n * rows, rows) = (static_cast<Scalar>(eps) * real.data.middleRows(n * rows, rows) +
                                             static_cast<Scalar>(1.0 - eps) * fake.data.middleRows(n * rows, rows));
    }
    return x;
}

// Penalty for any critic given as a function returning d score / d input for
// each patch of a batch (same layout as the batch data).
template <typename Scalar, typename InputGradFn>
double gradient_penalty(InputGradFn&& input_gradient, const PatchBatch<Scalar>& real, const PatchBatch<Scalar>& fake,
                        Rng& rng) {
    const PatchBatch<Scalar> x_hat = interpolate_patches(real, fake, rng);
    const Mat<Scalar> g = input_gradient(x_hat);
    return penalty_from_gradients(g, real.count);
}

template <typename Scalar>
double gradient_penalty(const Critic<Scalar>& critic, const CriticParams<Scalar>& params, const PatchBatch<Scalar>& real,
                        const PatchBatch<Scalar>& fake, Rng& rng) {
    return gradient_penalty<Scalar>(
        [&](const PatchBatch<Scalar>& x) {
            CriticTrace<Scalar> tr;
            critic.forward(params, x, &tr);
            return critic.backward(params, tr, Vec<Scalar>::Ones(x.count), nullptr);
        },
        real, fake, rng);
}

// ---------------------------------------------------------------------------
// Training state
// ---------------------------------------------------------------------------

struct TelemetryRecord {
    long iteration = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double wasserstein_estimate = 0.0;
    std::vector<double> a;
};

template <typename Scalar>
struct TrainState {
    TrainConfig config;
    Model<Scalar> model;
    CriticParams<Scalar> critic;
    AdamState<Scalar> gen_opt;
    AdamState<Scalar> critic_opt;
    long iteration = 0;
    long critic_updates = 0;
    long generator_updates = 0;
    Rng rng;
    std::deque<TelemetryRecord> history;

    // Trainable generator-side arrays in optimizer order: MLP weights, then
    // log-period (unless frozen), then latent grid values (when trained).
    ParamVector<Scalar> generator_view() {
        ParamVector<Scalar> pv = model.generator.view();
        if (model.period.trainable && !config.disable_period_learning)
            pv.add("period.rho", {model.period.k()}, {model.period.rho.data(), model.period.rho.size()});
        if (model.arch.trainable_latent)
            pv.add("latent.values", {static_cast<int>(model.latent.values.size())},
                   {model.latent.values.data(), model.latent.values.size()});
        return pv;
    }
};

// Estimates guidance statistics of the exemplar from random crops.
inline void guidance_statistics(const Exemplar& ex, const TrainConfig& cfg, std::uint64_t seed, double& mean,
                                double& lo, double& hi) {
    mean = lo = hi = 0.0;
    if (cfg.guidance.kind == GuidanceKind::none) return;
    Rng rng(seed ^ 0x5eedULL);
    const int n = 256;
    lo = 1e300;
    hi = -1e300;
    for (int i = 0; i < n; ++i) {
        const double g = sample_real_patch(ex, cfg.patch, rng, cfg.guidance).guidance;
        mean += g / n;
        lo = std::min(lo, g);
        hi = std::max(hi, g);
    }
}

template <typename Scalar>
TrainState<Scalar> init_train_state(const Exemplar& ex, TrainConfig cfg) {
    ex.validate();
    cfg.resolve(ex.k());
    for (int a = 0; a < ex.k(); ++a)
        if (cfg.patch[a] > ex.dims()[a])
            throw ConfigError("patch " + dims_to_string(cfg.patch) + " larger than exemplar " + dims_to_string(ex.dims()));
    TrainState<Scalar> st;
    st.config = cfg;
    st.rng = Rng(cfg.seed);
    Rng init_rng = st.rng.split();
    st.model = init_model<Scalar>(cfg.arch(ex.k(), ex.channels()), CoordMapping{cfg.scale_s, cfg.coord_spacing},
                                  cfg.period_init, !cfg.disable_period_learning, init_rng);
    st.model.value_offset = ex.value_offset;
    st.model.value_scale = ex.value_scale;
    st.model.kind = ex.kind;
    st.model.train_patch = cfg.patch;
    guidance_statistics(ex, cfg, cfg.seed, st.model.guidance_mean, st.model.guidance_min, st.model.guidance_max);
    st.critic = init_critic<Scalar>(init_rng, cfg.critic(ex.k(), ex.channels()));
    return st;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

template <typename Scalar>
struct RealBatch {
    PatchBatch<Scalar> patches;  // unit range
    std::vector<Scalar> guidance;
};

template <typename Scalar>
RealBatch<Scalar> sample_real_batch(const Exemplar& ex, const TrainConfig& cfg, int count, Rng& rng) {
    RealBatch<Scalar> b;
    b.patches = PatchBatch<Scalar>(count, cfg.patch, ex.channels());
    const std::size_t per = b.patches.points_per_patch() * ex.channels();
    for (int n = 0; n < count; ++n) {
        const RealPatch rp = sample_real_patch(ex, cfg.patch, rng, cfg.guidance);
        Scalar* dst = b.patches.patch_ptr(n);
        for (std::size_t i = 0; i < per; ++i) dst[i] = static_cast<Scalar>(ex.to_unit(rp.patch.values[i]));
        b.guidance.push_back(static_cast<Scalar>(rp.guidance));
    }
    return b;
}

// Guidance values drawn from the exemplar's patch distribution.
template <typename Scalar>
std::vector<Scalar> sample_guidance(const Exemplar& ex, const TrainConfig& cfg, int count, Rng& rng) {
    std::vector<Scalar> g;
    if (cfg.guidance.kind == GuidanceKind::none) return g;
    for (int n = 0; n < count; ++n) g.push_back(static_cast<Scalar>(sample_real_patch(ex, cfg.patch, rng, cfg.guidance).guidance));
    return g;
}

template <typename Scalar>
struct FakeBatch {
    PatchBatch<Scalar> patches;
    std::vector<double> coords;                  // count * points * k
    std::vector<LatentFieldSpec<Scalar>> latents;  // scaled realization per sample
    std::vector<std::vector<double>> offsets;
    std::vector<Scalar> guidance;
    GeneratorTrace<Scalar> trace;
};

// Coordinates of one training patch centred at a post-scale offset.
inline CoordGrid patch_coords(const TrainConfig& cfg, std::span<const double> offset) {
    std::vector<double> center(offset.begin(), offset.end());
    for (auto& c : center) c /= cfg.scale_s;
    return make_coord_grid(cfg.patch, static_cast<int>(cfg.patch.size()), cfg.scale_s, center, cfg.coord_spacing);
}

template <typename Scalar>
FakeBatch<Scalar> make_fake_batch(const Model<Scalar>& model, const TrainConfig& cfg, int count, Rng& rng,
                                  std::vector<Scalar> guidance = {}, bool record = false) {
    const int k = model.arch.k;
    FakeBatch<Scalar> fb;
    fb.patches = PatchBatch<Scalar>(count, cfg.patch, model.arch.channels);
    const std::size_t pts = fb.patches.points_per_patch();
    fb.coords.reserve(count * pts * k);
    Mat<Scalar> latent_rows(static_cast<Eigen::Index>(count * pts), model.arch.latent_dim);
    for (int n = 0; n < count; ++n) {
        std::vector<double> off =
            cfg.disable_shift ? std::vector<double>(k, 0.0) : sample_center_offset(rng, k, cfg.shift_lo, cfg.shift_hi);
        const CoordGrid grid = patch_coords(cfg, off);
        LatentFieldSpec<Scalar> spec = model.latent;
        if (!model.arch.trainable_latent) fill_gaussian(spec, rng);
        spec = model.scaled_latent(spec);
        latent_rows.middleRows(static_cast<Eigen::Index>(n * pts), static_cast<Eigen::Index>(pts)) =
            latent_field_eval(spec, std::span<const double>(grid.coords));
        fb.coords.insert(fb.coords.end(), grid.coords.begin(), grid.coords.end());
        fb.latents.push_back(std::move(spec));
        fb.offsets.push_back(std::move(off));
    }
    const Mat<Scalar> enc = periodic_encode(std::span<const double>(fb.coords), model.period, model.arch.encoder());
    Mat<Scalar> guidance_col;
    if (model.arch.guidance_width() > 0) {
        if (static_cast<int>(guidance.size()) != count) throw ConfigError("fake batch: need one guidance value per sample");
        guidance_col.resize(static_cast<Eigen::Index>(count * pts), 1);
        for (int n = 0; n < count; ++n)
            guidance_col.middleRows(static_cast<Eigen::Index>(n * pts), static_cast<Eigen::Index>(pts)).setConstant(guidance[n]);
    }
    fb.guidance = std::move(guidance);
    fb.patches.data = generator_forward(model.generator, enc, latent_rows,
                                        guidance_col.size() ? &guidance_col : nullptr, record ? &fb.trace : nullptr);
    return fb;
}

template <typename Scalar>
PatchBatch<Scalar> critic_input(const PatchBatch<Scalar>& x, const std::vector<Scalar>& guidance, GuidanceKind kind) {
    return kind == GuidanceKind::none ? x : append_guidance_channel(x, guidance);
}

// ---------------------------------------------------------------------------
// Losses and gradients
// ---------------------------------------------------------------------------

struct CriticLoss {
    double loss = 0.0;
    double wasserstein = 0.0;  // mean D(real) - mean D(fake)
    double penalty = 0.0;
};

// Critic objective mean D(fake) - mean D(real) + lambda * penalty and its
// parameter gradient (exact, including the penalty's double-backward term).
template <typename Scalar>
CriticLoss critic_loss_and_grad(const Critic<Scalar>& critic, const CriticParams<Scalar>& params,
                                const PatchBatch<Scalar>& real_in, const PatchBatch<Scalar>& fake_in, int image_channels,
                                double lambda_gp, Rng& rng, std::type_identity_t<CriticParams<Scalar>>* grads) {
    const int n = real_in.count;
    CriticLoss out;
    CriticTrace<Scalar> tr_real, tr_fake;
    const Vec<Scalar> s_real = critic.forward(params, real_in, grads ? &tr_real : nullptr);
    const Vec<Scalar> s_fake = critic.forward(params, fake_in, grads ? &tr_fake : nullptr);
    const double mean_real = s_real.template cast<double>().mean();
    const double mean_fake = s_fake.template cast<double>().mean();
    out.wasserstein = mean_real - mean_fake;
    if (grads) {
        critic.backward(params, tr_real, Vec<Scalar>::Constant(n, Scalar(-1.0 / n)), grads);
        critic.backward(params, tr_fake, Vec<Scalar>::Constant(n, Scalar(1.0 / n)), grads);
    }

    // Penalty on interpolates; the guidance channel (if any) is shared by
    // real and fake so it is unchanged by the interpolation.
    const PatchBatch<Scalar> x_hat = interpolate_patches(real_in, fake_in, rng);
    CriticTrace<Scalar> tr_hat;
    critic.forward(params, x_hat, &tr_hat);
    Mat<Scalar> v = critic.backward(params, tr_hat, Vec<Scalar>::Ones(n), nullptr);
    if (v.cols() > image_channels) v.rightCols(v.cols() - image_channels).setZero();
    std::vector<double> norms;
    out.penalty = penalty_from_gradients(v, n, &norms);
    out.loss = mean_fake - mean_real + lambda_gp * out.penalty;
    if (grads && lambda_gp != 0.0) {
        const Eigen::Index rows = v.rows() / n;
        Mat<Scalar> u = v;
        for (int s = 0; s < n; ++s) {
            const double coef = norms[s] > 0.0 ? lambda_gp * 2.0 * (norms[s] - 1.0) / (norms[s] * n) : 0.0;
            u.middleRows(s * rows, rows) *= static_cast<Scalar>(coef);
        }
        critic.input_gradient_vjp(params, tr_hat, u, *grads);
    }
    return out;
}

// Generator-side gradient container matching TrainState::generator_view().
template <typename Scalar>
struct GeneratorGrads {
    GeneratorParams<Scalar> mlp;
    std::vector<double> rho;
    std::vector<double> latent;

    std::vector<Scalar> flatten(bool include_rho, bool include_latent) {
        std::vector<Scalar> out = mlp.view().flatten();
        if (include_rho)
            for (double v : rho) out.push_back(static_cast<Scalar>(v));
        if (include_latent)
            for (double v : latent) out.push_back(static_cast<Scalar>(v));
        return out;
    }
};

// Generator objective -mean D(G(z, c)) and gradients for the MLP, log-period
// and (when trained) the latent grid. The latent grid's rescaling with the
// period is treated as a constant.
template <typename Scalar>
double generator_loss_and_grad(const Model<Scalar>& model, const Critic<Scalar>& critic,
                               const CriticParams<Scalar>& cparams, FakeBatch<Scalar>& fb, GeneratorGrads<Scalar>& grads) {
    const int n = fb.patches.count;
    const int c = model.arch.channels;
    const int k = model.arch.k;
    const PatchBatch<Scalar> in = critic_input(fb.patches, fb.guidance, model.arch.guidance);
    CriticTrace<Scalar> tr;
    const Vec<Scalar> scores = critic.forward(cparams, in, &tr);
    const double loss = -scores.template cast<double>().mean();
    const Mat<Scalar> d_in = critic.backward(cparams, tr, Vec<Scalar>::Constant(n, Scalar(-1.0 / n)), nullptr);
    const Mat<Scalar> d_out = d_in.leftCols(c);

    grads.mlp = GeneratorParams<Scalar>::zeros_like(model.generator);
    const Mat<Scalar> d_x = generator_backward(model.generator, fb.trace, d_out, &grads.mlp);
    const int enc_w = model.arch.encoder().out_dim();
    const Mat<Scalar> d_enc = d_x.leftCols(enc_w);
    grads.rho.assign(k, 0.0);
    periodic_encode_backward(std::span<const double>(fb.coords), model.period, model.arch.encoder(), d_enc,
                             std::span<double>(grads.rho));
    grads.latent.assign(model.arch.trainable_latent ? model.latent.values.size() : 0, 0.0);
    if (model.arch.trainable_latent) {
        const std::size_t pts = fb.patches.points_per_patch();
        for (int s = 0; s < n; ++s) {
            const Mat<Scalar> d_lat =
                d_x.block(static_cast<Eigen::Index>(s * pts), enc_w, static_cast<Eigen::Index>(pts), model.arch.latent_dim);
            latent_field_backward(fb.latents[s], std::span<const double>(fb.coords.data() + s * pts * k, pts * k), d_lat,
                                  std::span<double>(grads.latent));
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Steps and loop
// ---------------------------------------------------------------------------

struct TrainCallbacks {
    std::function<void(const TelemetryRecord&)> on_telemetry;
    // Called every checkpoint_every iterations and at the end.
    std::function<void(long iteration)> on_checkpoint;
    // Called after each optimizer update: 'D' for critic, 'G' for generator.
    std::function<void(char)> on_step;
};

namespace detail {

inline std::string diagnostics(long iteration, const char* what, double loss, const std::vector<double>& a) {
    std::ostringstream os;
    os << "non-finite " << what << " loss (" << loss << ") at iteration " << iteration << "; a =";
    for (double v : a) os << ' ' << v;
    return os.str();
}

}  // namespace detail

template <typename Scalar>
class Trainer {
public:
    Trainer(const Exemplar& exemplar, TrainState<Scalar>& state)
        : ex_(exemplar), st_(state), critic_(state.critic.config) {}

    const Critic<Scalar>& critic() const { return critic_; }

    CriticLoss critic_step() {
        const TrainConfig& cfg = st_.config;
        RealBatch<Scalar> real = sample_real_batch<Scalar>(ex_, cfg, cfg.batch, st_.rng);
        FakeBatch<Scalar> fake = make_fake_batch(st_.model, cfg, cfg.batch, st_.rng, real.guidance);
        const auto kind = st_.model.arch.guidance;
        auto grads = CriticParams<Scalar>::zeros_like(st_.critic);
        const CriticLoss l = critic_loss_and_grad(critic_, st_.critic, critic_input(real.patches, real.guidance, kind),
                                                  critic_input(fake.patches, fake.guidance, kind), st_.model.arch.channels,
                                                  cfg.lambda_gp, st_.rng, &grads);
        if (!std::isfinite(l.loss)) throw NumericError(detail::diagnostics(st_.iteration, "critic", l.loss, st_.model.period.a()));
        auto view = st_.critic.view();
        const auto flat = grads.view().flatten();
        adam_update(view, std::span<const Scalar>(flat), st_.critic_opt, hyper());
        ++st_.critic_updates;
        return l;
    }

    double generator_step() {
        const TrainConfig& cfg = st_.config;
        std::vector<Scalar> g = sample_guidance<Scalar>(ex_, cfg, cfg.batch, st_.rng);
        FakeBatch<Scalar> fake = make_fake_batch(st_.model, cfg, cfg.batch, st_.rng, std::move(g), true);
        GeneratorGrads<Scalar> grads;
        const double loss = generator_loss_and_grad(st_.model, critic_, st_.critic, fake, grads);
        if (!std::isfinite(loss)) throw NumericError(detail::diagnostics(st_.iteration, "generator", loss, st_.model.period.a()));
        auto view = st_.generator_view();
        const bool with_rho = st_.model.period.trainable && !cfg.disable_period_learning;
        const auto flat = grads.flatten(with_rho, st_.model.arch.trainable_latent);
        adam_update(view, std::span<const Scalar>(flat), st_.gen_opt, hyper());
        ++st_.generator_updates;
        return loss;
    }

    // One iteration: d_steps critic updates, then g_steps generator updates.
    TelemetryRecord iteration(const TrainCallbacks& cb = {}) {
        const TrainConfig& cfg = st_.config;
        TelemetryRecord rec;
        for (int i = 0; i < cfg.d_steps; ++i) {
            const CriticLoss l = critic_step();
            rec.d_loss += l.loss / cfg.d_steps;
            rec.wasserstein_estimate += l.wasserstein / cfg.d_steps;
            if (cb.on_step) cb.on_step('D');
        }
        for (int i = 0; i < cfg.g_steps; ++i) {
            rec.g_loss += generator_step() / cfg.g_steps;
            if (cb.on_step) cb.on_step('G');
        }
        ++st_.iteration;
        rec.iteration = st_.iteration;
        rec.a = st_.model.period.a();
        st_.history.push_back(rec);
        while (st_.history.size() > cfg.history_size) st_.history.pop_front();
        return rec;
    }

    // Runs until state.iteration reaches config.iterations.
    void run(const TrainCallbacks& cb = {}) {
        const TrainConfig& cfg = st_.config;
        while (st_.iteration < cfg.iterations) {
            const TelemetryRecord rec = iteration(cb);
            if (cb.on_telemetry && (rec.iteration % cfg.telemetry_every == 0 || rec.iteration == cfg.iterations))
                cb.on_telemetry(rec);
            if (cb.on_checkpoint && cfg.checkpoint_every > 0 && rec.iteration % cfg.checkpoint_every == 0 &&
                rec.iteration != cfg.iterations)
                cb.on_checkpoint(rec.iteration);
        }
        if (cb.on_checkpoint) cb.on_checkpoint(st_.iteration);
    }

private:
    AdamHyper hyper() const { return {st_.config.lr, st_.config.beta1, st_.config.beta2, st_.config.adam_eps}; }

    const Exemplar& ex_;
    TrainState<Scalar>& st_;
    Critic<Scalar> critic_;
};

template <typename Scalar>
TrainState<Scalar> train(const Exemplar& exemplar, const TrainConfig& cfg, const TrainCallbacks& cb = {}) {
    TrainState<Scalar> st = init_train_state<Scalar>(exemplar, cfg);
    Trainer<Scalar>(exemplar, st).run(cb);
    return st;
}

// Learned encoding period 2/a per axis, in exemplar samples.
template <typename Scalar>
std::vector<double> learned_period_samples(const Model<Scalar>& m) {
    std::vector<double> out;
    for (int j = 0; j < m.period.k(); ++j) out.push_back(m.mapping.period_in_samples(m.period.period(j)));
    return out;
}

}  // namespace ipfn

#endif
