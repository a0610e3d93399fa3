#include <catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "fd_oracle.hpp"
#include "ipfn/synthetic.hpp"
#include "ipfn/training.hpp"

using namespace ipfn;
using Catch::Approx;
using ipfn::test::central_difference;
using ipfn::test::rel_err;

namespace {

Exemplar stripes(std::uint64_t seed = 1, int size = 32, double period = 8.0) {
    Rng rng(seed);
    return make_stripe_exemplar(size, size, 3, period, 0.1, rng);
}

TrainConfig tiny_config(std::uint64_t seed = 0) {
    TrainConfig c;
    c.patch = {16, 16};
    c.batch = 2;
    c.hidden_width = 8;
    c.critic_base_width = 4;
    c.d_steps = 2;
    c.g_steps = 2;
    c.iterations = 0;
    c.seed = seed;
    return c;
}

// Linear critic D(x) = w . x: the input gradient is w for every patch.
Mat<double> tiled(const Mat<double>& w, int count) {
    Mat<double> g(w.rows() * count, w.cols());
    for (int n = 0; n < count; ++n) g.middleRows(n * w.rows(), w.rows()) = w;
    return g;
}

PatchBatch<double> random_batch(Rng& rng, int n, const std::vector<int>& dims, int c) {
    PatchBatch<double> b(n, dims, c);
    for (Eigen::Index i = 0; i < b.data.size(); ++i) b.data.data()[i] = rng.uniform();
    return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST_CASE("train config resolves per-axis defaults", "[training]") {
    TrainConfig c;
    c.resolve(2);
    REQUIRE(c.patch == std::vector<int>{128, 128});
    REQUIRE(c.latent_grid == std::vector<int>{5, 5});
    REQUIRE(c.period_init == std::vector<double>{1.0, 1.0});
    REQUIRE(c.coord_spacing == Approx(4.0 / (4.0 * 128)));
    REQUIRE(c.critic_layers == 5);
    REQUIRE(c.lr == 1e-4);
    REQUIRE(c.d_steps == 5);
    REQUIRE(c.g_steps == 5);
    REQUIRE(c.iterations == 12500);
    REQUIRE(c.batch == 8);
    REQUIRE(c.lambda_gp == 10.0);
    REQUIRE(c.shift_lo == -4.0);
    REQUIRE(c.shift_hi == 4.0);
    REQUIRE(c.bandwidth_i == 5);

    TrainConfig v;
    v.resolve(3);
    REQUIRE(v.patch == std::vector<int>{64, 64, 64});
    REQUIRE(v.critic_layers == 4);
}

TEST_CASE("train config rejects invalid settings", "[training][error]") {
    auto bad = [](auto mutate, int k = 2) {
        TrainConfig c;
        mutate(c);
        REQUIRE_THROWS_AS(c.resolve(k), ConfigError);
    };
    bad([](TrainConfig& c) { c.lr = 0; });
    bad([](TrainConfig& c) { c.lambda_gp = -1; });
    bad([](TrainConfig& c) { c.batch = 0; });
    bad([](TrainConfig& c) { c.beta2 = 1.0; });
    bad([](TrainConfig& c) { c.patch = {64}; });
    bad([](TrainConfig& c) { c.period_init = {1.0, -1.0}; });
    bad([](TrainConfig& c) { c.shift_lo = 1; c.shift_hi = 0; });
    bad([](TrainConfig& c) { c.guidance.kind = GuidanceKind::directional; }, 3);
    bad([](TrainConfig& c) { c.guidance.kind = GuidanceKind::density; }, 2);
    bad([](TrainConfig& c) {
        c.guidance.kind = GuidanceKind::directional;
        c.guidance.line = {0, 0, 0};
    });
    REQUIRE_THROWS_AS(init_train_state<float>(stripes(), [] {
                          auto c = tiny_config();
                          c.patch = {64, 64};
                          return c;
                      }()),
                      ConfigError);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("adam follows the bias-corrected recurrence", "[training][adam]") {
    SECTION("hand-computed first step") {
        std::vector<double> x{0.0};
        ParamVector<double> pv;
        pv.add("x", {1}, x);
        AdamState<double> st;
        const std::vector<double> g{1.0};
        adam_update(pv, std::span<const double>(g), st, {0.1, 0.9, 0.999, 1e-8});
        REQUIRE(x[0] == Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
        REQUIRE(st.t == 1);
        REQUIRE(st.m[0] == Approx(0.1));
        REQUIRE(st.v[0] == Approx(0.001));
    }
    SECTION("zero gradient leaves params and decays moments") {
        std::vector<double> x{0.5, -2.0};
        ParamVector<double> pv;
        pv.add("x", {2}, x);
        AdamState<double> st{{0.4, -0.2}, {0.3, 0.1}, 3};
        const std::vector<double> g{0.0, 0.0};
        const AdamHyper h{1e-3, 0.5, 0.9, 1e-8};
        const auto before = x;
        // Moments stay nonzero, so params still move by the momentum term;
        // starting from zero moments they do not move at all.
        adam_update(pv, std::span<const double>(g), st, h);
        REQUIRE(st.m[0] == Approx(0.2));
        REQUIRE(st.v[1] == Approx(0.09));
        AdamState<double> fresh;
        x = before;
        adam_update(pv, std::span<const double>(g), fresh, h);
        REQUIRE(x == before);
    }
    SECTION("size mismatch") {
        std::vector<double> x{0.0};
        ParamVector<double> pv;
        pv.add("x", {1}, x);
        AdamState<double> st;
        const std::vector<double> g{1.0, 2.0};
        REQUIRE_THROWS_AS(adam_update(pv, std::span<const double>(g), st, {}), ConfigError);
    }
}

// ---------------------------------------------------------------------------
// Gradient penalty
// ---------------------------------------------------------------------------

TEST_CASE("gradient penalty of linear and constant critics", "[training][penalty]") {
    Rng rng(21);
    const std::vector<int> dims{4, 4};
    const auto real = random_batch(rng, 3, dims, 2);
    const auto fake = random_batch(rng, 3, dims, 2);
    Mat<double> w(16, 2);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    w /= w.norm();

    const double unit = gradient_penalty<double>([&](const PatchBatch<double>& x) { return tiled(w, x.count); }, real,
                                                 fake, rng);
    REQUIRE(unit < 1e-10);
    const double twice = gradient_penalty<double>(
        [&](const PatchBatch<double>& x) { return Mat<double>(tiled(2.0 * w, x.count)); }, real, fake, rng);
    REQUIRE(twice == Approx(1.0).epsilon(1e-12));
    const double flat = gradient_penalty<double>(
        [&](const PatchBatch<double>& x) { return Mat<double>::Zero(x.data.rows(), x.data.cols()).eval(); }, real, fake,
        rng);
    REQUIRE(flat == 1.0);

    // Same values through a conv critic with all-zero weights (constant).
    CriticConfig cc;
    cc.patch = dims;
    cc.in_channels = 2;
    cc.base_width = 2;
    cc.layers = 2;
    const Critic<double> critic(cc);
    auto zero = CriticParams<double>::zeros_like(init_critic<double>(rng, cc));
    zero.head_bias = 3.0;
    REQUIRE(gradient_penalty(critic, zero, real, fake, rng) == 1.0);
    REQUIRE_THROWS_AS(gradient_penalty(critic, zero, real, random_batch(rng, 2, dims, 2), rng), ConfigError);
}

TEST_CASE("gradient penalty is symmetric in real and fake", "[training][penalty][property]") {
    Rng rng(22);
    CriticConfig cc;
    cc.patch = {8, 8};
    cc.in_channels = 1;
    cc.base_width = 4;
    cc.layers = 3;
    const Critic<double> critic(cc);
    const auto p = init_critic<double>(rng, cc);
    const auto a = random_batch(rng, 1, cc.patch, 1);
    auto b = random_batch(rng, 1, cc.patch, 1);
    b.data.array() *= 3.0;

    const int draws = 1000;
    std::vector<double> fwd, rev;
    for (int i = 0; i < draws; ++i) {
        fwd.push_back(gradient_penalty(critic, p, a, b, rng));
        rev.push_back(gradient_penalty(critic, p, b, a, rng));
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& se) {
        mean = 0.0;
        for (double x : v) mean += x / v.size();
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean) / (v.size() - 1);
        se = std::sqrt(var / v.size());
    };
    double m1, s1, m2, s2;
    stats(fwd, m1, s1);
    stats(rev, m2, s2);
    INFO("means " << m1 << " vs " << m2);
    REQUIRE(s1 + s2 > 0.0);
    REQUIRE(std::abs(m1 - m2) <= 2.0 * std::sqrt(s1 * s1 + s2 * s2));
}

// ---------------------------------------------------------------------------
// Critic objective
// ---------------------------------------------------------------------------

TEST_CASE("critic loss cancels on identical batches", "[training]") {
    Rng rng(23);
    CriticConfig cc;
    cc.patch = {8, 8};
    cc.in_channels = 3;
    cc.base_width = 4;
    cc.layers = 2;
    const Critic<double> critic(cc);
    const auto p = init_critic<double>(rng, cc);
    const auto x = random_batch(rng, 4, cc.patch, 3);
    Rng r1(5), r2(5);
    const CriticLoss l = critic_loss_and_grad(critic, p, x, x, 3, 10.0, r1, nullptr);
    REQUIRE(l.wasserstein == 0.0);
    REQUIRE(l.loss == Approx(10.0 * gradient_penalty(critic, p, x, x, r2)).epsilon(1e-12));

    auto zero = CriticParams<double>::zeros_like(p);
    zero.head_bias = -2.0;
    auto g = CriticParams<double>::zeros_like(p);
    const auto y = random_batch(rng, 4, cc.patch, 3);
    const CriticLoss l0 = critic_loss_and_grad(critic, zero, x, y, 3, 0.0, r1, &g);
    REQUIRE(l0.loss == 0.0);
    for (double v : g.view().flatten()) REQUIRE(v == 0.0);
}

TEST_CASE("critic loss gradient matches finite differences", "[training][gradient]") {
    Rng rng(24);
    CriticConfig cc;
    cc.patch = {8, 8};
    cc.in_channels = 3;  // two image channels plus guidance
    cc.base_width = 3;
    cc.layers = 2;
    const Critic<double> critic(cc);
    auto p = init_critic<double>(rng, cc);
    for (auto& b : p.conv_biases) b.setConstant(0.05);
    const std::vector<double> g{0.3, -0.4};
    const auto real = append_guidance_channel(random_batch(rng, 2, cc.patch, 2), g);
    const auto fake = append_guidance_channel(random_batch(rng, 2, cc.patch, 2), g);
    const Rng eps_rng(99);
    auto loss = [&](const CriticParams<double>& q) {
        Rng r = eps_rng;
        return critic_loss_and_grad(critic, q, real, fake, 2, 10.0, r, nullptr).loss;
    };
    auto grads = CriticParams<double>::zeros_like(p);
    Rng r = eps_rng;
    critic_loss_and_grad(critic, p, real, fake, 2, 10.0, r, &grads);
    auto pv = p.view();
    const auto flat = grads.view().flatten();
    double worst = 0.0;
    for (int probe = 0; probe < 80; ++probe) {
        const std::size_t idx = rng.index(pv.size());
        const double fd = central_difference(1e-6, [&](double t) {
            auto q = p;
            q.view().at(idx) += t;
            return loss(q);
        });
        worst = std::max(worst, rel_err(flat[idx], fd));
    }
    REQUIRE(worst < 1e-4);
}

TEST_CASE("critic loss decreases on a fixed batch pair", "[training][trend]") {
    for (std::uint64_t seed : {1, 2, 3}) {
        Rng rng(seed);
        CriticConfig cc;
        cc.patch = {8, 8};
        cc.in_channels = 1;
        cc.base_width = 4;
        cc.layers = 2;
        const Critic<float> critic(cc);
        auto p = init_critic<float>(rng, cc);
        PatchBatch<float> real(4, cc.patch, 1), fake(4, cc.patch, 1);
        for (Eigen::Index i = 0; i < real.data.size(); ++i) {
            real.data.data()[i] = static_cast<float>(0.5 + 0.5 * std::sin(i * 0.7));
            fake.data.data()[i] = static_cast<float>(rng.uniform());
        }
        AdamState<float> opt;
        auto step = [&] {
            auto grads = CriticParams<float>::zeros_like(p);
            const auto l = critic_loss_and_grad(critic, p, real, fake, 1, 10.0, rng, &grads);
            auto view = p.view();
            const auto flat = grads.view().flatten();
            adam_update(view, std::span<const float>(flat), opt, {1e-3, 0.5, 0.9, 1e-8});
            return l.loss;
        };
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double l = step();
            if (i < 5) first += l / 5;
            if (i >= 45) last += l / 5;
        }
        INFO("seed " << seed << ": " << first << " -> " << last);
        REQUIRE(last < first);
    }
}

// ---------------------------------------------------------------------------
// Fake batches and the generator objective
// ---------------------------------------------------------------------------

TEST_CASE("fake batch shape and determinism", "[training]") {
    auto cfg = tiny_config();
    cfg.patch = {128, 128};
    cfg.batch = 8;
    cfg.resolve(2);
    Rng init(1);
    const auto model = init_model<float>(cfg.arch(2, 3), {cfg.scale_s, cfg.coord_spacing}, cfg.period_init, true, init);
    Rng a(7), b(7);
    const auto fa = make_fake_batch(model, cfg, 8, a);
    const auto fb = make_fake_batch(model, cfg, 8, b);
    REQUIRE(fa.patches.count == 8);
    REQUIRE(fa.patches.spatial == std::vector<int>{128, 128});
    REQUIRE(fa.patches.channels == 3);
    REQUIRE(fa.patches.data.rows() == 8 * 128 * 128);
    REQUIRE(fa.patches.data == fb.patches.data);
    REQUIRE(fa.patches.data.minCoeff() > 0.0f);
    REQUIRE(fa.patches.data.maxCoeff() < 1.0f);
    for (const auto& off : fa.offsets)
        for (double o : off) REQUIRE((o >= -4.0 && o < 4.0));
}

TEST_CASE("disable_shift centres every sample", "[training]") {
    auto cfg = tiny_config();
    cfg.disable_shift = true;
    cfg.resolve(2);
    Rng init(1), rng(2);
    const auto model = init_model<float>(cfg.arch(2, 3), {cfg.scale_s, cfg.coord_spacing}, cfg.period_init, true, init);
    const auto fb = make_fake_batch(model, cfg, 3, rng);
    const std::size_t n = fb.coords.size() / 3;
    const std::vector<double> first(fb.coords.begin(), fb.coords.begin() + n);
    for (int s = 1; s < 3; ++s) REQUIRE(std::equal(first.begin(), first.end(), fb.coords.begin() + s * n));
    // Samples differ only through the latent draw.
    REQUIRE(fb.patches.data.topRows(256) != fb.patches.data.middleRows(256, 256));

    // With the latent grid frozen as a parameter the batch is a pure function of params.
    cfg.trainable_latent = true;
    cfg.disable_period_learning = true;
    Rng i2(1), x(3), y(4);
    const auto fixed = init_model<float>(cfg.arch(2, 3), {cfg.scale_s, cfg.coord_spacing}, cfg.period_init, false, i2);
    REQUIRE(make_fake_batch(fixed, cfg, 2, x).patches.data == make_fake_batch(fixed, cfg, 2, y).patches.data);
}

TEST_CASE("generator loss gradient matches finite differences", "[training][gradient]") {
    auto cfg = tiny_config(5);
    cfg.patch = {8, 8};
    cfg.critic_layers = 2;
    cfg.trainable_latent = true;
    cfg.bandwidth_i = 3;
    cfg.period_init = {1.3, 0.8};
    cfg.guidance.kind = GuidanceKind::directional;
    auto st = init_train_state<double>(stripes(), cfg);
    const Critic<double> critic(st.critic.config);
    for (auto& b : st.critic.conv_biases) b.setConstant(0.02);
    // Nonzero biases keep units whose inputs are all dead off the ReLU kink.
    Rng rng(8);
    for (auto& b : st.model.generator.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-0.1, 0.1);

    auto fb = make_fake_batch(st.model, st.config, 2, rng, std::vector<double>{0.2, -0.5}, true);
    GeneratorGrads<double> grads;
    const double gl = generator_loss_and_grad(st.model, critic, st.critic, fb, grads);
    const auto flat = grads.flatten(true, true);

    // Oracle: recompute the loss from the same coordinates and latent draw
    // (grid extent held at its original scale).
    auto loss = [&](const Model<double>& m) {
        const Mat<double> enc = periodic_encode(std::span<const double>(fb.coords), m.period, m.arch.encoder());
        const std::size_t pts = fb.patches.points_per_patch();
        Mat<double> lat(static_cast<Eigen::Index>(2 * pts), m.arch.latent_dim);
        Mat<double> gcol(static_cast<Eigen::Index>(2 * pts), 1);
        for (int s = 0; s < 2; ++s) {
            auto spec = fb.latents[s];
            spec.values = m.latent.values;
            lat.middleRows(s * pts, pts) = latent_field_eval(spec, std::span<const double>(fb.coords.data() + s * pts * 2, pts * 2));
            gcol.middleRows(s * pts, pts).setConstant(fb.guidance[s]);
        }
        PatchBatch<double> x(2, cfg.patch, 3);
        x.data = generator_forward(m.generator, enc, lat, &gcol);
        return -critic.forward(st.critic, append_guidance_channel(x, fb.guidance)).mean();
    };

    auto pv = st.generator_view();
    REQUIRE(gl == Approx(loss(st.model)).epsilon(1e-12));
    REQUIRE(pv.size() == flat.size());
    const std::size_t mlp = st.model.generator.parameter_count();
    std::vector<std::size_t> probes{mlp, mlp + 1};  // both log-period entries
    for (int i = 0; i < 50; ++i) probes.push_back(rng.index(pv.size()));
    double worst = 0.0;
    for (std::size_t idx : probes) {
        const double fd = central_difference(1e-7, [&](double t) {
            TrainState<double> tmp = st;
            tmp.generator_view().at(idx) += t;
            return loss(tmp.model);
        });
        worst = std::max(worst, rel_err(flat[idx], fd));
    }
    REQUIRE(std::abs(flat[mlp]) > 0.0);
    REQUIRE(worst < 1e-4);
}

TEST_CASE("constant critic gives the generator no signal", "[training][gradient]") {
    auto cfg = tiny_config();
    auto st = init_train_state<double>(stripes(), cfg);
    st.critic = CriticParams<double>::zeros_like(st.critic);
    st.critic.head_bias = 1.5;
    const Critic<double> critic(st.critic.config);
    Rng rng(3);
    auto fb = make_fake_batch(st.model, st.config, 2, rng, {}, true);
    GeneratorGrads<double> grads;
    REQUIRE(generator_loss_and_grad(st.model, critic, st.critic, fb, grads) == -1.5);
    for (double v : grads.flatten(true, false)) REQUIRE(v == 0.0);
}

// ---------------------------------------------------------------------------
// Steps and loop
// ---------------------------------------------------------------------------

TEST_CASE("each step updates only its own network", "[training]") {
    const auto ex = stripes();
    auto st = init_train_state<float>(ex, tiny_config(3));
    Trainer<float> tr(ex, st);
    const auto gen0 = st.generator_view().flatten();
    const auto crit0 = st.critic.view().flatten();
    tr.critic_step();
    REQUIRE(st.generator_view().flatten() == gen0);
    const auto crit1 = st.critic.view().flatten();
    REQUIRE(crit1 != crit0);
    tr.generator_step();
    REQUIRE(st.critic.view().flatten() == crit1);
    REQUIRE(st.generator_view().flatten() != gen0);
    REQUIRE(st.critic_updates == 1);
    REQUIRE(st.generator_updates == 1);
}

TEST_CASE("disable_period_learning freezes a", "[training]") {
    const auto ex = stripes();
    auto cfg = tiny_config();
    cfg.disable_period_learning = true;
    auto st = init_train_state<float>(ex, cfg);
    const auto a0 = st.model.period.a();
    Trainer<float>(ex, st).generator_step();
    REQUIRE(st.model.period.a() == a0);
}

TEST_CASE("iterations alternate critic then generator updates", "[training]") {
    const auto ex = stripes();
    auto cfg = tiny_config();
    cfg.d_steps = 5;
    cfg.g_steps = 5;
    cfg.iterations = 2;
    cfg.telemetry_every = 1;
    std::string order;
    std::vector<TelemetryRecord> telemetry;
    std::vector<long> checkpoints;
    TrainCallbacks cb;
    cb.on_step = [&](char c) { order.push_back(c); };
    cb.on_telemetry = [&](const TelemetryRecord& r) { telemetry.push_back(r); };
    cb.on_checkpoint = [&](long it) { checkpoints.push_back(it); };
    const auto st = train<float>(ex, cfg, cb);
    REQUIRE(order == "DDDDDGGGGGDDDDDGGGGG");
    REQUIRE(st.iteration == 2);
    REQUIRE(st.critic_updates == 10);
    REQUIRE(st.generator_updates == 10);
    REQUIRE(telemetry.size() == 2);
    for (const auto& r : telemetry) {
        REQUIRE(std::isfinite(r.wasserstein_estimate));
        REQUIRE(r.a.size() == 2);
    }
    REQUIRE(checkpoints == std::vector<long>{2});
    REQUIRE(st.history.size() == 2);
}

TEST_CASE("zero iterations returns the initial state", "[training]") {
    const auto ex = stripes();
    const auto cfg = tiny_config(4);
    const auto init = init_train_state<float>(ex, cfg);
    auto st = train<float>(ex, cfg);
    REQUIRE(st.iteration == 0);
    REQUIRE(st.rng == init.rng);
    REQUIRE(st.generator_view().flatten() == TrainState<float>(init).generator_view().flatten());
    REQUIRE(st.critic.view().flatten() == CriticParams<float>(init.critic).view().flatten());
}

TEST_CASE("training is deterministic per seed", "[training]") {
    const auto ex = stripes();
    auto cfg = tiny_config(6);
    cfg.iterations = 2;
    auto a = train<float>(ex, cfg);
    auto b = train<float>(ex, cfg);
    REQUIRE(a.generator_view().flatten() == b.generator_view().flatten());
    REQUIRE(a.critic.view().flatten() == b.critic.view().flatten());
    REQUIRE(a.gen_opt == b.gen_opt);
    REQUIRE(a.rng == b.rng);
}

TEST_CASE("the period receives gradient after warmup", "[training][gradient]") {
    const auto ex = stripes(2, 48, 8.0);
    auto cfg = tiny_config(7);
    cfg.iterations = 10;
    auto st = train<float>(ex, cfg);
    const Critic<float> critic(st.critic.config);
    Rng rng(1);
    auto fb = make_fake_batch(st.model, st.config, 4, rng, {}, true);
    GeneratorGrads<float> grads;
    generator_loss_and_grad(st.model, critic, st.critic, fb, grads);
    double mag = 0.0;
    for (double g : grads.rho) mag += std::abs(g);
    REQUIRE(std::isfinite(mag));
    REQUIRE(mag > 1e-8);
}

TEST_CASE("non-finite losses abort with diagnostics", "[training][error]") {
    const auto ex = stripes();
    auto st = init_train_state<float>(ex, tiny_config());
    st.model.generator.weights.back()(0, 0) = std::numeric_limits<float>::quiet_NaN();
    Trainer<float> tr(ex, st);
    try {
        tr.generator_step();
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        REQUIRE(std::string(e.what()).find("iteration 0") != std::string::npos);
        REQUIRE(e.code() == ExitCode::numeric);
    }
}

TEST_CASE("conditional training pairs guidance with patches", "[training]") {
    const auto ex = stripes(3, 32);
    auto cfg = tiny_config();
    cfg.guidance.kind = GuidanceKind::directional;
    cfg.guidance.line = Line::horizontal();
    cfg.iterations = 1;
    auto st = train<float>(ex, cfg);
    REQUIRE(st.critic.config.in_channels == 4);
    REQUIRE(st.model.arch.input_width() == st.model.arch.encoder().out_dim() + 5 + 1);
    REQUIRE(st.model.guidance_min < st.model.guidance_max);
    REQUIRE(st.model.guidance_min >= -1.0);
    REQUIRE(st.model.guidance_max <= 1.0);
}
