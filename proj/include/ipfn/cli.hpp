#ifndef IPFN_CLI_HPP
#define IPFN_CLI_HPP

#include <sys/resource.h>

#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipfn/checkpoint.hpp"
#include "ipfn/config.hpp"
#include "ipfn/error.hpp"
#include "ipfn/io.hpp"
#include "ipfn/metrics.hpp"
#include "ipfn/service.hpp"
#include "ipfn/synth.hpp"
#include "ipfn/synthetic.hpp"
#include "ipfn/training.hpp"

namespace ipfn::cli {

// "512x512" or "64x64x64" in axis order (rows first).
inline std::vector<int> parse_dims(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(part, &used);
            if (used != part.size() || v < 1) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("bad dims '" + s + "': expected positive integers joined by 'x'");
        }
    }
    if (out.size() != 2 && out.size() != 3) throw ConfigError("bad dims '" + s + "': need 2 or 3 axes");
    return out;
}

inline std::vector<double> parse_list(const std::string& s, char sep = ',') {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ConfigError("bad number list '" + s + "'");
        }
    }
    return out;
}

// Peak resident set size of this process in bytes.
inline long peak_rss_bytes() {
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return ru.ru_maxrss * 1024L;
}

// Writes a synthesized raster by extension: .png for 2D, .ipfvol for 3D.
inline void write_output(const std::filesystem::path& path, const Raster& r, int bit_depth) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    const auto ext = path.extension().string();
    if (r.k() == 3) {
        if (ext != ".ipfvol" && ext != ".vol") throw ConfigError("3D output needs an .ipfvol path, got '" + path.string() + "'");
        write_volume(path, r);
        return;
    }
    if (ext != ".png") throw ConfigError("2D output needs a .png path, got '" + path.string() + "'");
    write_image(path, r, bit_depth);
}

inline std::string checkpoint_name(long iteration) {
    std::ostringstream s;
    s << "ckpt-" << std::setw(6) << std::setfill('0') << iteration << ".ipfn";
    return s.str();
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config, exemplar, out, resume;
    std::optional<long> iterations;
    std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
    const Exemplar ex = load_exemplar(a.exemplar);
    TrainState<float> st;
    if (!a.resume.empty()) {
        st = load_train_state<float>(a.resume);
        if (!a.config.empty()) out << "note: --config ignored when resuming; the checkpoint carries its config\n";
        if (a.iterations) st.config.iterations = *a.iterations;
        out << "resuming from '" << a.resume << "' at iteration " << st.iteration << "\n";
    } else {
        TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
        if (a.iterations) cfg.iterations = *a.iterations;
        if (a.seed) cfg.seed = *a.seed;
        st = init_train_state<float>(ex, cfg);
    }
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    std::ofstream telemetry(dir / "telemetry.ndjson", a.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!telemetry) throw IoError("cannot write '" + (dir / "telemetry.ndjson").string() + "'");

    TrainCallbacks cb;
    cb.on_telemetry = [&](const TelemetryRecord& r) {
        telemetry << to_json(r).dump() << "\n";
        telemetry.flush();
        out << "iter " << r.iteration << "  d_loss " << r.d_loss << "  g_loss " << r.g_loss << "  W " << r.wasserstein_estimate
            << "  period_px";
        for (double p : learned_period_samples(st.model)) out << " " << p;
        out << "\n";
    };
    cb.on_checkpoint = [&](long it) {
        if (it > 0 && st.config.checkpoint_every > 0 && it % st.config.checkpoint_every == 0)
            save_checkpoint(dir / checkpoint_name(it), st);
    };
    const auto t0 = std::chrono::steady_clock::now();
    Trainer<float>(ex, st).run(cb);
    save_checkpoint(dir / "ckpt-final.ipfn", st);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "trained to iteration " << st.iteration << " in " << secs << " s; wrote " << (dir / "ckpt-final.ipfn").string()
        << "\n";
    return 0;
}

struct SynthArgs {
    std::string checkpoint, output, dims, chunk, periods = "1x1", constant_latent, guidance_ramp, guidance_map;
    std::uint64_t seed = 0;
    double latent_extent = 1.0;
    std::optional<double> guidance;
    bool tile = false;
    int threads = 0;
    int bit_depth = 8;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const auto loaded = load_model<float>(a.checkpoint);
    const auto& m = loaded.model;
    const auto t0 = std::chrono::steady_clock::now();
    Raster result;
    if (a.tile) {
        TileRequest t;
        for (double p : parse_list(a.periods, 'x')) {
            if (p < 1 || p != std::floor(p)) throw ConfigError("--periods needs positive integers");
            t.periods.push_back(static_cast<int>(p));
        }
        if (static_cast<int>(t.periods.size()) == 1) t.periods.assign(m.arch.k, t.periods[0]);
        if (!a.constant_latent.empty()) t.constant_latent = parse_list(a.constant_latent);
        t.guidance = a.guidance;
        result = seamless_tile(m, t);
    } else {
        if (a.dims.empty()) throw ConfigError("--dims is required unless --tile is given");
        SynthesisRequest req;
        req.out_dims = parse_dims(a.dims);
        req.seed = a.seed;
        req.latent_extent = a.latent_extent;
        req.threads = a.threads;
        if (!a.chunk.empty()) req.chunk_dims = parse_dims(a.chunk);
        if (!a.constant_latent.empty()) req.constant_latent = parse_list(a.constant_latent);
        int given = (a.guidance ? 1 : 0) + (a.guidance_ramp.empty() ? 0 : 1) + (a.guidance_map.empty() ? 0 : 1);
        if (given > 1) throw ConfigError("give at most one of --guidance, --guidance-ramp, --guidance-map");
        if (a.guidance) req.guidance = GuidanceRequest::scalar(*a.guidance);
        if (!a.guidance_ramp.empty()) {
            const auto r = parse_list(a.guidance_ramp, ':');
            if (r.size() != 3) throw ConfigError("--guidance-ramp expects axis:from:to");
            req.guidance = GuidanceRequest::ramp(static_cast<int>(r[0]), r[1], r[2]);
        }
        if (!a.guidance_map.empty()) {
            const std::filesystem::path p(a.guidance_map);
            Raster map = p.extension() == ".png" ? read_png(p) : read_volume(p);
            if (map.channels != 1) throw ConfigError("--guidance-map must have one channel");
            req.guidance = GuidanceRequest::grid(std::move(map));
        }
        result = synthesize(m, req);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_output(a.output, result, a.bit_depth);
    out << "wrote " << a.output << " (";
    for (std::size_t i = 0; i < result.dims.size(); ++i) out << (i ? "x" : "") << result.dims[i];
    out << ", " << result.channels << " channels) in " << std::fixed << std::setprecision(3) << secs
        << " s; peak memory " << peak_rss_bytes() / (1024 * 1024) << " MiB\n";
    return 0;
}

struct EvalArgs {
    std::string checkpoint, output, dims, periods = "2";
    int seeds = 4;
    int periodicity_points = 1000;
};

inline MetricReport evaluate_checkpoint(const TrainState<float>& st, const std::vector<int>& dims, int n_seeds,
                                        int tile_periods, int periodicity_points) {
    if (n_seeds < 2) throw UsageError("eval needs at least 2 seeds");
    const auto& m = st.model;
    MetricReport r;
    r.n_seeds = n_seeds;
    TileRequest t;
    t.periods.assign(m.arch.k, tile_periods);
    r.seam = seam_error(seamless_tile(m, t));
    r.periodicity_error = periodicity_error(m, periodicity_points);
    std::vector<Raster> outs;
    for (int s = 0; s < n_seeds; ++s) {
        SynthesisRequest req;
        req.out_dims = dims;
        req.seed = static_cast<std::uint64_t>(s);
        outs.push_back(synthesize(m, req));
    }
    r.diversity = diversity_score(outs, m.value_offset, m.value_offset + m.value_scale);
    std::vector<double> w;
    for (const auto& h : st.history) w.push_back(h.wasserstein_estimate);
    r.wasserstein = summarize_trace(w);
    r.learned_period_samples = learned_period_samples(m);
    return r;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (a.seeds < 2) throw UsageError("--seeds must be at least 2");
    const auto st = load_train_state<float>(a.checkpoint);
    std::vector<int> dims = a.dims.empty() ? std::vector<int>(st.model.arch.k, st.model.arch.k == 2 ? 128 : 32)
                                           : parse_dims(a.dims);
    if (static_cast<int>(dims.size()) != st.model.arch.k) throw ConfigError("--dims does not match the checkpoint");
    const double p = parse_list(a.periods).at(0);
    const auto report = evaluate_checkpoint(st, dims, a.seeds, static_cast<int>(p), a.periodicity_points);
    const std::string doc = to_json(report).dump(2);
    if (a.output.empty()) {
        out << doc << "\n";
    } else {
        detail::write_file(a.output, doc + "\n");
        out << "wrote " << a.output << "\n";
    }
    return 0;
}

struct ExemplarArgs {
    std::string kind = "stripes", output;
    int size = 128, channels = 3;
    double period = 16.0, noise = 0.1, radius = 5.0;
    int spheres = 40;
    std::uint64_t seed = 0;
};

inline int cmd_exemplar(const ExemplarArgs& a, std::ostream& out) {
    if (a.kind == "stripes") {
        Rng rng(a.seed);
        const auto ex = make_stripe_exemplar(a.size, a.size, a.channels, a.period, a.noise, rng);
        write_output(a.output, ex.data, 8);
    } else if (a.kind == "spheres") {
        write_output(a.output, make_sphere_lattice_sdf(a.size, a.period, a.radius), 8);
    } else if (a.kind == "porous") {
        Rng rng(a.seed);
        write_output(a.output, make_porous_sdf(a.size, a.spheres, 0.5 * a.radius, a.radius, rng), 8);
    } else {
        throw ConfigError("exemplar kind must be 'stripes', 'spheres' or 'porous'");
    }
    out << "wrote " << a.output << "\n";
    return 0;
}

inline Service*& active_service() {
    static Service* s = nullptr;
    return s;
}

inline int cmd_serve(const ServiceOptions& opt, std::ostream& out) {
    Service svc(opt);
    active_service() = &svc;
    std::signal(SIGINT, [](int) {
        if (active_service()) active_service()->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (active_service()) active_service()->stop();
    });
    std::thread announce([&] {
        svc.wait_until_ready();
        out << "serving " << opt.ckpt_dir.string() << " on http://" << opt.host << ":" << svc.port() << "\n" << std::flush;
    });
    const bool ok = svc.listen();
    if (!ok) svc.stop();
    announce.detach();
    active_service() = nullptr;
    if (!ok) throw IoError("cannot bind " + opt.host + ":" + std::to_string(opt.port));
    return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

// Parses `args` (without the program name) and runs the command. Returns the
// process exit code: 0 ok, 2 config/usage, 3 I/O, 4 numeric abort.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Implicit periodic field network: train, synthesize, evaluate, serve"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train on an exemplar");
    train->add_option("--config", ta.config, "JSON training config");
    train->add_option("--exemplar", ta.exemplar, "PNG, layer manifest (.json) or SDF volume (.ipfvol)")->required();
    train->add_option("--out", ta.out, "Output directory for checkpoints and telemetry")->required();
    train->add_option("--resume", ta.resume, "Checkpoint to resume from");
    train->add_option("--iterations", ta.iterations, "Override the total iteration target");
    train->add_option("--seed", ta.seed, "Override the config seed");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Synthesize from a checkpoint");
    synth->add_option("checkpoint", sa.checkpoint, "Checkpoint file")->required();
    synth->add_option("-o,--output", sa.output, "Output .png (2D) or .ipfvol (3D)")->required();
    synth->add_option("--dims", sa.dims, "Output size, e.g. 512x512 or 64x64x64");
    synth->add_option("--seed", sa.seed, "Latent seed");
    synth->add_option("--latent-extent", sa.latent_extent, "Latent field extent multiplier");
    synth->add_option("--constant-latent", sa.constant_latent, "Comma-separated constant latent vector");
    synth->add_option("--chunk", sa.chunk, "Chunk size, e.g. 256x256");
    synth->add_option("--threads", sa.threads, "Worker threads (capped by IPFN_THREADS)");
    synth->add_flag("--tile", sa.tile, "Seamless constant-latent tile");
    synth->add_option("--periods", sa.periods, "Tile periods per axis, e.g. 2x2");
    synth->add_option("--guidance", sa.guidance, "Scalar guidance value");
    synth->add_option("--guidance-ramp", sa.guidance_ramp, "Linear guidance ramp axis:from:to");
    synth->add_option("--guidance-map", sa.guidance_map, "Single-channel guidance map (.png or .ipfvol)");
    synth->add_option("--bit-depth", sa.bit_depth, "PNG bit depth (8 or 16)");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Compute quality metrics over several seeds");
    eval->add_option("checkpoint", ea.checkpoint, "Checkpoint file")->required();
    eval->add_option("--seeds", ea.seeds, "Number of seeds (>= 2)");
    eval->add_option("--dims", ea.dims, "Synthesis size per seed");
    eval->add_option("--tile-periods", ea.periods, "Periods per axis for the seam check");
    eval->add_option("--periodicity-points", ea.periodicity_points, "Random points for the periodicity check");
    eval->add_option("-o,--output", ea.output, "Write the JSON report here instead of stdout");

    ExemplarArgs xa;
    auto* exemplar = app.add_subcommand("exemplar", "Write a synthetic exemplar");
    exemplar->add_option("kind", xa.kind, "stripes (2D image), spheres or porous (3D SDF)")->required();
    exemplar->add_option("-o,--output", xa.output, "Output path")->required();
    exemplar->add_option("--size", xa.size, "Side length in samples");
    exemplar->add_option("--channels", xa.channels, "Image channels");
    exemplar->add_option("--period", xa.period, "Pattern period in samples");
    exemplar->add_option("--noise", xa.noise, "Uniform noise fraction");
    exemplar->add_option("--radius", xa.radius, "Sphere radius in voxels (porous: the largest)");
    exemplar->add_option("--spheres", xa.spheres, "Sphere count for porous");
    exemplar->add_option("--seed", xa.seed, "Noise or placement seed");

    ServiceOptions so;
    std::string ckpt_dir = ".";
    auto* serve = app.add_subcommand("serve", "Run the HTTP synthesis service");
    serve->add_option("--port", so.port, "Port (0 picks a free one)");
    serve->add_option("--host", so.host, "Bind address");
    serve->add_option("--ckpt-dir", ckpt_dir, "Directory of .ipfn checkpoints");
    serve->add_option("--max-dims", so.max_dims, "Per-axis size limit for 2D (3D uses a quarter)");
    serve->add_option("--workers", so.workers, "Concurrent synthesis jobs");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config);
    }
    try {
        if (*train) return cmd_train(ta, out);
        if (*synth) return cmd_synth(sa, out);
        if (*eval) return cmd_eval(ea, out);
        if (*exemplar) return cmd_exemplar(xa, out);
        if (*serve) {
            so.ckpt_dir = ckpt_dir;
            return cmd_serve(so, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::io);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::config);
    }
    return 0;
}

}  // namespace ipfn::cli

#endif
