#ifndef IPFN_CONFIG_HPP
#define IPFN_CONFIG_HPP

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipfn/data.hpp"
#include "ipfn/error.hpp"
#include "ipfn/io.hpp"
#include "ipfn/model.hpp"
#include "ipfn/training.hpp"

namespace ipfn {

using Json = nlohmann::json;

namespace detail {

template <typename T>
void read_key(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "' in " + where);
}

}  // namespace detail

inline Json to_json(const GuidanceSpec& g) {
    return Json{{"kind", to_string(g.kind)}, {"line", {g.line.a, g.line.b, g.line.c}}, {"density_m", g.density_m}};
}

inline GuidanceSpec guidance_from_json(const Json& j) {
    detail::reject_unknown(j, {"kind", "line", "density_m", "preset"}, "guidance");
    GuidanceSpec g;
    std::string kind = "none";
    detail::read_key(j, "kind", kind);
    g.kind = guidance_kind_from_string(kind);
    if (j.contains("preset")) {
        const std::string p = j.at("preset").get<std::string>();
        if (p == "horizontal") g.line = Line::horizontal();
        else if (p == "vertical") g.line = Line::vertical();
        else throw ConfigError("guidance preset must be 'horizontal' or 'vertical', got '" + p + "'");
    }
    if (j.contains("line")) {
        std::vector<double> l;
        detail::read_key(j, "line", l);
        if (l.size() != 3) throw ConfigError("guidance line needs three coefficients a, b, c");
        g.line = {l[0], l[1], l[2]};
    }
    detail::read_key(j, "density_m", g.density_m);
    return g;
}

// Every knob of the training loop, keyed by field name.
inline Json to_json(const TrainConfig& c) {
    return Json{{"lr", c.lr},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_eps", c.adam_eps},
                {"d_steps", c.d_steps},
                {"g_steps", c.g_steps},
                {"iterations", c.iterations},
                {"batch", c.batch},
                {"lambda_gp", c.lambda_gp},
                {"patch", c.patch},
                {"shift_range", {c.shift_lo, c.shift_hi}},
                {"scale_s", c.scale_s},
                {"coord_spacing", c.coord_spacing},
                {"bandwidth_i", c.bandwidth_i},
                {"latent_dim", c.latent_dim},
                {"latent_grid", c.latent_grid},
                {"latent_sigma", c.latent_sigma},
                {"trainable_latent", c.trainable_latent},
                {"hidden_width", c.hidden_width},
                {"gen_layers", c.gen_layers},
                {"critic_base_width", c.critic_base_width},
                {"critic_layers", c.critic_layers},
                {"leaky_slope", c.leaky_slope},
                {"period_init", c.period_init},
                {"disable_period_learning", c.disable_period_learning},
                {"disable_shift", c.disable_shift},
                {"guidance", to_json(c.guidance)},
                {"checkpoint_every", c.checkpoint_every},
                {"telemetry_every", c.telemetry_every},
                {"history_size", c.history_size},
                {"seed", c.seed}};
}

// Keys absent from `j` keep the values already in `base`.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
    static const std::set<std::string> known{
        "lr",          "beta1",          "beta2",         "adam_eps",          "d_steps",       "g_steps",
        "iterations",  "batch",          "lambda_gp",     "patch",             "shift_range",   "scale_s",
        "coord_spacing", "bandwidth_i",  "latent_dim",    "latent_grid",       "latent_sigma",  "trainable_latent",
        "hidden_width", "gen_layers",    "critic_base_width", "critic_layers", "leaky_slope",   "period_init",
        "disable_period_learning", "disable_shift", "guidance", "checkpoint_every", "telemetry_every",
        "history_size", "seed"};
    detail::reject_unknown(j, known, "train config");
    using detail::read_key;
    read_key(j, "lr", c.lr);
    read_key(j, "beta1", c.beta1);
    read_key(j, "beta2", c.beta2);
    read_key(j, "adam_eps", c.adam_eps);
    read_key(j, "d_steps", c.d_steps);
    read_key(j, "g_steps", c.g_steps);
    read_key(j, "iterations", c.iterations);
    read_key(j, "batch", c.batch);
    read_key(j, "lambda_gp", c.lambda_gp);
    read_key(j, "patch", c.patch);
    if (j.contains("shift_range")) {
        std::vector<double> r;
        read_key(j, "shift_range", r);
        if (r.size() != 2) throw ConfigError("shift_range needs two values [lo, hi]");
        c.shift_lo = r[0];
        c.shift_hi = r[1];
    }
    read_key(j, "scale_s", c.scale_s);
    read_key(j, "coord_spacing", c.coord_spacing);
    read_key(j, "bandwidth_i", c.bandwidth_i);
    read_key(j, "latent_dim", c.latent_dim);
    read_key(j, "latent_grid", c.latent_grid);
    read_key(j, "latent_sigma", c.latent_sigma);
    read_key(j, "trainable_latent", c.trainable_latent);
    read_key(j, "hidden_width", c.hidden_width);
    read_key(j, "gen_layers", c.gen_layers);
    read_key(j, "critic_base_width", c.critic_base_width);
    read_key(j, "critic_layers", c.critic_layers);
    read_key(j, "leaky_slope", c.leaky_slope);
    read_key(j, "period_init", c.period_init);
    read_key(j, "disable_period_learning", c.disable_period_learning);
    read_key(j, "disable_shift", c.disable_shift);
    if (j.contains("guidance")) c.guidance = guidance_from_json(j.at("guidance"));
    read_key(j, "checkpoint_every", c.checkpoint_every);
    read_key(j, "telemetry_every", c.telemetry_every);
    read_key(j, "history_size", c.history_size);
    read_key(j, "seed", c.seed);
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    const auto bytes = detail::read_file(path);
    Json j;
    try {
        j = Json::parse(bytes.begin(), bytes.end());
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return train_config_from_json(j);
}

inline Json to_json(const ModelArch& a) {
    return Json{{"k", a.k},
                {"channels", a.channels},
                {"bandwidth_i", a.bandwidth_i},
                {"latent_dim", a.latent_dim},
                {"latent_grid", a.latent_grid},
                {"latent_sigma", a.latent_sigma},
                {"hidden_width", a.hidden_width},
                {"layers", a.layers},
                {"guidance", to_string(a.guidance)},
                {"trainable_latent", a.trainable_latent}};
}

inline ModelArch model_arch_from_json(const Json& j) {
    detail::reject_unknown(j, {"k", "channels", "bandwidth_i", "latent_dim", "latent_grid", "latent_sigma",
                               "hidden_width", "layers", "guidance", "trainable_latent"},
                           "model arch");
    ModelArch a;
    using detail::read_key;
    read_key(j, "k", a.k);
    read_key(j, "channels", a.channels);
    read_key(j, "bandwidth_i", a.bandwidth_i);
    read_key(j, "latent_dim", a.latent_dim);
    read_key(j, "latent_grid", a.latent_grid);
    read_key(j, "latent_sigma", a.latent_sigma);
    read_key(j, "hidden_width", a.hidden_width);
    read_key(j, "layers", a.layers);
    std::string g = "none";
    read_key(j, "guidance", g);
    a.guidance = guidance_kind_from_string(g);
    read_key(j, "trainable_latent", a.trainable_latent);
    a.validate();
    return a;
}

inline Json to_json(const TelemetryRecord& r) {
    return Json{{"iteration", r.iteration},
                {"d_loss", r.d_loss},
                {"g_loss", r.g_loss},
                {"wasserstein_estimate", r.wasserstein_estimate},
                {"a", r.a}};
}

inline TelemetryRecord telemetry_from_json(const Json& j) {
    TelemetryRecord r;
    r.iteration = j.at("iteration").get<long>();
    r.d_loss = j.at("d_loss").get<double>();
    r.g_loss = j.at("g_loss").get<double>();
    r.wasserstein_estimate = j.at("wasserstein_estimate").get<double>();
    r.a = j.at("a").get<std::vector<double>>();
    return r;
}

}  // namespace ipfn

#endif
