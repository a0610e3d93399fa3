#ifndef IPFN_CHECKPOINT_HPP
#define IPFN_CHECKPOINT_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <zlib.h>

#include "ipfn/config.hpp"
#include "ipfn/critic.hpp"
#include "ipfn/error.hpp"
#include "ipfn/io.hpp"
#include "ipfn/model.hpp"
#include "ipfn/training.hpp"

namespace ipfn {

// Layout: magic "IPFNCKP1", u32 version, u32 record count, records, u32 CRC32
// of all preceding bytes. Record: u32 name length, name, u8 dtype, u32 rank,
// rank x u64 dims, u64 payload bytes, payload. All integers little-endian.
inline constexpr std::array<char, 8> checkpoint_magic{'I', 'P', 'F', 'N', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t checkpoint_version = 1;

enum class RecordType : std::uint8_t { f32 = 0, f64 = 1, text = 2 };

struct CheckpointRecord {
    RecordType type = RecordType::text;
    std::vector<std::uint64_t> shape;
    std::string payload;  // raw little-endian bytes
};

using RecordMap = std::map<std::string, CheckpointRecord>;

namespace detail {

template <typename Scalar>
constexpr RecordType record_type() {
    return std::is_same_v<Scalar, float> ? RecordType::f32 : RecordType::f64;
}

template <typename Scalar>
CheckpointRecord array_record(std::span<const Scalar> v, std::vector<std::uint64_t> shape) {
    static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
    CheckpointRecord r;
    r.type = record_type<Scalar>();
    r.shape = std::move(shape);
    r.payload.assign(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(Scalar));
    return r;
}

template <typename Scalar>
void read_array(const RecordMap& recs, const std::string& name, std::span<Scalar> out) {
    const auto it = recs.find(name);
    if (it == recs.end()) throw FormatError("checkpoint: missing record '" + name + "'");
    if (it->second.type != record_type<Scalar>())
        throw FormatError("checkpoint: record '" + name + "' has a different precision");
    if (it->second.payload.size() != out.size() * sizeof(Scalar))
        throw FormatError("checkpoint: record '" + name + "' has the wrong size");
    std::memcpy(out.data(), it->second.payload.data(), it->second.payload.size());
}

template <typename Scalar>
std::vector<Scalar> read_vector(const RecordMap& recs, const std::string& name) {
    const auto it = recs.find(name);
    if (it == recs.end()) throw FormatError("checkpoint: missing record '" + name + "'");
    std::vector<Scalar> v(it->second.payload.size() / sizeof(Scalar));
    read_array<Scalar>(recs, name, v);
    return v;
}

inline std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

template <typename Scalar>
void add_params(RecordMap& recs, ParamVector<Scalar> pv) {
    for (const auto& ref : pv.refs()) {
        std::vector<std::uint64_t> shape(ref.shape.begin(), ref.shape.end());
        recs[ref.name] = array_record<Scalar>(std::span<const Scalar>(ref.values.data(), ref.values.size()), shape);
    }
}

template <typename Scalar>
void read_params(const RecordMap& recs, ParamVector<Scalar> pv) {
    for (const auto& ref : pv.refs()) read_array<Scalar>(recs, ref.name, ref.values);
}

}  // namespace detail

inline std::string encode_records(const RecordMap& recs) {
    std::string out(checkpoint_magic.begin(), checkpoint_magic.end());
    detail::put_u32(out, checkpoint_version);
    detail::put_u32(out, static_cast<std::uint32_t>(recs.size()));
    for (const auto& [name, r] : recs) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(r.type));
        detail::put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
        for (auto d : r.shape) detail::put_u64(out, d);
        detail::put_u64(out, r.payload.size());
        out += r.payload;
    }
    detail::put_u32(out, detail::crc32_of(out, out.size()));
    return out;
}

inline RecordMap decode_records(const std::string& bytes, const std::string& what = "checkpoint") {
    if (bytes.size() < 20) throw FormatError(what + ": truncated data");
    if (std::memcmp(bytes.data(), checkpoint_magic.data(), 8) != 0) throw FormatError(what + ": bad magic");
    detail::ByteReader crc_reader(bytes, what);
    crc_reader.bytes(bytes.size() - 4);
    if (crc_reader.u32() != detail::crc32_of(bytes, bytes.size() - 4)) throw FormatError(what + ": CRC mismatch");
    const std::string body = bytes.substr(0, bytes.size() - 4);
    detail::ByteReader in(body, what);
    in.bytes(8);
    const std::uint32_t version = in.u32();
    if (version != checkpoint_version)
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = in.u32();
    RecordMap recs;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = in.bytes(in.u32());
        CheckpointRecord r;
        const std::string t = in.bytes(1);
        const auto type = static_cast<std::uint8_t>(t[0]);
        if (type > 2) throw FormatError(what + ": unknown record type in '" + name + "'");
        r.type = static_cast<RecordType>(type);
        const std::uint32_t rank = in.u32();
        if (rank > 8) throw FormatError(what + ": implausible rank in '" + name + "'");
        for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(in.u64());
        const std::uint64_t n = in.u64();
        if (n > in.remaining()) throw FormatError(what + ": truncated data");
        r.payload = in.bytes(static_cast<std::size_t>(n));
        if (!recs.emplace(name, std::move(r)).second) throw FormatError(what + ": duplicate record '" + name + "'");
    }
    if (in.remaining() != 0) throw FormatError(what + ": trailing bytes");
    return recs;
}

// ---------------------------------------------------------------------------
// Model and training state
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Json model_meta(const Model<Scalar>& m) {
    return Json{{"arch", to_json(m.arch)},
                {"scale_s", m.mapping.scale_s},
                {"spacing", m.mapping.spacing},
                {"period_trainable", m.period.trainable},
                {"value_offset", m.value_offset},
                {"value_scale", m.value_scale},
                {"kind", to_string(m.kind)},
                {"guidance_mean", m.guidance_mean},
                {"guidance_min", m.guidance_min},
                {"guidance_max", m.guidance_max},
                {"train_patch", m.train_patch},
                {"latent_base_spacing", m.latent.base_spacing}};
}

template <typename Scalar>
void add_model(RecordMap& recs, Model<Scalar>& m) {
    add_params(recs, m.generator.view());
    recs["period.rho"] = array_record<Scalar>(std::span<const Scalar>(m.period.rho), {m.period.rho.size()});
    std::vector<std::uint64_t> lshape(m.latent.grid_dims.begin(), m.latent.grid_dims.end());
    lshape.push_back(static_cast<std::uint64_t>(m.latent.latent_dim));
    recs["latent.values"] = array_record<Scalar>(std::span<const Scalar>(m.latent.values), lshape);
    recs["latent.extent_scale"] =
        array_record<double>(std::span<const double>(m.latent.extent_scale), {m.latent.extent_scale.size()});
}

template <typename Scalar>
Model<Scalar> read_model(const RecordMap& recs, const Json& meta) {
    Model<Scalar> m;
    m.arch = model_arch_from_json(meta.at("arch"));
    m.mapping = {meta.at("scale_s").get<double>(), meta.at("spacing").get<double>()};
    m.value_offset = meta.at("value_offset").get<double>();
    m.value_scale = meta.at("value_scale").get<double>();
    m.kind = meta.at("kind").get<std::string>() == "sdf3d" ? ExemplarKind::sdf3d : ExemplarKind::image2d;
    m.guidance_mean = meta.at("guidance_mean").get<double>();
    m.guidance_min = meta.at("guidance_min").get<double>();
    m.guidance_max = meta.at("guidance_max").get<double>();
    m.train_patch = meta.at("train_patch").get<std::vector<int>>();
    Rng zero(0);
    m.generator = GeneratorParams<Scalar>::zeros_like(init_generator<Scalar>(zero, m.arch.widths()));
    read_params(recs, m.generator.view());
    m.period.trainable = meta.at("period_trainable").get<bool>();
    m.period.rho = read_vector<Scalar>(recs, "period.rho");
    if (m.period.k() != m.arch.k) throw FormatError("checkpoint: period has the wrong dimensionality");
    m.latent = make_latent_field<Scalar>(m.arch.latent_grid, m.arch.latent_dim, m.arch.latent_sigma,
                                         meta.at("latent_base_spacing").get<double>());
    read_array<Scalar>(recs, "latent.values", m.latent.values);
    read_array<double>(recs, "latent.extent_scale", m.latent.extent_scale);
    return m;
}

inline Json critic_meta(const CriticConfig& c) {
    return Json{{"k", c.k},           {"patch", c.patch},   {"in_channels", c.in_channels},
                {"base_width", c.base_width}, {"layers", c.layers}, {"leaky_slope", c.leaky_slope}};
}

inline CriticConfig critic_from_meta(const Json& j) {
    CriticConfig c;
    c.k = j.at("k").get<int>();
    c.patch = j.at("patch").get<std::vector<int>>();
    c.in_channels = j.at("in_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.layers = j.at("layers").get<int>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.validate();
    return c;
}

inline Json parse_meta(const RecordMap& recs) {
    const auto it = recs.find("meta");
    if (it == recs.end() || it->second.type != RecordType::text) throw FormatError("checkpoint: missing meta record");
    try {
        return Json::parse(it->second.payload);
    } catch (const Json::exception& e) {
        throw FormatError(std::string("checkpoint: bad meta record: ") + e.what());
    }
}

inline CheckpointRecord text_record(const std::string& s) {
    CheckpointRecord r;
    r.type = RecordType::text;
    r.payload = s;
    return r;
}

}  // namespace detail

template <typename Scalar>
std::string encode_checkpoint(const TrainState<Scalar>& state_in) {
    TrainState<Scalar> st = state_in;  // views need mutable spans
    RecordMap recs;
    Json meta = detail::model_meta(st.model);
    meta["training"] = true;
    meta["config"] = to_json(st.config);
    meta["critic"] = detail::critic_meta(st.critic.config);
    meta["iteration"] = st.iteration;
    meta["critic_updates"] = st.critic_updates;
    meta["generator_updates"] = st.generator_updates;
    meta["gen_adam_t"] = st.gen_opt.t;
    meta["critic_adam_t"] = st.critic_opt.t;
    meta["rng"] = st.rng.save();
    Json hist = Json::array();
    for (const auto& r : st.history) hist.push_back(to_json(r));
    meta["history"] = hist;
    recs["meta"] = detail::text_record(meta.dump());
    detail::add_model(recs, st.model);
    detail::add_params(recs, st.critic.view());
    recs["adam.gen.m"] = detail::array_record<Scalar>(std::span<const Scalar>(st.gen_opt.m), {st.gen_opt.m.size()});
    recs["adam.gen.v"] = detail::array_record<Scalar>(std::span<const Scalar>(st.gen_opt.v), {st.gen_opt.v.size()});
    recs["adam.critic.m"] =
        detail::array_record<Scalar>(std::span<const Scalar>(st.critic_opt.m), {st.critic_opt.m.size()});
    recs["adam.critic.v"] =
        detail::array_record<Scalar>(std::span<const Scalar>(st.critic_opt.v), {st.critic_opt.v.size()});
    return encode_records(recs);
}

template <typename Scalar>
TrainState<Scalar> decode_train_state(const std::string& bytes, const std::string& what = "checkpoint") {
    const RecordMap recs = decode_records(bytes, what);
    try {
        const Json meta = detail::parse_meta(recs);
        TrainState<Scalar> st;
        st.config = train_config_from_json(meta.at("config"));
        st.model = detail::read_model<Scalar>(recs, meta);
        const CriticConfig cc = detail::critic_from_meta(meta.at("critic"));
        Rng zero(0);
        st.critic = CriticParams<Scalar>::zeros_like(init_critic<Scalar>(zero, cc));
        detail::read_params(recs, st.critic.view());
        st.iteration = meta.at("iteration").get<long>();
        st.critic_updates = meta.at("critic_updates").get<long>();
        st.generator_updates = meta.at("generator_updates").get<long>();
        st.gen_opt.t = meta.at("gen_adam_t").get<long>();
        st.critic_opt.t = meta.at("critic_adam_t").get<long>();
        st.gen_opt.m = detail::read_vector<Scalar>(recs, "adam.gen.m");
        st.gen_opt.v = detail::read_vector<Scalar>(recs, "adam.gen.v");
        st.critic_opt.m = detail::read_vector<Scalar>(recs, "adam.critic.m");
        st.critic_opt.v = detail::read_vector<Scalar>(recs, "adam.critic.v");
        st.rng.load(meta.at("rng").get<std::string>());
        for (const auto& r : meta.at("history")) st.history.push_back(telemetry_from_json(r));
        return st;
    } catch (const Json::exception& e) {
        throw FormatError(what + ": bad meta record: " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(what + ": " + e.what());
    }
}

// Inference view of a checkpoint: the model plus bookkeeping.
template <typename Scalar>
struct LoadedModel {
    Model<Scalar> model;
    long iteration = 0;
    TrainConfig config;
};

template <typename Scalar>
LoadedModel<Scalar> decode_model(const std::string& bytes, const std::string& what = "checkpoint") {
    const RecordMap recs = decode_records(bytes, what);
    try {
        const Json meta = detail::parse_meta(recs);
        LoadedModel<Scalar> out;
        out.model = detail::read_model<Scalar>(recs, meta);
        out.iteration = meta.at("iteration").get<long>();
        out.config = train_config_from_json(meta.at("config"));
        return out;
    } catch (const Json::exception& e) {
        throw FormatError(what + ": bad meta record: " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(what + ": " + e.what());
    }
}

// Writes through a temporary file and renames, so an interrupted write never
// replaces the previous checkpoint.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const TrainState<Scalar>& st) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    detail::write_file(tmp, encode_checkpoint(st));
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

template <typename Scalar>
TrainState<Scalar> load_train_state(const std::filesystem::path& path) {
    return decode_train_state<Scalar>(detail::read_file(path), path.string());
}

template <typename Scalar>
LoadedModel<Scalar> load_model(const std::filesystem::path& path) {
    return decode_model<Scalar>(detail::read_file(path), path.string());
}

template <typename Scalar>
bool operator==(const TrainState<Scalar>& a, const TrainState<Scalar>& b) {
    return encode_checkpoint(a) == encode_checkpoint(b);
}

}  // namespace ipfn

#endif
