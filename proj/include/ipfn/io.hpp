#ifndef IPFN_IO_HPP
#define IPFN_IO_HPP

#include <png.h>

#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipfn/data.hpp"
#include "ipfn/error.hpp"

namespace ipfn {

// ---------------------------------------------------------------------------
// Little-endian helpers
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw FormatError(what_ + ": truncated data");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::string& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// IPFVOL volumes: "IPFVOL1\0", u32 H, W, D, u32 C, then H*W*D*C f32, all
// little-endian, row-major with H outermost and C innermost.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 8> ipfvol_magic{'I', 'P', 'F', 'V', 'O', 'L', '1', '\0'};

inline std::string encode_volume(const Raster& r) {
    if (r.k() != 3) throw ConfigError("IPFVOL holds 3D rasters only");
    std::string out(ipfvol_magic.begin(), ipfvol_magic.end());
    for (int d : r.dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
    detail::put_u32(out, static_cast<std::uint32_t>(r.channels));
    out.reserve(out.size() + r.values.size() * 4);
    for (float v : r.values) detail::put_f32(out, v);
    return out;
}

inline Raster decode_volume(const std::string& bytes, const std::string& what = "IPFVOL") {
    detail::ByteReader rd(bytes, what);
    if (rd.bytes(8) != std::string(ipfvol_magic.begin(), ipfvol_magic.end()))
        throw FormatError(what + ": bad magic or version");
    std::vector<int> dims(3);
    for (auto& d : dims) {
        const std::uint32_t v = rd.u32();
        if (v == 0 || v > (1u << 20)) throw FormatError(what + ": invalid dimension");
        d = static_cast<int>(v);
    }
    const std::uint32_t c = rd.u32();
    if (c == 0 || c > 64) throw FormatError(what + ": invalid channel count");
    const std::size_t n = volume(dims) * c;
    if (rd.remaining() != n * 4) throw FormatError(what + ": payload size does not match header");
    Raster r(dims, static_cast<int>(c));
    for (auto& v : r.values) {
        v = rd.f32();
        if (!std::isfinite(v)) throw FormatError(what + ": non-finite sample");
    }
    return r;
}

inline void write_volume(const std::filesystem::path& path, const Raster& r) {
    detail::write_file(path, encode_volume(r));
}

inline Raster read_volume(const std::filesystem::path& path) {
    return decode_volume(detail::read_file(path), "'" + path.string() + "'");
}

inline Exemplar load_volume_exemplar(const std::filesystem::path& path, double truncation = 0.0) {
    Raster r = read_volume(path);
    if (r.channels != 1) throw FormatError("'" + path.string() + "': SDF volumes must have one channel");
    return make_sdf_exemplar(std::move(r), truncation);
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace detail {

struct PngMemReader {
    const std::string* buf;
    std::size_t pos;
};

inline void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<PngMemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->buf->size()) png_error(png, "truncated PNG");
    std::memcpy(out, r->buf->data() + r->pos, n);
    r->pos += n;
}

inline void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
    auto* s = static_cast<std::string*>(png_get_io_ptr(png));
    s->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_mem(png_structp) {}

// Keeps libpng quiet: the message is returned through the thrown error.
inline void png_error_to_string(png_structp png, png_const_charp msg) {
    *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
    png_longjmp(png, 1);
}
inline void png_ignore_warning(png_structp, png_const_charp) {}

struct PngDecoded {
    int width = 0, height = 0, channels = 0, bit_depth = 0;
    std::vector<unsigned char> pixels;  // rows * rowbytes
    std::size_t rowbytes = 0;
};

// Decodes into 8- or 16-bit gray / RGB (palette expanded, alpha stripped).
// Kept free of non-trivial locals between setjmp and the last libpng call.
inline bool png_decode_raw(const std::string& bytes, PngDecoded& out, std::string& err) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_to_string, png_ignore_warning);
    if (!png) {
        err = "out of memory";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    PngMemReader reader{&bytes, 0};
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        err = "corrupt or unsupported PNG" + (err.empty() ? std::string() : " (" + err + ")");
        return false;
    }
    png_set_read_fn(png, &reader, png_read_mem);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // little-endian 16-bit samples
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    out.rowbytes = png_get_rowbytes(png, info);
    out.pixels.resize(out.rowbytes * static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) png_read_row(png, out.pixels.data() + y * out.rowbytes, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

inline bool png_encode_raw(std::string& out, int width, int height, int channels, int bit_depth,
                           const std::vector<unsigned char>& pixels, std::string& err) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) {
        err = "out of memory";
        return false;
    }
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        err = "PNG encoding failed";
        return false;
    }
    png_set_write_fn(png, &out, png_write_mem, png_flush_mem);
    const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY
                      : channels == 2 ? PNG_COLOR_TYPE_GRAY_ALPHA
                      : channels == 3 ? PNG_COLOR_TYPE_RGB
                                      : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<unsigned char*>(pixels.data()) + y * rowbytes);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace detail

// Decode PNG bytes to a raster scaled to [0,1] (8-bit / 255, 16-bit / 65535).
inline Raster decode_png(const std::string& bytes, const std::string& what = "PNG") {
    detail::PngDecoded d;
    std::string err;
    if (!detail::png_decode_raw(bytes, d, err)) throw FormatError(what + ": " + err);
    Raster r({d.height, d.width}, d.channels);
    const double denom = d.bit_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < d.height; ++y) {
        const unsigned char* row = d.pixels.data() + y * d.rowbytes;
        for (int x = 0; x < d.width * d.channels; ++x) {
            const unsigned v = d.bit_depth == 16 ? static_cast<unsigned>(row[2 * x]) | (static_cast<unsigned>(row[2 * x + 1]) << 8)
                                                 : row[x];
            r.values[static_cast<std::size_t>(y) * d.width * d.channels + x] = static_cast<float>(v / denom);
        }
    }
    return r;
}

// Encode a 2D raster with 1-4 channels, clamping to [0,1] and rounding.
inline std::string encode_png(const Raster& r, int bit_depth = 8) {
    if (r.k() != 2) throw ConfigError("PNG output needs a 2D raster");
    if (r.channels < 1 || r.channels > 4) throw ConfigError("PNG output supports 1-4 channels");
    if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PNG bit depth must be 8 or 16");
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    const std::size_t bytes_per = bit_depth / 8;
    std::vector<unsigned char> px(r.values.size() * bytes_per);
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        const double v = std::clamp(static_cast<double>(r.values[i]), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * maxv));
        if (bytes_per == 1) {
            px[i] = static_cast<unsigned char>(q);
        } else {
            px[2 * i] = static_cast<unsigned char>(q & 0xffu);
            px[2 * i + 1] = static_cast<unsigned char>(q >> 8);
        }
    }
    std::string out, err;
    if (!detail::png_encode_raw(out, r.dims[1], r.dims[0], r.channels, bit_depth, px, err)) throw IoError(err);
    return out;
}

inline Raster read_png(const std::filesystem::path& path) {
    return decode_png(detail::read_file(path), "'" + path.string() + "'");
}

inline void write_png(const std::filesystem::path& path, const Raster& r, int bit_depth = 8) {
    detail::write_file(path, encode_png(r, bit_depth));
}

// A manifest is a JSON document {"layers": [{"role": "color", "file": "c.png"}, ...]}
// whose PNGs are stacked along channels in listed order (e.g. color, normal
// and bump maps forming a 9-channel texture).
inline Exemplar load_image_manifest(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    }
    if (!doc.contains("layers") || !doc["layers"].is_array() || doc["layers"].empty())
        throw FormatError("'" + path.string() + "': manifest needs a non-empty 'layers' array");
    std::vector<Raster> parts;
    std::vector<std::string> labels;
    for (const auto& layer : doc["layers"]) {
        const std::string role = layer.value("role", "layer");
        const auto file = path.parent_path() / layer.at("file").get<std::string>();
        parts.push_back(read_png(file));
        for (int c = 0; c < parts.back().channels; ++c) labels.push_back(role + "." + std::to_string(c));
        if (parts.back().dims != parts.front().dims)
            throw FormatError("'" + file.string() + "': layer dims differ from first layer");
    }
    int total = 0;
    for (const auto& p : parts) total += p.channels;
    Raster stacked(parts.front().dims, total);
    int offset = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.points(); ++i)
            for (int c = 0; c < p.channels; ++c) stacked.at(i, offset + c) = p.at(i, c);
        offset += p.channels;
    }
    return make_image_exemplar(std::move(stacked), std::move(labels));
}

// Loads a PNG (1 or 3 channels after decoding) or a layer manifest (.json).
inline Exemplar load_image_exemplar(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("exemplar not found: '" + path.string() + "'");
    if (path.extension() == ".json") return load_image_manifest(path);
    Raster r = read_png(path);
    std::vector<std::string> labels;
    for (int c = 0; c < r.channels; ++c) labels.push_back("color." + std::to_string(c));
    return make_image_exemplar(std::move(r), std::move(labels));
}

inline Exemplar load_exemplar(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".ipfvol" || ext == ".vol") {
        if (!std::filesystem::exists(path)) throw IoError("exemplar not found: '" + path.string() + "'");
        return load_volume_exemplar(path);
    }
    return load_image_exemplar(path);
}

// Writes an image raster; channel counts other than 1-4 are split into
// groups of three PNGs plus a manifest next to `path`.
inline void write_image(const std::filesystem::path& path, const Raster& r, int bit_depth = 8) {
    if (r.channels <= 4) {
        write_png(path, r, bit_depth);
        return;
    }
    nlohmann::json doc;
    doc["layers"] = nlohmann::json::array();
    const auto stem = path.stem().string();
    for (int start = 0, part = 0; start < r.channels; start += 3, ++part) {
        const int n = std::min(3, r.channels - start);
        Raster sub(r.dims, n);
        for (std::size_t i = 0; i < r.points(); ++i)
            for (int c = 0; c < n; ++c) sub.at(i, c) = r.at(i, start + c);
        const std::string file = stem + "." + std::to_string(part) + ".png";
        write_png(path.parent_path() / file, sub, bit_depth);
        doc["layers"].push_back({{"role", "layer" + std::to_string(part)}, {"file", file}});
    }
    auto manifest = path;
    manifest.replace_extension(".json");
    detail::write_file(manifest, doc.dump(2));
}

}  // namespace ipfn

#endif
