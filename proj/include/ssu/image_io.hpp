#pragma once

// 8-bit image container plus PNG and WAV codecs. The PNG writer emits
// non-interlaced 8-bit gray or RGB with filter 0 scanlines; the reader
// handles all five scanline filters for those same layouts, which covers
// every file this project produces.

#include "ssu/common.hpp"

#include <zlib.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace ssu {

struct Image8 {
    int h = 0, w = 0, c = 0;
    std::vector<std::uint8_t> data;  // row-major, interleaved channels

    Image8() = default;
    Image8(int h_, int w_, int c_, std::uint8_t fill = 0)
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    std::uint8_t& at(int y, int x, int ch = 0) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    std::uint8_t at(int y, int x, int ch = 0) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    bool operator==(const Image8& o) const {
        return h == o.h && w == o.w && c == o.c && data == o.data;
    }
};

namespace detail_png {

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::vector<std::uint8_t>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + payload.size())));
    put_u32_be(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail_png

inline std::vector<std::uint8_t> encode_png(const Image8& img) {
    if (img.c != 1 && img.c != 3) throw IoError("encode_png: only gray or RGB supported");
    const std::size_t stride = static_cast<std::size_t>(img.w) * img.c;
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(img.h) * (stride + 1));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = img.data.data() + static_cast<std::size_t>(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }
    uLongf comp_len = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (::compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("encode_png: deflate failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> ihdr;
    detail_png::put_u32_be(ihdr, static_cast<std::uint32_t>(img.w));
    detail_png::put_u32_be(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);                                      // bit depth
    ihdr.push_back(img.c == 1 ? 0 : 2);                     // gray / truecolor
    ihdr.push_back(0), ihdr.push_back(0), ihdr.push_back(0);  // deflate, adaptive, no interlace
    detail_png::write_chunk(out, "IHDR", ihdr);
    detail_png::write_chunk(out, "IDAT", comp);
    detail_png::write_chunk(out, "IEND", {});
    return out;
}

inline Image8 decode_png(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw IoError(what + ": not a PNG file");
    std::size_t pos = 8;
    int w = 0, h = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        std::uint32_t len = detail_png::get_u32_be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError(what + ": truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* payload = bytes.data() + pos + 8;
        std::uint32_t crc = detail_png::get_u32_be(payload + len);
        std::uint32_t actual =
            static_cast<std::uint32_t>(::crc32(0L, bytes.data() + pos + 4, 4 + len));
        if (crc != actual) throw IoError(what + ": PNG chunk CRC mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError(what + ": bad IHDR");
            w = static_cast<int>(detail_png::get_u32_be(payload));
            h = static_cast<int>(detail_png::get_u32_be(payload + 4));
            int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
                throw IoError(what + ": unsupported PNG layout (need 8-bit gray or RGB)");
            channels = color == 0 ? 1 : 3;
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || w <= 0 || h <= 0) throw IoError(what + ": missing IHDR");

    const std::size_t stride = static_cast<std::size_t>(w) * channels;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError(what + ": PNG inflate failed");

    Image8 img(h, w, channels);
    const int bpp = channels;
    std::vector<std::uint8_t> prev(stride, 0);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        std::uint8_t filter = src[0];
        std::uint8_t* dst = img.data.data() + static_cast<std::size_t>(y) * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            int x = src[1 + i];
            int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            int b = prev[i];
            int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += detail_png::paeth(a, b, c); break;
                default: throw IoError(what + ": unknown PNG filter");
            }
            dst[i] = static_cast<std::uint8_t>(x & 0xff);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path.string());
    std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!f) throw IoError("read failed: " + path.string());
    return bytes;
}

inline void write_png(const std::filesystem::path& path, const Image8& img) {
    write_file_bytes(path, encode_png(img));
}

inline Image8 read_png(const std::filesystem::path& path) {
    return decode_png(read_file_bytes(path), path.string());
}

// ---- WAV (PCM16 mono) ------------------------------------------------------

inline void write_wav(const std::filesystem::path& path, const std::vector<float>& samples,
                      int sample_rate) {
    std::vector<std::uint8_t> out;
    auto put_u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto put_u16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<std::uint32_t>(sample_rate));
    put_u32(static_cast<std::uint32_t>(sample_rate * 2));
    put_u16(2);   // block align
    put_u16(16);  // bits per sample
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(data_len);
    for (float s : samples) {
        float clamped = std::min(1.0f, std::max(-1.0f, s));
        std::int16_t q = static_cast<std::int16_t>(std::lrintf(clamped * 32767.0f));
        out.push_back(static_cast<std::uint8_t>(q & 0xff));
        out.push_back(static_cast<std::uint8_t>((q >> 8) & 0xff));
    }
    write_file_bytes(path, out);
}

inline std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate_out) {
    std::vector<std::uint8_t> b = read_file_bytes(path);
    auto u32 = [&](std::size_t at) {
        return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
               (static_cast<std::uint32_t>(b[at + 2]) << 16) |
               (static_cast<std::uint32_t>(b[at + 3]) << 24);
    };
    auto u16 = [&](std::size_t at) {
        return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
    };
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
        std::memcmp(b.data() + 8, "WAVE", 4) != 0)
        throw IoError(path.string() + ": not a RIFF/WAVE file");
    std::size_t pos = 12;
    int sample_rate = 0;
    bool fmt_ok = false;
    std::vector<float> samples;
    bool got_data = false;
    while (pos + 8 <= b.size()) {
        std::uint32_t len = u32(pos + 4);
        if (pos + 8 + len > b.size()) throw IoError(path.string() + ": truncated WAV chunk");
        if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
            if (len < 16) throw IoError(path.string() + ": malformed fmt chunk");
            if (u16(pos + 8) != 1 || u16(pos + 10) != 1 || u16(pos + 22) != 16)
                throw IoError(path.string() + ": expected PCM16 mono WAV");
            sample_rate = static_cast<int>(u32(pos + 12));
            fmt_ok = true;
        } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
            samples.reserve(len / 2);
            for (std::uint32_t i = 0; i + 1 < len; i += 2) {
                std::int16_t q = static_cast<std::int16_t>(b[pos + 8 + i] | (b[pos + 8 + i + 1] << 8));
                samples.push_back(static_cast<float>(q) / 32767.0f);
            }
            got_data = true;
        }
        pos += 8 + len + (len & 1);
    }
    if (!fmt_ok || !got_data) throw IoError(path.string() + ": missing fmt or data chunk");
    if (sample_rate_out) *sample_rate_out = sample_rate;
    return samples;
}

}  // namespace ssu
