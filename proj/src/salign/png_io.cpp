// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/core/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "salign/core/errors.hpp"

namespace salign {

namespace {

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>(v & 0xff));
}

std::uint32_t read_u32_be(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    put_u32_be(out, crc);
}

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png_gray8(const std::filesystem::path& path, const ImageGrid& image) {
    if (image.empty()) throw ArgumentError("write_png_gray8: empty image");
    const int w = image.width(), h = image.height();

    // Filter type 0 on every scanline.
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        raw[static_cast<std::size_t>(y) * (w + 1)] = 0;
        for (int x = 0; x < w; ++x) {
            float v = std::clamp(image.at(x, y), 0.0f, 1.0f);
            raw[static_cast<std::size_t>(y) * (w + 1) + 1 + x] =
                static_cast<unsigned char>(std::lround(v * 255.0f));
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK) {
        throw FormatError("write_png_gray8: deflate failed");
    }
    compressed.resize(bound);

    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(w));
    put_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace

    std::vector<unsigned char> file(kSignature, kSignature + 8);
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", compressed);
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("write_png_gray8: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw FormatError("write_png_gray8: short write to " + path.string());
}

ImageGrid read_png_gray8(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("read_png_gray8: cannot open " + path.string());
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0) {
        throw FormatError("read_png_gray8: not a PNG file: " + path.string());
    }

    std::size_t pos = 8;
    int w = 0, h = 0;
    bool have_header = false;
    std::vector<unsigned char> idat;
    while (pos + 12 <= file.size()) {
        std::uint32_t len = read_u32_be(&file[pos]);
        if (pos + 12 + len > file.size()) throw FormatError("read_png_gray8: truncated chunk");
        const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
        const unsigned char* payload = &file[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw FormatError("read_png_gray8: bad IHDR");
            w = static_cast<int>(read_u32_be(payload));
            h = static_cast<int>(read_u32_be(payload + 4));
            int bit_depth = payload[8], color_type = payload[9], interlace = payload[12];
            if (bit_depth != 8 || color_type != 0 || interlace != 0) {
                throw FormatError("read_png_gray8: only 8-bit non-interlaced grayscale supported");
            }
            have_header = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!have_header || w <= 0 || h <= 0) throw FormatError("read_png_gray8: missing IHDR");

    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (w + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size()) {
        throw FormatError("read_png_gray8: inflate failed for " + path.string());
    }

    // Undo scanline filters.
    std::vector<unsigned char> pix(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const unsigned char* line = &raw[static_cast<std::size_t>(y) * (w + 1)];
        unsigned char filter = line[0];
        unsigned char* cur = &pix[static_cast<std::size_t>(y) * w];
        const unsigned char* up = y > 0 ? &pix[static_cast<std::size_t>(y - 1) * w] : nullptr;
        for (int x = 0; x < w; ++x) {
            int a = x > 0 ? cur[x - 1] : 0;
            int b = up ? up[x] : 0;
            int c = (x > 0 && up) ? up[x - 1] : 0;
            int v = line[1 + x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw FormatError("read_png_gray8: unknown filter type");
            }
            cur[x] = static_cast<unsigned char>(v & 0xff);
        }
    }

    ImageGrid image(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            image.at(x, y) = static_cast<float>(pix[static_cast<std::size_t>(y) * w + x]) / 255.0f;
        }
    }
    return image;
}

}  // namespace salign
