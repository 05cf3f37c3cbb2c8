#include "kcascade/png.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

namespace kcascade {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void chunk(std::ostream& os, const char type[4],
           const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> buf;
    put_u32(buf, static_cast<std::uint32_t>(payload.size()));
    buf.insert(buf.end(), type, type + 4);
    buf.insert(buf.end(), payload.begin(), payload.end());
    const uLong crc =
        crc32(crc32(0L, reinterpret_cast<const Bytef*>(type), 4),
              payload.data(), static_cast<uInt>(payload.size()));
    put_u32(buf, static_cast<std::uint32_t>(crc));
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size()));
}

}  // namespace

void write_png_gray(const std::string& path,
                    const std::vector<std::uint8_t>& pix, int width,
                    int height) {
    if (width < 1 || height < 1 ||
        pix.size() != static_cast<std::size_t>(width) * height)
        throw std::invalid_argument("write_png_gray: pixel count does not match " +
                                    std::to_string(width) + "x" +
                                    std::to_string(height));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_png_gray: cannot open " + path);

    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(width));
    put_u32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    chunk(os, "IHDR", ihdr);

    // each scanline prefixed with filter type 0
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (width + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pix.begin() + static_cast<std::ptrdiff_t>(y) * width,
                   pix.begin() + static_cast<std::ptrdiff_t>(y + 1) * width);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> zbuf(zlen);
    if (compress2(zbuf.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw std::runtime_error("write_png_gray: deflate failed");
    zbuf.resize(zlen);
    chunk(os, "IDAT", zbuf);
    chunk(os, "IEND", {});
    if (!os) throw std::runtime_error("write_png_gray: write failed for " + path);
}

std::pair<real_t, real_t> gray_normalize(const std::vector<real_t>& values,
                                         std::vector<std::uint8_t>& out) {
    if (values.empty())
        throw std::invalid_argument("gray_normalize: empty input");
    real_t lo = values[0], hi = values[0];
    for (real_t v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out.resize(values.size());
    if (hi == lo) {
        std::fill(out.begin(), out.end(), std::uint8_t{128});
        return {lo, hi};
    }
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = static_cast<std::uint8_t>(
            std::lround(255.0 * (values[i] - lo) / (hi - lo)));
    return {lo, hi};
}

}  // namespace kcascade
