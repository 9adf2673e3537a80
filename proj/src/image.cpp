#include "habitus/image.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace habitus {

namespace {

void write_pgm_header(std::ostream& out, int w, int h, int maxval) {
    out << "P5\n" << w << " " << h << "\n" << maxval << "\n";
}

struct PgmHeader {
    int width = 0, height = 0, maxval = 0;
};

PgmHeader read_pgm_header(std::istream& in, const fs::path& path) {
    std::string magic;
    in >> magic;
    if (magic != "P5") throw Error("io", "not a binary PGM: " + path.string());
    PgmHeader h;
    // comments between header tokens
    auto next_int = [&](int& v) {
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> v)) throw Error("io", "bad PGM header: " + path.string());
            return;
        }
    };
    next_int(h.width);
    next_int(h.height);
    next_int(h.maxval);
    in.get();  // single whitespace before pixel data
    return h;
}

}  // namespace

void write_pgm8(const fs::path& path, const ByteImage& img) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    write_pgm_header(out, img.width, img.height, 255);
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw Error("io", "write failed: " + path.string());
}

ByteImage read_pgm8(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    PgmHeader h = read_pgm_header(in, path);
    if (h.maxval != 255) throw Error("io", "expected 8-bit PGM: " + path.string());
    ByteImage img(h.width, h.height);
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
    if (!in) throw Error("io", "truncated PGM: " + path.string());
    return img;
}

void write_pgm16(const fs::path& path, const Image<std::uint16_t>& img) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    write_pgm_header(out, img.width, img.height, 65535);
    std::vector<std::uint8_t> bytes(img.data.size() * 2);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        bytes[2 * i] = static_cast<std::uint8_t>(img.data[i] >> 8);
        bytes[2 * i + 1] = static_cast<std::uint8_t>(img.data[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("io", "write failed: " + path.string());
}

Image<std::uint16_t> read_pgm16(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open " + path.string());
    PgmHeader h = read_pgm_header(in, path);
    if (h.maxval != 65535) throw Error("io", "expected 16-bit PGM: " + path.string());
    Image<std::uint16_t> img(h.width, h.height);
    std::vector<std::uint8_t> bytes(img.data.size() * 2);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw Error("io", "truncated PGM: " + path.string());
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
    return img;
}

namespace {

void png_chunk(std::ostream& out, const char type[4], const std::uint8_t* data, std::uint32_t len) {
    auto be32 = [&](std::uint32_t v) {
        std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    be32(len);
    out.write(type, 4);
    if (len) out.write(reinterpret_cast<const char*>(data), len);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (len) crc = crc32(crc, data, len);
    be32(static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_rgb(const fs::path& path, const RgbImage& img) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());

    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::uint8_t ihdr[13];
    auto put_be32 = [](std::uint8_t* p, std::uint32_t v) {
        p[0] = static_cast<std::uint8_t>(v >> 24);
        p[1] = static_cast<std::uint8_t>(v >> 16);
        p[2] = static_cast<std::uint8_t>(v >> 8);
        p[3] = static_cast<std::uint8_t>(v);
    };
    put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    put_be32(ihdr + 4, static_cast<std::uint32_t>(img.height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type RGB
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    png_chunk(out, "IHDR", ihdr, 13);

    // filter byte 0 in front of each scanline
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.height) * (1 + 3 * img.width));
    for (int r = 0; r < img.height; ++r) {
        std::uint8_t* row = raw.data() + static_cast<std::size_t>(r) * (1 + 3 * img.width);
        row[0] = 0;
        for (int c = 0; c < img.width; ++c) {
            const Rgb& px = img.at(r, c);
            row[1 + 3 * c] = px.r;
            row[2 + 3 * c] = px.g;
            row[3 + 3 * c] = px.b;
        }
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error("io", "deflate failed for " + path.string());
    png_chunk(out, "IDAT", comp.data(), static_cast<std::uint32_t>(comp_len));
    png_chunk(out, "IEND", nullptr, 0);
    if (!out) throw Error("io", "write failed: " + path.string());
}

}  // namespace habitus
