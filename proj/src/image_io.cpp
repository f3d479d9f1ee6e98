#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include <png.h>

#include "srrn/data.hpp"
#include "srrn/error.hpp"

namespace srrn {

namespace {

float from_byte(unsigned char b) { return static_cast<float>(b) / 255.0f; }

unsigned char to_byte(float v) {
    const float scaled = std::clamp(v, 0.0f, 1.0f) * 255.0f;
    return static_cast<unsigned char>(std::lround(scaled));
}

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return {};
    std::string ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RgbImage load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw DataError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("failed to decode PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
    RgbImage img;
    img.grayscale = channels == 1;
    img.r = ImagePlane(h, w);
    img.g = ImagePlane(h, w);
    img.b = ImagePlane(h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            if (channels == 1) {
                const float v = from_byte(row[x]);
                img.r.at(y, x) = img.g.at(y, x) = img.b.at(y, x) = v;
            } else {
                img.r.at(y, x) = from_byte(row[static_cast<std::size_t>(x) * channels]);
                img.g.at(y, x) = from_byte(row[static_cast<std::size_t>(x) * channels + 1]);
                img.b.at(y, x) = from_byte(row[static_cast<std::size_t>(x) * channels + 2]);
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const std::string& path, const RgbImage& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("failed to encode PNG: " + path);
    }
    png_init_io(png, fp.get());
    const int h = img.r.h, w = img.r.w;
    const int color = img.grayscale ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, w, h, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int channels = img.grayscale ? 1 : 3;
    std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (img.grayscale) {
                row[x] = to_byte(img.r.at(y, x));
            } else {
                row[static_cast<std::size_t>(x) * 3] = to_byte(img.r.at(y, x));
                row[static_cast<std::size_t>(x) * 3 + 1] = to_byte(img.g.at(y, x));
                row[static_cast<std::size_t>(x) * 3 + 2] = to_byte(img.b.at(y, x));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

int pnm_next_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments.
    for (;;) {
        const int c = in.peek();
        if (c == EOF) throw DataError("truncated PNM header: " + path);
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) throw DataError("malformed PNM header: " + path);
    return v;
}

RgbImage load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    char p = 0, kind = 0;
    in.get(p).get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
        throw DataError("unsupported PNM variant in " + path);
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    const int w = pnm_next_int(in, path);
    const int h = pnm_next_int(in, path);
    const int maxval = pnm_next_int(in, path);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
        throw DataError("unsupported PNM dimensions/maxval in " + path);

    RgbImage img;
    img.grayscale = !color;
    img.r = ImagePlane(h, w);
    img.g = ImagePlane(h, w);
    img.b = ImagePlane(h, w);
    const int channels = color ? 3 : 1;
    const std::size_t count = static_cast<std::size_t>(h) * w * channels;
    std::vector<unsigned char> raw(count);
    if (binary) {
        in.get();   // single whitespace after maxval
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw DataError("truncated PNM data: " + path);
    } else {
        for (std::size_t i = 0; i < count; ++i)
            raw[i] = static_cast<unsigned char>(pnm_next_int(in, path));
    }
    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float scale = 1.0f / static_cast<float>(maxval);
            if (color) {
                img.r.at(y, x) = raw[i++] * scale;
                img.g.at(y, x) = raw[i++] * scale;
                img.b.at(y, x) = raw[i++] * scale;
            } else {
                const float v = raw[i++] * scale;
                img.r.at(y, x) = img.g.at(y, x) = img.b.at(y, x) = v;
            }
        }
    }
    return img;
}

void save_pnm(const std::string& path, const RgbImage& img, bool color) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    out << (color ? "P6" : "P5") << "\n" << img.r.w << " " << img.r.h << "\n255\n";
    for (int y = 0; y < img.r.h; ++y) {
        for (int x = 0; x < img.r.w; ++x) {
            out.put(static_cast<char>(to_byte(img.r.at(y, x))));
            if (color) {
                out.put(static_cast<char>(to_byte(img.g.at(y, x))));
                out.put(static_cast<char>(to_byte(img.b.at(y, x))));
            }
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace

RgbImage load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return load_pnm(path);
    return load_png(path);
}

void save_image(const std::string& path, const RgbImage& img) {
    const std::string ext = lower_ext(path);
    if (ext == ".pgm") {
        save_pnm(path, img, false);
    } else if (ext == ".ppm") {
        save_pnm(path, img, true);
    } else {
        save_png(path, img);
    }
}

void save_plane(const std::string& path, const ImagePlane& plane) {
    RgbImage img;
    img.grayscale = true;
    img.r = plane;
    img.g = plane;
    img.b = plane;
    save_image(path, img);
}

}  // namespace srrn
