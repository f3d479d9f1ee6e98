#include "srrn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "srrn/error.hpp"

namespace srrn {

void ImagePlane::clamp01() {
    for (float& x : v) x = std::clamp(x, 0.0f, 1.0f);
}

namespace {

constexpr float kYr = 0.299f, kYg = 0.587f, kYb = 0.114f;

float luma(float r, float g, float b) { return kYr * r + kYg * g + kYb * b; }

}  // namespace

YCbCrImage rgb_to_ycbcr(const RgbImage& rgb) {
    YCbCrImage out;
    out.y = ImagePlane(rgb.r.h, rgb.r.w);
    out.cb = ImagePlane(rgb.r.h, rgb.r.w);
    out.cr = ImagePlane(rgb.r.h, rgb.r.w);
    for (std::size_t i = 0; i < rgb.r.v.size(); ++i) {
        const float r = rgb.r.v[i], g = rgb.g.v[i], b = rgb.b.v[i];
        const float y = luma(r, g, b);
        out.y.v[i] = y;
        out.cb.v[i] = 0.5f + (b - y) / 1.772f;
        out.cr.v[i] = 0.5f + (r - y) / 1.402f;
    }
    return out;
}

RgbImage ycbcr_to_rgb(const YCbCrImage& img) {
    RgbImage out;
    out.r = ImagePlane(img.y.h, img.y.w);
    out.g = ImagePlane(img.y.h, img.y.w);
    out.b = ImagePlane(img.y.h, img.y.w);
    for (std::size_t i = 0; i < img.y.v.size(); ++i) {
        const float y = img.y.v[i];
        const float cb = img.cb.v[i] - 0.5f;
        const float cr = img.cr.v[i] - 0.5f;
        const float r = y + 1.402f * cr;
        const float b = y + 1.772f * cb;
        const float g = (y - kYr * r - kYb * b) / kYg;
        out.r.v[i] = std::clamp(r, 0.0f, 1.0f);
        out.g.v[i] = std::clamp(g, 0.0f, 1.0f);
        out.b.v[i] = std::clamp(b, 0.0f, 1.0f);
    }
    return out;
}

ImagePlane to_luminance(const RgbImage& rgb) {
    ImagePlane out(rgb.r.h, rgb.r.w);
    for (std::size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = luma(rgb.r.v[i], rgb.g.v[i], rgb.b.v[i]);
    return out;
}

namespace {

// Keys cubic, a = -0.5.
double cubic_kernel(double x) {
    x = std::abs(x);
    if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
}

struct ResampleTap {
    int first = 0;
    std::vector<double> weights;
};

// Per-output-index taps along one axis. Weights sum to 1; source indices are
// clamped to the valid range (edge replicate) before weight accumulation.
std::vector<ResampleTap> make_taps(int in_n, int out_n) {
    const double scale = static_cast<double>(in_n) / out_n;
    const double kscale = std::max(1.0, scale);   // widen kernel when minifying
    const int radius = static_cast<int>(std::ceil(2.0 * kscale));
    std::vector<ResampleTap> taps(out_n);
    for (int i = 0; i < out_n; ++i) {
        const double center = (i + 0.5) * scale - 0.5;
        const int lo = static_cast<int>(std::floor(center)) - radius + 1;
        const int hi = static_cast<int>(std::floor(center)) + radius;
        // Accumulate onto clamped indices so border weights fold together.
        const int first = std::clamp(lo, 0, in_n - 1);
        const int last = std::clamp(hi, 0, in_n - 1);
        taps[i].first = first;
        taps[i].weights.assign(static_cast<std::size_t>(last - first + 1), 0.0);
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double wgt = cubic_kernel((j - center) / kscale);
            const int jc = std::clamp(j, 0, in_n - 1);
            taps[i].weights[jc - first] += wgt;
            sum += wgt;
        }
        if (sum != 0.0)
            for (double& wgt : taps[i].weights) wgt /= sum;
    }
    return taps;
}

}  // namespace

ImagePlane bicubic_resize(const ImagePlane& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw UsageError("bicubic_resize: output dims must be >= 1");
    if (img.h < 1 || img.w < 1) throw UsageError("bicubic_resize: empty input image");

    // Horizontal pass, then vertical.
    const auto htaps = make_taps(img.w, out_w);
    ImagePlane mid(img.h, out_w);
    for (int y = 0; y < img.h; ++y) {
        const float* row = &img.v[static_cast<std::size_t>(y) * img.w];
        for (int x = 0; x < out_w; ++x) {
            const auto& tap = htaps[x];
            double acc = 0.0;
            for (std::size_t k = 0; k < tap.weights.size(); ++k)
                acc += tap.weights[k] * row[tap.first + static_cast<int>(k)];
            mid.at(y, x) = static_cast<float>(acc);
        }
    }
    const auto vtaps = make_taps(img.h, out_h);
    ImagePlane out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const auto& tap = vtaps[y];
        for (int x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < tap.weights.size(); ++k)
                acc += tap.weights[k] * mid.at(tap.first + static_cast<int>(k), x);
            out.at(y, x) = static_cast<float>(acc);
        }
    }
    out.clamp01();
    return out;
}

ImagePlane crop_to_multiple(const ImagePlane& img, int s) {
    const int ch = (img.h / s) * s;
    const int cw = (img.w / s) * s;
    if (ch < 1 || cw < 1)
        throw DataError("image " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                        " is smaller than scale " + std::to_string(s));
    if (ch == img.h && cw == img.w) return img;
    ImagePlane out(ch, cw);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(y, x) = img.at(y, x);
    return out;
}

ImagePlane degrade(const ImagePlane& hr, int scale) {
    if (scale < 1) throw UsageError("degrade: scale must be >= 1");
    ImagePlane cropped = crop_to_multiple(hr, scale);
    if (scale == 1) return cropped;
    ImagePlane small = bicubic_resize(cropped, cropped.h / scale, cropped.w / scale);
    return bicubic_resize(small, cropped.h, cropped.w);
}

std::vector<SamplePair> extract_patches(const ImagePlane& hr,
                                        const ImagePlane& lr_upscaled,
                                        int patch_size, int stride, int scale) {
    if (hr.h != lr_upscaled.h || hr.w != lr_upscaled.w)
        throw UsageError("extract_patches: hr and lr dims differ");
    if (patch_size < 1 || stride < 1)
        throw UsageError("extract_patches: patch_size and stride must be >= 1");
    std::vector<SamplePair> out;
    if (patch_size > hr.h || patch_size > hr.w) return out;
    for (int y = 0; y + patch_size <= hr.h; y += stride) {
        for (int x = 0; x + patch_size <= hr.w; x += stride) {
            SamplePair pair;
            pair.scale = scale;
            pair.hr = ImagePlane(patch_size, patch_size);
            pair.lr = ImagePlane(patch_size, patch_size);
            for (int py = 0; py < patch_size; ++py) {
                for (int px = 0; px < patch_size; ++px) {
                    pair.hr.at(py, px) = hr.at(y + py, x + px);
                    pair.lr.at(py, px) = lr_upscaled.at(y + py, x + px);
                }
            }
            out.push_back(std::move(pair));
        }
    }
    return out;
}

namespace {

ImagePlane flip_h(const ImagePlane& p) {
    ImagePlane out(p.h, p.w);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) out.at(y, x) = p.at(y, p.w - 1 - x);
    return out;
}

ImagePlane flip_v(const ImagePlane& p) {
    ImagePlane out(p.h, p.w);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) out.at(y, x) = p.at(p.h - 1 - y, x);
    return out;
}

bool has_image_ext(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "images") {
            namespace fs = std::filesystem;
            if (fs::is_directory(val)) {
                std::vector<std::string> found;
                for (const auto& entry : fs::directory_iterator(val))
                    if (entry.is_regular_file() && has_image_ext(entry.path()))
                        found.push_back(entry.path().string());
                std::sort(found.begin(), found.end());
                m.images.insert(m.images.end(), found.begin(), found.end());
            } else {
                m.images.push_back(val);
            }
        } else if (key == "scales") {
            m.scales.clear();
            std::stringstream ss(val);
            std::string tok;
            while (std::getline(ss, tok, ',')) m.scales.push_back(std::stoi(tok));
        } else if (key == "patch") {
            m.patch_size = std::stoi(val);
        } else if (key == "stride") {
            m.stride = std::stoi(val);
        } else if (key == "seed") {
            m.seed = std::stoull(val);
        } else if (key == "augment") {
            m.augment = val != "0";
        } else {
            throw DataError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    if (m.images.empty()) throw DataError(path + ": manifest lists no images");
    if (m.scales.empty()) throw DataError(path + ": manifest lists no scales");
    return m;
}

Dataset build_dataset(const DatasetManifest& manifest) {
    Dataset ds;
    for (const auto& path : manifest.images) {
        const RgbImage img = load_image(path);
        const ImagePlane y = img.grayscale ? img.r : to_luminance(img);
        for (int scale : manifest.scales) {
            ImagePlane hr;
            try {
                hr = crop_to_multiple(y, scale);
            } catch (const DataError&) {
                std::cerr << "warning: skipping " << path << " at scale " << scale
                          << " (too small)\n";
                continue;
            }
            const ImagePlane lr = degrade(hr, scale);
            auto pairs = extract_patches(hr, lr, manifest.patch_size,
                                         manifest.stride, scale);
            if (pairs.empty()) {
                std::cerr << "warning: no " << manifest.patch_size << "x"
                          << manifest.patch_size << " patches in " << path
                          << " at scale " << scale << "\n";
                continue;
            }
            if (manifest.augment) {
                const std::size_t base = pairs.size();
                for (std::size_t i = 0; i < base; ++i) {
                    pairs.push_back({flip_h(pairs[i].lr), flip_h(pairs[i].hr), scale});
                    pairs.push_back({flip_v(pairs[i].lr), flip_v(pairs[i].hr), scale});
                }
            }
            for (auto& p : pairs) ds.samples.push_back(std::move(p));
        }
    }
    if (ds.samples.empty()) throw DataError("dataset is empty after patch extraction");
    return ds;
}

std::vector<int> Dataset::epoch_order(std::uint64_t seed, int epoch) const {
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

}  // namespace srrn
