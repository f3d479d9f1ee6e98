#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace srrn {

// 2-D grid of reals in [0,1]; one channel of an image.
struct ImagePlane {
    int h = 0, w = 0;
    std::vector<float> v;

    ImagePlane() = default;
    ImagePlane(int h_, int w_, float fill = 0.0f)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    void clamp01();
};

struct RgbImage {
    ImagePlane r, g, b;
    bool grayscale = false;   // true when loaded from a single-channel source
};

struct YCbCrImage {
    ImagePlane y, cb, cr;
};

// ITU-R BT.601 full-range conversions.
YCbCrImage rgb_to_ycbcr(const RgbImage& rgb);
RgbImage ycbcr_to_rgb(const YCbCrImage& img);
ImagePlane to_luminance(const RgbImage& rgb);

// Separable bicubic resampling (a = -0.5), edge-replicate boundary,
// kernel widened by the scale ratio when minifying. Output clamped to [0,1].
ImagePlane bicubic_resize(const ImagePlane& img, int out_h, int out_w);

ImagePlane crop_to_multiple(const ImagePlane& img, int s);

// Bicubic downscale by s then upscale back: the degradation model. Input is
// cropped to dims divisible by s first; callers wanting the matching ground
// truth should crop with crop_to_multiple themselves.
ImagePlane degrade(const ImagePlane& hr, int scale);

struct SamplePair {
    ImagePlane lr;   // degraded, at HR grid size
    ImagePlane hr;
    int scale = 0;
};

std::vector<SamplePair> extract_patches(const ImagePlane& hr,
                                        const ImagePlane& lr_upscaled,
                                        int patch_size, int stride, int scale);

struct DatasetManifest {
    std::vector<std::string> images;
    std::vector<int> scales;
    int patch_size = 41;
    int stride = 41;
    std::uint64_t seed = 0;
    bool augment = false;    // flips/rotations, off by default
};

// Key-value text file: images=<dir-or-file>, scales=2,3,4, patch=41,
// stride=41, seed=N, augment=0|1. 'images' may repeat.
DatasetManifest load_manifest(const std::string& path);

struct Dataset {
    std::vector<SamplePair> samples;

    // Deterministic per-epoch order, fixed by (seed, epoch).
    std::vector<int> epoch_order(std::uint64_t seed, int epoch) const;
};

Dataset build_dataset(const DatasetManifest& manifest);

// Image I/O: PNG (8-bit gray/RGB/RGBA) and PGM/PPM.
RgbImage load_image(const std::string& path);
void save_image(const std::string& path, const RgbImage& img);
void save_plane(const std::string& path, const ImagePlane& plane);

}  // namespace srrn
