#pragma once

#include <string>
#include <vector>

#include "srrn/data.hpp"

namespace srrn {

class Network;

// Both metrics shave `shave` pixels from every border, quantize to 8-bit
// levels (round half away from zero) and work on the 0-255 scale.
// Identical images report the 100 dB cap.
double psnr(const ImagePlane& a, const ImagePlane& b, int shave);

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, C1=(0.01*255)^2,
// C2=(0.03*255)^2, averaged over fully interior windows.
double ssim(const ImagePlane& a, const ImagePlane& b, int shave);

struct EvalRow {
    std::string image;
    int scale = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;           // model (or baseline when net absent)
    std::vector<EvalRow> baseline_rows;  // bicubic
    double mean_psnr(int scale, bool baseline = false) const;
    double mean_ssim(int scale, bool baseline = false) const;
    std::vector<int> scales() const;
};

// Per image and scale: crop to divisible dims, degrade, run the network
// (skipped when net is null), clamp, and score against the ground truth with
// shave = scale. Baseline rows score the degraded input itself.
EvalReport evaluate(Network* net, const std::vector<std::string>& image_paths,
                    const std::vector<int>& scales);

void write_report_csv(const EvalReport& report, const std::string& path);

}  // namespace srrn
