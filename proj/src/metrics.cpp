#include "srrn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "srrn/arch.hpp"
#include "srrn/error.hpp"

namespace srrn {

namespace {

// Shaved, 8-bit-quantized copy on the 0-255 scale.
std::vector<double> shaved_levels(const ImagePlane& img, int shave, int& h, int& w) {
    h = img.h - 2 * shave;
    w = img.w - 2 * shave;
    if (h < 1 || w < 1)
        throw UsageError("shave width " + std::to_string(shave) +
                         " leaves no pixels in a " + std::to_string(img.h) + "x" +
                         std::to_string(img.w) + " image");
    std::vector<double> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float v = std::clamp(img.at(y + shave, x + shave), 0.0f, 1.0f);
            out[static_cast<std::size_t>(y) * w + x] =
                std::round(static_cast<double>(v) * 255.0);
        }
    }
    return out;
}

}  // namespace

double psnr(const ImagePlane& a, const ImagePlane& b, int shave) {
    if (a.h != b.h || a.w != b.w) throw UsageError("psnr: image dims differ");
    int h = 0, w = 0;
    const auto qa = shaved_levels(a, shave, h, w);
    const auto qb = shaved_levels(b, shave, h, w);
    double mse = 0.0;
    for (std::size_t i = 0; i < qa.size(); ++i) {
        const double d = qa[i] - qb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(qa.size());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

const std::vector<double>& gaussian_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w(kWin * kWin);
        double sum = 0.0;
        for (int y = 0; y < kWin; ++y) {
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - kWin / 2, dx = x - kWin / 2;
                const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * kSigma * kSigma));
                w[static_cast<std::size_t>(y) * kWin + x] = g;
                sum += g;
            }
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return win;
}

}  // namespace

double ssim(const ImagePlane& a, const ImagePlane& b, int shave) {
    if (a.h != b.h || a.w != b.w) throw UsageError("ssim: image dims differ");
    int h = 0, w = 0;
    const auto qa = shaved_levels(a, shave, h, w);
    const auto qb = shaved_levels(b, shave, h, w);
    if (h < kWin || w < kWin)
        throw UsageError("ssim: shaved image smaller than the 11x11 window");

    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const auto& win = gaussian_window();

    double total = 0.0;
    long long count = 0;
    for (int y = 0; y + kWin <= h; ++y) {
        for (int x = 0; x + kWin <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
            for (int wy = 0; wy < kWin; ++wy) {
                for (int wx = 0; wx < kWin; ++wx) {
                    const double wgt = win[static_cast<std::size_t>(wy) * kWin + wx];
                    const double va = qa[static_cast<std::size_t>(y + wy) * w + x + wx];
                    const double vb = qb[static_cast<std::size_t>(y + wy) * w + x + wx];
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

double EvalReport::mean_psnr(int scale, bool baseline) const {
    const auto& src = baseline ? baseline_rows : rows;
    double sum = 0.0;
    int count = 0;
    for (const auto& r : src) {
        if (r.scale == scale) {
            sum += r.psnr;
            ++count;
        }
    }
    return count ? sum / count : 0.0;
}

double EvalReport::mean_ssim(int scale, bool baseline) const {
    const auto& src = baseline ? baseline_rows : rows;
    double sum = 0.0;
    int count = 0;
    for (const auto& r : src) {
        if (r.scale == scale) {
            sum += r.ssim;
            ++count;
        }
    }
    return count ? sum / count : 0.0;
}

std::vector<int> EvalReport::scales() const {
    std::vector<int> out;
    for (const auto& r : rows)
        if (std::find(out.begin(), out.end(), r.scale) == out.end())
            out.push_back(r.scale);
    std::sort(out.begin(), out.end());
    return out;
}

EvalReport evaluate(Network* net, const std::vector<std::string>& image_paths,
                    const std::vector<int>& scales) {
    if (image_paths.empty()) throw DataError("evaluate: no images given");
    EvalReport report;
    for (const auto& path : image_paths) {
        const RgbImage img = load_image(path);
        const ImagePlane y = img.grayscale ? img.r : to_luminance(img);
        for (int scale : scales) {
            const ImagePlane hr = crop_to_multiple(y, scale);
            const ImagePlane lr = degrade(hr, scale);
            report.baseline_rows.push_back(
                {path, scale, psnr(lr, hr, scale), ssim(lr, hr, scale)});
            if (net) {
                Tensor in(1, 1, lr.h, lr.w);
                in.data = lr.v;
                Tensor out = forward(*net, in, Mode::Eval);
                ImagePlane sr(lr.h, lr.w);
                sr.v = std::move(out.data);
                sr.clamp01();
                report.rows.push_back(
                    {path, scale, psnr(sr, hr, scale), ssim(sr, hr, scale)});
            }
        }
    }
    if (!net) report.rows = report.baseline_rows;
    return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path);
    out << "image,scale,psnr,ssim,bicubic_psnr,bicubic_ssim\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        const auto& b = report.baseline_rows[i];
        out << r.image << "," << r.scale << "," << r.psnr << "," << r.ssim << ","
            << b.psnr << "," << b.ssim << "\n";
    }
    for (int scale : report.scales()) {
        out << "mean," << scale << "," << report.mean_psnr(scale) << ","
            << report.mean_ssim(scale) << "," << report.mean_psnr(scale, true) << ","
            << report.mean_ssim(scale, true) << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace srrn
