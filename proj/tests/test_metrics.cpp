#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "srrn/arch.hpp"
#include "srrn/data.hpp"
#include "srrn/error.hpp"
#include "srrn/metrics.hpp"

using namespace srrn;

namespace {

ImagePlane random_plane(int h, int w, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    ImagePlane img(h, w);
    for (float& v : img.v) v = dist(rng);
    return img;
}

// Direct-formula PSNR, written from the definition: quantize to 8-bit,
// shave, 10*log10(255^2 / MSE).
double psnr_oracle(const ImagePlane& a, const ImagePlane& b, int shave) {
    double mse = 0.0;
    long long count = 0;
    for (int y = shave; y < a.h - shave; ++y) {
        for (int x = shave; x < a.w - shave; ++x) {
            const double qa = std::round(std::clamp(a.at(y, x), 0.0f, 1.0f) * 255.0);
            const double qb = std::round(std::clamp(b.at(y, x), 0.0f, 1.0f) * 255.0);
            mse += (qa - qb) * (qa - qb);
            ++count;
        }
    }
    mse /= static_cast<double>(count);
    if (mse == 0.0) return 100.0;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Direct-formula single-scale SSIM with an explicitly constructed Gaussian,
// independent of the production implementation.
double ssim_oracle(const ImagePlane& a, const ImagePlane& b, int shave) {
    const int h = a.h - 2 * shave, w = a.w - 2 * shave;
    auto q = [&](const ImagePlane& img, int y, int x) {
        return std::round(std::clamp(img.at(y + shave, x + shave), 0.0f, 1.0f) * 255.0);
    };
    double window[11][11], wsum = 0.0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            window[y][x] = std::exp(-((y - 5.0) * (y - 5.0) + (x - 5.0) * (x - 5.0)) / 4.5);
            wsum += window[y][x];
        }
    const double c1 = 6.5025, c2 = 58.5225;   // (0.01*255)^2, (0.03*255)^2
    double total = 0.0;
    long long count = 0;
    for (int y = 0; y + 11 <= h; ++y) {
        for (int x = 0; x + 11 <= w; ++x) {
            double ma = 0, mb = 0;
            for (int wy = 0; wy < 11; ++wy)
                for (int wx = 0; wx < 11; ++wx) {
                    ma += window[wy][wx] * q(a, y + wy, x + wx);
                    mb += window[wy][wx] * q(b, y + wy, x + wx);
                }
            ma /= wsum;
            mb /= wsum;
            double va = 0, vb = 0, cov = 0;
            for (int wy = 0; wy < 11; ++wy)
                for (int wx = 0; wx < 11; ++wx) {
                    const double da = q(a, y + wy, x + wx) - ma;
                    const double db = q(b, y + wy, x + wx) - mb;
                    va += window[wy][wx] * da * da;
                    vb += window[wy][wx] * db * db;
                    cov += window[wy][wx] * da * db;
                }
            va /= wsum;
            vb /= wsum;
            cov /= wsum;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace

TEST_CASE("psnr: identical images hit the 100 dB cap") {
    ImagePlane a = random_plane(20, 20, 1);
    CHECK(psnr(a, a, 0) == 100.0);
    CHECK(psnr(a, a, 2) == 100.0);
}

TEST_CASE("psnr: black vs white is 0 dB") {
    ImagePlane black(16, 16, 0.0f), white(16, 16, 1.0f);
    CHECK(psnr(black, white, 0) == doctest::Approx(0.0));
}

TEST_CASE("psnr: uniform one-level difference") {
    ImagePlane a(16, 16, 100.0f / 255.0f), b(16, 16, 101.0f / 255.0f);
    CHECK(psnr(a, b, 0) == doctest::Approx(48.1308).epsilon(1e-4));
}

TEST_CASE("psnr matches the direct-formula oracle on fixtures") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        ImagePlane a = random_plane(32, 32, 100 + seed);
        ImagePlane b = a;
        std::mt19937 rng(200 + seed);
        std::normal_distribution<float> noise(0.0f, 0.02f * (seed + 1));
        for (float& v : b.v) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
        CHECK(psnr(a, b, 2) == doctest::Approx(psnr_oracle(a, b, 2)).epsilon(1e-6));
    }
}

TEST_CASE("psnr: symmetry and monotone decay under growing noise") {
    ImagePlane a = random_plane(24, 24, 2);
    double prev = 101.0;
    for (int k = 1; k <= 5; ++k) {
        ImagePlane b = a;
        std::mt19937 rng(300 + k);
        std::uniform_real_distribution<float> noise(-0.03f * k, 0.03f * k);
        for (float& v : b.v) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
        const double d = psnr(a, b, 0);
        CHECK(psnr(b, a, 0) == d);
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("psnr: shaving invariance under identical padding") {
    ImagePlane a = random_plane(20, 20, 3);
    ImagePlane b = random_plane(20, 20, 4);
    const int pad = 3;
    ImagePlane pa(26, 26, 0.25f), pb(26, 26, 0.25f);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            pa.at(y + pad, x + pad) = a.at(y, x);
            pb.at(y + pad, x + pad) = b.at(y, x);
        }
    CHECK(psnr(pa, pb, pad) == doctest::Approx(psnr(a, b, 0)).epsilon(1e-12));
}

TEST_CASE("ssim: self-similarity is exactly 1") {
    ImagePlane a = random_plane(24, 24, 5);
    CHECK(ssim(a, a, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: inversion scores below 1 and the metric is symmetric") {
    ImagePlane a = random_plane(24, 24, 6);
    ImagePlane inv = a;
    for (float& v : inv.v) v = 1.0f - v;
    const double s = ssim(a, inv, 0);
    CHECK(s < 1.0);
    CHECK(ssim(inv, a, 0) == doctest::Approx(s).epsilon(1e-9));
}

TEST_CASE("ssim matches the direct-formula oracle on fixtures") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        ImagePlane a = random_plane(32, 32, 400 + seed);
        ImagePlane b = a;
        std::mt19937 rng(500 + seed);
        std::normal_distribution<float> noise(0.0f, 0.05f);
        for (float& v : b.v) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
        CHECK(ssim(a, b, 0) == doctest::Approx(ssim_oracle(a, b, 0)).epsilon(1e-6));
    }
}

TEST_CASE("ssim rejects images smaller than the window") {
    ImagePlane a(8, 8, 0.5f);
    CHECK_THROWS_AS(ssim(a, a, 0), UsageError);
}

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("srrn_metrics_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("evaluate: zero-weight network equals the bicubic baseline") {
    TempDir tmp;
    const auto p = tmp.path / "img.pgm";
    ImagePlane img = random_plane(36, 36, 7);
    save_plane(p.string(), img);

    Network net = build_network(parse_arch("4_1"), 1);
    net.zero_parameters();
    EvalReport report = evaluate(&net, {p.string()}, {2, 3});
    REQUIRE(report.rows.size() == 2);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(report.rows[i].psnr == doctest::Approx(report.baseline_rows[i].psnr));
        CHECK(report.rows[i].ssim == doctest::Approx(report.baseline_rows[i].ssim));
    }
}

TEST_CASE("evaluate: report means recompute and CSV is written") {
    TempDir tmp;
    std::vector<std::string> paths;
    for (int i = 0; i < 3; ++i) {
        const auto p = tmp.path / ("img" + std::to_string(i) + ".pgm");
        save_plane(p.string(), random_plane(34, 34, 800 + i));
        paths.push_back(p.string());
    }
    EvalReport report = evaluate(nullptr, paths, {2});
    double sum = 0.0;
    for (const auto& r : report.rows) sum += r.psnr;
    CHECK(report.mean_psnr(2) == doctest::Approx(sum / 3.0).epsilon(1e-9));

    const auto csv = tmp.path / "report.csv";
    write_report_csv(report, csv.string());
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "image,scale,psnr,ssim,bicubic_psnr,bicubic_ssim");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 4);   // 3 images + 1 mean row
}

TEST_CASE("evaluate rejects an empty image set") {
    CHECK_THROWS_AS(evaluate(nullptr, {}, {2}), DataError);
}
