#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "srrn/arch.hpp"
#include "srrn/checkpoint.hpp"
#include "srrn/data.hpp"
#include "srrn/error.hpp"
#include "srrn/metrics.hpp"
#include "srrn/optim.hpp"
#include "srrn/threads.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::vector<int> parse_scales(const std::string& text) {
    std::vector<int> scales;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const int s = std::stoi(tok);
        if (s < 2 || s > 4)
            throw srrn::UsageError("unsupported scale " + tok + "; supported: 2,3,4");
        scales.push_back(s);
    }
    if (scales.empty()) throw srrn::UsageError("no scales given");
    return scales;
}

std::vector<std::string> gather_images(const std::string& spec) {
    namespace fs = std::filesystem;
    std::vector<std::string> out;
    if (fs::is_directory(spec)) {
        for (const auto& entry : fs::directory_iterator(spec)) {
            if (!entry.is_regular_file()) continue;
            auto ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext == ".png" || ext == ".pgm" || ext == ".ppm")
                out.push_back(entry.path().string());
        }
        std::sort(out.begin(), out.end());
    } else if (fs::exists(spec)) {
        out.push_back(spec);
    }
    if (out.empty()) throw srrn::DataError("no images found at " + spec);
    return out;
}

// Flat key=value config file; CLI flags override file values.
std::map<std::string, std::string> load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw srrn::DataError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw srrn::UsageError("config " + path + ": expected key=value, got '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

struct TrainArgs {
    std::string arch = "16_3,32_3,64_3";
    std::string manifest;
    std::string out = "model.ckpt";
    std::string history = "history.csv";
    std::string config;
    std::string val_images;
    std::string scales = "2,3,4";
    int epochs = 60;
    double lr = 0.1;
    int lr_step = 30;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double tau = 0.01;
    int batch = 64;
    std::uint64_t seed = 0;
    int threads = 1;
    bool direct = false;
};

void apply_config(TrainArgs& args, const CLI::App& cmd) {
    if (args.config.empty()) return;
    const auto kv = load_config(args.config);
    auto absent = [&](const std::string& flag) {
        return cmd.get_option("--" + flag)->count() == 0;
    };
    for (const auto& [key, val] : kv) {
        if (key == "arch") {
            if (absent("arch")) args.arch = val;
        } else if (key == "manifest") {
            if (absent("manifest")) args.manifest = val;
        } else if (key == "epochs") {
            if (absent("epochs")) args.epochs = std::stoi(val);
        } else if (key == "scales") {
            if (absent("scales")) args.scales = val;
        } else if (key == "lr") {
            if (absent("lr")) args.lr = std::stod(val);
        } else if (key == "lr_step") {
            if (absent("lr-step")) args.lr_step = std::stoi(val);
        } else if (key == "momentum") {
            if (absent("momentum")) args.momentum = std::stod(val);
        } else if (key == "weight_decay") {
            if (absent("weight-decay")) args.weight_decay = std::stod(val);
        } else if (key == "tau") {
            if (absent("tau")) args.tau = std::stod(val);
        } else if (key == "batch") {
            if (absent("batch")) args.batch = std::stoi(val);
        } else if (key == "seed") {
            if (absent("seed")) args.seed = std::stoull(val);
        } else {
            throw srrn::UsageError("unknown config key '" + key + "' in " + args.config);
        }
    }
}

int run_train(TrainArgs& args, const CLI::App& cmd) {
    apply_config(args, cmd);
    srrn::set_thread_count(args.threads);
    if (args.manifest.empty()) throw srrn::UsageError("train requires --manifest");

    const srrn::ArchSpec spec = srrn::parse_arch(args.arch);
    srrn::DatasetManifest manifest = srrn::load_manifest(args.manifest);
    manifest.scales = parse_scales(args.scales);
    const srrn::Dataset dataset =
        args.epochs > 0 ? srrn::build_dataset(manifest) : srrn::Dataset{};

    srrn::TrainConfig cfg;
    cfg.base_lr = args.lr;
    cfg.lr_step = args.lr_step;
    cfg.momentum = args.momentum;
    cfg.weight_decay = args.weight_decay;
    cfg.clip_tau = args.tau;
    cfg.batch_size = args.batch;
    cfg.patch_size = manifest.patch_size;
    cfg.scales = manifest.scales;
    cfg.epochs = args.epochs;
    cfg.seed = args.seed;
    cfg.residual_learning = !args.direct;

    srrn::Network net = srrn::build_network(spec, args.seed);
    std::vector<std::string> val;
    if (!args.val_images.empty()) val = gather_images(args.val_images);

    std::cout << "arch " << spec.canonical() << ": depth " << spec.depth()
              << ", parameters " << srrn::count_parameters(spec) << ", samples "
              << dataset.samples.size() << "\n";

    double best_psnr = -1.0;
    const std::string best_path = args.out + ".best";
    auto on_epoch = [&](const srrn::EpochRecord& rec) {
        std::cout << "epoch " << rec.epoch << ": lr " << rec.lr << ", loss "
                  << rec.mean_loss;
        if (!rec.val_psnr.empty()) {
            double mean = 0.0;
            for (const auto& [scale, p] : rec.val_psnr) {
                std::cout << ", psnr_x" << scale << " " << p;
                mean += p;
            }
            mean /= static_cast<double>(rec.val_psnr.size());
            if (mean > best_psnr) {
                best_psnr = mean;
                srrn::save_checkpoint(best_path, net);
            }
        }
        std::cout << "\n";
    };

    srrn::TrainResult result;
    if (args.epochs > 0) {
        result = srrn::train(net, dataset, cfg, val, on_epoch);
    }
    srrn::save_checkpoint(args.out, net);
    srrn::write_history_csv(result, cfg.scales, args.history);
    if (result.diverged) {
        std::cerr << "training diverged: " << result.divergence_note
                  << " (last good parameters kept)\n";
        return kExitDivergence;
    }
    std::cout << "wrote " << args.out << " and " << args.history << "\n";
    return kExitOk;
}

int run_eval(const std::string& checkpoint, const std::string& images,
             const std::string& scales_text, const std::string& out_csv, int threads) {
    srrn::set_thread_count(threads);
    srrn::Network net = srrn::load_checkpoint(checkpoint);
    const auto paths = gather_images(images);
    const auto scales = parse_scales(scales_text);
    const srrn::EvalReport report = srrn::evaluate(&net, paths, scales);
    for (int scale : scales) {
        std::cout << "x" << scale << ": model " << report.mean_psnr(scale) << " dB / "
                  << report.mean_ssim(scale) << " ssim; bicubic "
                  << report.mean_psnr(scale, true) << " dB / "
                  << report.mean_ssim(scale, true) << " ssim\n";
    }
    if (!out_csv.empty()) {
        srrn::write_report_csv(report, out_csv);
        std::cout << "wrote " << out_csv << "\n";
    }
    return kExitOk;
}

int run_upscale(const std::string& checkpoint, const std::string& input, int scale,
                const std::string& output, int threads) {
    srrn::set_thread_count(threads);
    if (scale < 2 || scale > 4)
        throw srrn::UsageError("unsupported scale " + std::to_string(scale) +
                               "; supported: 2,3,4");
    srrn::Network net = srrn::load_checkpoint(checkpoint);
    const srrn::RgbImage img = srrn::load_image(input);

    auto upscale_plane = [&](const srrn::ImagePlane& p) {
        return srrn::bicubic_resize(p, p.h * scale, p.w * scale);
    };
    auto super_resolve = [&](const srrn::ImagePlane& y_up) {
        srrn::Tensor in(1, 1, y_up.h, y_up.w);
        in.data = y_up.v;
        srrn::Tensor out = srrn::forward(net, in, srrn::Mode::Eval);
        srrn::ImagePlane sr(y_up.h, y_up.w);
        sr.v = std::move(out.data);
        sr.clamp01();
        return sr;
    };

    srrn::RgbImage result;
    if (img.grayscale) {
        result.grayscale = true;
        result.r = super_resolve(upscale_plane(img.r));
        result.g = result.r;
        result.b = result.r;
    } else {
        srrn::YCbCrImage ycc = srrn::rgb_to_ycbcr(img);
        srrn::YCbCrImage up;
        up.y = super_resolve(upscale_plane(ycc.y));
        up.cb = upscale_plane(ycc.cb);
        up.cr = upscale_plane(ycc.cr);
        result = srrn::ycbcr_to_rgb(up);
    }
    srrn::save_image(output, result);
    std::cout << "wrote " << output << " (" << result.r.w << "x" << result.r.h << ")\n";
    return kExitOk;
}

int run_analyze(const std::string& arch, const std::string& compare) {
    const srrn::ArchSpec spec = srrn::parse_arch(arch);
    const long long params = srrn::count_parameters(spec);
    std::cout << "arch: " << spec.canonical() << "\n";
    std::cout << "depth: " << spec.depth() << "\n";
    std::cout << "parameters: " << params << "\n";
    std::cout << "receptive field: " << srrn::receptive_field(spec) << "\n";

    const srrn::PathStats ps = srrn::path_stats(spec);
    std::cout << "residual units: " << ps.units << "\n";
    if (ps.exact) {
        std::cout << "unfolded paths: " << ps.total_paths << "\n";
        std::cout << "path depth histogram:";
        for (std::size_t d = 0; d < ps.depth_histogram.size(); ++d)
            std::cout << " " << d << ":" << ps.depth_histogram[d];
        std::cout << "\n";
    } else {
        std::cout << "unfolded paths: 2^" << ps.units << " (closed form only)\n";
    }
    for (std::size_t i = 0; i < spec.containers.size(); ++i) {
        std::cout << "container " << i << " (width " << spec.containers[i].width
                  << ", units " << spec.containers[i].units
                  << "): perturbation impact "
                  << srrn::perturbation_impact(spec, static_cast<int>(i)) << "\n";
    }
    if (!compare.empty()) {
        const srrn::ArchSpec other = srrn::parse_arch(compare);
        const long long other_params = srrn::count_parameters(other);
        std::cout << "compare: " << other.canonical() << " has " << other_params
                  << " parameters; " << arch << " saves "
                  << (other_params - params) << " ("
                  << 100.0 * (1.0 - static_cast<double>(params) / other_params)
                  << "%)\n";
    }
    return kExitOk;
}

// The five width profiles at matched depth: widths vary linearly (rounded)
// between lo = max(2, N/4) and N across the containers.
std::vector<std::pair<std::string, srrn::ArchSpec>> shape_families(int base_width) {
    const int containers = 6, units = 2;
    const int lo = std::max(2, base_width / 4);
    auto linspace = [&](double from, double to, int count) {
        std::vector<int> widths(count);
        for (int i = 0; i < count; ++i) {
            const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
            widths[i] = static_cast<int>(std::lround(from + t * (to - from)));
        }
        return widths;
    };
    auto make = [&](const std::vector<int>& widths) {
        srrn::ArchSpec spec;
        for (int w : widths) spec.containers.push_back({w, units});
        return spec;
    };
    auto mirror = [&](double from, double to) {
        auto half = linspace(from, to, containers / 2);
        std::vector<int> widths = half;
        for (auto it = half.rbegin(); it != half.rend(); ++it) widths.push_back(*it);
        return widths;
    };

    std::vector<std::pair<std::string, srrn::ArchSpec>> out;
    out.emplace_back("baseline", make(std::vector<int>(containers, base_width)));
    out.emplace_back("ascending", make(linspace(lo, base_width, containers)));
    out.emplace_back("descending", make(linspace(base_width, lo, containers)));
    out.emplace_back("peak", make(mirror(lo, base_width)));
    out.emplace_back("valley", make(mirror(base_width, lo)));
    return out;
}

int run_shapes(int base_width, const std::string& manifest_path,
               const std::string& out_csv, int epochs, std::uint64_t seed,
               int threads) {
    srrn::set_thread_count(threads);
    if (base_width < 8) throw srrn::UsageError("--width must be >= 8");
    const srrn::DatasetManifest manifest = srrn::load_manifest(manifest_path);
    const srrn::Dataset dataset = srrn::build_dataset(manifest);

    std::ofstream csv(out_csv);
    if (!csv) throw srrn::DataError("cannot write " + out_csv);
    csv << "family,arch,depth,parameters,final_train_loss";
    for (int scale : manifest.scales) csv << ",psnr_x" << scale;
    csv << "\n";

    srrn::TrainConfig cfg;
    cfg.patch_size = manifest.patch_size;
    cfg.scales = manifest.scales;
    cfg.epochs = epochs;
    cfg.seed = seed;

    for (const auto& [family, spec] : shape_families(base_width)) {
        srrn::Network net = srrn::build_network(spec, seed);
        const srrn::TrainResult result = srrn::train(net, dataset, cfg);
        if (result.diverged) {
            std::cerr << "family " << family << " diverged: " << result.divergence_note << "\n";
            return kExitDivergence;
        }
        const srrn::EvalReport report =
            srrn::evaluate(&net, manifest.images, manifest.scales);
        csv << family << "," << spec.canonical() << "," << spec.depth() << ","
            << srrn::count_parameters(spec) << ","
            << (result.history.empty() ? 0.0 : result.history.back().mean_loss);
        std::cout << family << " (" << spec.canonical() << "): "
                  << srrn::count_parameters(spec) << " parameters";
        for (int scale : manifest.scales) {
            csv << "," << report.mean_psnr(scale);
            std::cout << ", x" << scale << " " << report.mean_psnr(scale) << " dB";
        }
        csv << "\n";
        std::cout << "\n";
    }
    std::cout << "wrote " << out_csv << "\n";
    return kExitOk;
}

int run_degrade(const std::string& input, int scale, const std::string& output) {
    const srrn::RgbImage img = srrn::load_image(input);
    const srrn::ImagePlane y = img.grayscale ? img.r : srrn::to_luminance(img);
    const srrn::ImagePlane lr = srrn::degrade(y, scale);
    srrn::save_plane(output, lr);
    std::cout << "wrote " << output << " (" << lr.w << "x" << lr.h << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual CNN single-image super-resolution toolkit"};
    app.require_subcommand(1);

    TrainArgs targs;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--arch", targs.arch, "Architecture string");
    train_cmd->add_option("--manifest", targs.manifest, "Dataset manifest path");
    train_cmd->add_option("--out", targs.out, "Output checkpoint path");
    train_cmd->add_option("--history", targs.history, "History CSV path");
    train_cmd->add_option("--config", targs.config, "key=value config file");
    train_cmd->add_option("--val-images", targs.val_images, "Validation image dir");
    train_cmd->add_option("--scales", targs.scales, "Comma-separated scales");
    train_cmd->add_option("--epochs", targs.epochs, "Training epochs");
    train_cmd->add_option("--lr", targs.lr, "Base learning rate");
    train_cmd->add_option("--lr-step", targs.lr_step, "Epochs per lr decade");
    train_cmd->add_option("--momentum", targs.momentum, "Momentum");
    train_cmd->add_option("--weight-decay", targs.weight_decay, "Weight decay");
    train_cmd->add_option("--tau", targs.tau, "Gradient clip constant");
    train_cmd->add_option("--batch", targs.batch, "Batch size");
    train_cmd->add_option("--seed", targs.seed, "RNG seed");
    train_cmd->add_option("--threads", targs.threads, "Worker threads");
    train_cmd->add_flag("--direct", targs.direct,
                        "Predict HR directly instead of the residual");

    std::string eval_ckpt, eval_images, eval_scales = "2,3,4", eval_csv = "report.csv";
    int eval_threads = 1;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--images", eval_images, "Image file or dir")->required();
    eval_cmd->add_option("--scales", eval_scales, "Comma-separated scales");
    eval_cmd->add_option("--out", eval_csv, "Report CSV path");
    eval_cmd->add_option("--threads", eval_threads, "Worker threads");

    std::string up_ckpt, up_in, up_out;
    int up_scale = 2, up_threads = 1;
    auto* up_cmd = app.add_subcommand("upscale", "Super-resolve one image");
    up_cmd->add_option("--checkpoint", up_ckpt, "Checkpoint path")->required();
    up_cmd->add_option("--input", up_in, "Input image")->required();
    up_cmd->add_option("--scale", up_scale, "Upscaling factor")->required();
    up_cmd->add_option("--output", up_out, "Output image")->required();
    up_cmd->add_option("--threads", up_threads, "Worker threads");

    std::string an_arch, an_compare;
    auto* an_cmd = app.add_subcommand("analyze", "Static architecture analysis");
    an_cmd->add_option("arch", an_arch, "Architecture string")->required();
    an_cmd->add_option("--compare", an_compare, "Second arch for comparison");

    int sh_width = 16, sh_epochs = 10, sh_threads = 1;
    std::uint64_t sh_seed = 0;
    std::string sh_manifest, sh_csv = "shapes.csv";
    auto* sh_cmd = app.add_subcommand("shapes-experiment",
                                      "Train the five width-profile families");
    sh_cmd->add_option("--width", sh_width, "Base width N")->required();
    sh_cmd->add_option("--manifest", sh_manifest, "Dataset manifest")->required();
    sh_cmd->add_option("--out", sh_csv, "Output CSV");
    sh_cmd->add_option("--epochs", sh_epochs, "Epochs per family");
    sh_cmd->add_option("--seed", sh_seed, "Shared RNG seed");
    sh_cmd->add_option("--threads", sh_threads, "Worker threads");

    std::string dg_in, dg_out;
    int dg_scale = 2;
    auto* dg_cmd = app.add_subcommand("degrade", "Export a degraded preview");
    dg_cmd->add_option("--input", dg_in, "Input image")->required();
    dg_cmd->add_option("--scale", dg_scale, "Scale factor")->required();
    dg_cmd->add_option("--output", dg_out, "Output image")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return run_train(targs, *train_cmd);
        if (*eval_cmd)
            return run_eval(eval_ckpt, eval_images, eval_scales, eval_csv, eval_threads);
        if (*up_cmd) return run_upscale(up_ckpt, up_in, up_scale, up_out, up_threads);
        if (*an_cmd) return run_analyze(an_arch, an_compare);
        if (*sh_cmd)
            return run_shapes(sh_width, sh_manifest, sh_csv, sh_epochs, sh_seed, sh_threads);
        if (*dg_cmd) return run_degrade(dg_in, dg_scale, dg_out);
    } catch (const srrn::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const srrn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const srrn::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const srrn::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
