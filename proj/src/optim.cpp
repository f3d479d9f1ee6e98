#include "srrn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "srrn/error.hpp"
#include "srrn/metrics.hpp"

namespace srrn {

void TrainConfig::validate() const {
    if (base_lr <= 0.0) throw UsageError("base_lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw UsageError("momentum must be in [0,1)");
    if (clip_tau <= 0.0) throw UsageError("clip_tau must be > 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (patch_size < 9) throw UsageError("patch_size must be >= 9");
    if (lr_step < 1) throw UsageError("lr_step must be >= 1");
    if (epochs < 0) throw UsageError("epochs must be >= 0");
}

namespace {

LossResult sum_squared_loss(const Tensor& prediction, const Tensor& target) {
    LossResult res;
    res.grad = Tensor(prediction.n, prediction.c, prediction.h, prediction.w);
    const double inv_n = 1.0 / static_cast<double>(prediction.data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.data.size(); ++i) {
        const double d = static_cast<double>(prediction.data[i]) - target.data[i];
        acc += d * d;
        res.grad.data[i] = static_cast<float>(d * inv_n);
    }
    res.loss = 0.5 * inv_n * acc;
    return res;
}

}  // namespace

LossResult residual_loss(const Tensor& prediction, const Tensor& lr_patch,
                         const Tensor& hr_patch) {
    if (!prediction.same_dims(lr_patch) || !prediction.same_dims(hr_patch))
        throw UsageError("residual_loss: dims differ: " + prediction.dims_str() +
                         " / " + lr_patch.dims_str() + " / " + hr_patch.dims_str());
    Tensor target(hr_patch.n, hr_patch.c, hr_patch.h, hr_patch.w);
    for (std::size_t i = 0; i < target.data.size(); ++i)
        target.data[i] = hr_patch.data[i] - lr_patch.data[i];
    return sum_squared_loss(prediction, target);
}

LossResult direct_loss(const Tensor& prediction, const Tensor& hr_patch) {
    if (!prediction.same_dims(hr_patch))
        throw UsageError("direct_loss: dims differ");
    return sum_squared_loss(prediction, hr_patch);
}

void clip_gradients(GradientMap& grads, double eta, double tau) {
    if (eta <= 0.0 || tau <= 0.0)
        throw UsageError("clip_gradients: eta and tau must be > 0");
    const float bound = static_cast<float>(tau / eta);
    for (auto& [name, g] : grads)
        for (float& v : g) v = std::clamp(v, -bound, bound);
}

double lr_at(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw UsageError("lr_at: epoch must be >= 0");
    return config.base_lr * std::pow(10.0, -(epoch / config.lr_step));
}

void sgd_step(Network& net, const GradientMap& grads, OptimizerState& state,
              const TrainConfig& config) {
    const double eta = lr_at(state.epoch, config);
    const double m = config.momentum;
    for (auto& p : net.parameters()) {
        const auto it = grads.find(p.name);
        if (it == grads.end())
            throw UsageError("sgd_step: no gradient for parameter " + p.name);
        const auto& g = it->second;
        if (g.size() != p.values->size())
            throw UsageError("sgd_step: gradient size mismatch for " + p.name);
        auto& v = state.velocity[p.name];
        if (v.empty()) v.assign(p.values->size(), 0.0f);
        const double wd = p.decay ? config.weight_decay : 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw DivergenceError("non-finite gradient in " + p.name);
            const double eff = static_cast<double>(g[i]) + wd * (*p.values)[i];
            const double vel = m * v[i] - eta * eff;
            v[i] = static_cast<float>(vel);
            (*p.values)[i] = static_cast<float>((*p.values)[i] + vel);
        }
    }
    ++state.step;
}

namespace {

std::vector<std::vector<float>> snapshot(Network& net) {
    std::vector<std::vector<float>> out;
    for (auto& t : net.tensors()) out.push_back(*t.values);
    return out;
}

void restore(Network& net, const std::vector<std::vector<float>>& snap) {
    auto tensors = net.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].values = snap[i];
}

}  // namespace

TrainResult train(Network& net, const Dataset& dataset, const TrainConfig& config,
                  const std::vector<std::string>& val_images,
                  const EpochCallback& on_epoch) {
    config.validate();
    if (dataset.samples.empty()) throw DataError("train: dataset is empty");
    net.global_skip = config.residual_learning;

    TrainResult result;
    OptimizerState state;
    const int total = static_cast<int>(dataset.samples.size());

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        state.epoch = epoch;
        const double eta = lr_at(epoch, config);
        const auto order = dataset.epoch_order(config.seed, epoch);
        double loss_sum = 0.0;
        int batches = 0;

        for (int start = 0; start < total; start += config.batch_size) {
            const int count = std::min(config.batch_size, total - start);
            const int p = dataset.samples[order[start]].hr.h;
            Tensor lr_batch(count, 1, p, p), hr_batch(count, 1, p, p);
            for (int i = 0; i < count; ++i) {
                const auto& s = dataset.samples[order[start + i]];
                if (s.hr.h != p || s.hr.w != p)
                    throw UsageError("train: mixed patch sizes in dataset");
                std::copy(s.lr.v.begin(), s.lr.v.end(),
                          lr_batch.data.begin() + static_cast<std::size_t>(i) * p * p);
                std::copy(s.hr.v.begin(), s.hr.v.end(),
                          hr_batch.data.begin() + static_cast<std::size_t>(i) * p * p);
            }

            const auto before = snapshot(net);
            try {
                ForwardCache cache;
                Tensor out = forward(net, lr_batch, Mode::Train, &cache);
                LossResult loss = config.residual_learning
                                      ? residual_loss(cache.residual, lr_batch, hr_batch)
                                      : direct_loss(out, hr_batch);
                if (!std::isfinite(loss.loss))
                    throw DivergenceError("non-finite training loss");
                GradientMap grads = backward(net, cache, loss.grad);
                clip_gradients(grads, eta, config.clip_tau);
                sgd_step(net, grads, state, config);
                loss_sum += loss.loss;
                ++batches;
            } catch (const DivergenceError& e) {
                restore(net, before);
                result.diverged = true;
                result.divergence_note = e.what();
                break;
            }
        }

        if (result.diverged) break;

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = eta;
        rec.mean_loss = batches ? loss_sum / batches : 0.0;
        if (!val_images.empty()) {
            const EvalReport report = evaluate(&net, val_images, config.scales);
            for (int scale : config.scales)
                rec.val_psnr[scale] = report.mean_psnr(scale);
        }
        if (on_epoch) on_epoch(rec);
        result.history.push_back(std::move(rec));
    }
    return result;
}

void write_history_csv(const TrainResult& result, const std::vector<int>& scales,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write history: " + path);
    out << "epoch,lr,mean_train_loss";
    for (int scale : {2, 3, 4}) out << ",val_psnr_x" << scale;
    out << "\n";
    for (const auto& rec : result.history) {
        out << rec.epoch << "," << rec.lr << "," << rec.mean_loss;
        for (int scale : {2, 3, 4}) {
            out << ",";
            const auto it = rec.val_psnr.find(scale);
            const bool configured =
                std::find(scales.begin(), scales.end(), scale) != scales.end();
            if (configured && it != rec.val_psnr.end()) out << it->second;
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace srrn
