#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "srrn/arch.hpp"
#include "srrn/data.hpp"

namespace srrn {

struct TrainConfig {
    double base_lr = 0.1;
    int lr_step = 30;            // epochs per decade
    double momentum = 0.9;
    double weight_decay = 1e-4;  // weights only, never biases or BN params
    double clip_tau = 0.01;
    int batch_size = 64;
    int patch_size = 41;
    std::vector<int> scales{2, 3, 4};
    int epochs = 60;
    std::uint64_t seed = 0;
    bool residual_learning = true;   // false: predict HR directly, no global skip

    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    Tensor grad;    // d loss / d prediction
};

// Euclidean loss on high-frequency residuals: prediction is the network
// output before the global skip; target is hr - lr.
LossResult residual_loss(const Tensor& prediction, const Tensor& lr_patch,
                         const Tensor& hr_patch);

// Direct formulation used by the comparison experiment: prediction vs hr.
LossResult direct_loss(const Tensor& prediction, const Tensor& hr_patch);

// Elementwise clamp into [-tau/eta, tau/eta].
void clip_gradients(GradientMap& grads, double eta, double tau);

struct OptimizerState {
    std::map<std::string, std::vector<float>> velocity;
    int epoch = 0;
    long long step = 0;
};

double lr_at(int epoch, const TrainConfig& config);

// Momentum SGD with decoupled-from-bias weight decay:
//   v <- m*v - eta*(g + wd*theta);  theta <- theta + v
void sgd_step(Network& net, const GradientMap& grads, OptimizerState& state,
              const TrainConfig& config);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    std::map<int, double> val_psnr;   // by scale, present only when validated
};

struct TrainResult {
    std::vector<EpochRecord> history;
    bool diverged = false;
    std::string divergence_note;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Shuffled mini-batch SGD over the dataset. val_images, when nonempty, are
// scored per epoch at every configured scale. On divergence the network keeps
// the parameters from before the failing step and result.diverged is set.
TrainResult train(Network& net, const Dataset& dataset, const TrainConfig& config,
                  const std::vector<std::string>& val_images = {},
                  const EpochCallback& on_epoch = nullptr);

void write_history_csv(const TrainResult& result, const std::vector<int>& scales,
                       const std::string& path);

}  // namespace srrn
