#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace srrn {

enum class Mode { Train, Eval };

// Dense 4-D array in (batch, channel, height, width) row-major order.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }

    float& at(int i, int j, int y, int x) {
        return data[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
    }
    const float& at(int i, int j, int y, int x) const {
        return data[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
    }

    bool same_dims(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    bool all_finite() const;
    std::string dims_str() const;
};

// Convolution weights in (out_c, in_c, kh, kw) order. Stride is always 1 here;
// padding = floor(k/2) preserves spatial size.
struct ConvParams {
    Tensor weights;            // n = out_c, c = in_c, h = kh, w = kw
    std::vector<float> bias;   // out_c entries
    int padding = 1;

    int out_channels() const { return weights.n; }
    int in_channels() const { return weights.c; }
    int kh() const { return weights.h; }
    int kw() const { return weights.w; }
};

struct BnParams {
    std::vector<float> gamma, beta;
    std::vector<float> running_mean, running_var;
    float epsilon = 1e-5f;
    float momentum = 0.1f;       // EMA weight for new batch statistics
    bool stats_initialized = false;

    int channels() const { return static_cast<int>(gamma.size()); }
};

Tensor conv2d_forward(const Tensor& input, const ConvParams& params,
                      const std::string& layer_name = {});

struct ConvGrads {
    Tensor input;
    Tensor weights;
    std::vector<float> bias;
};

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_out,
                          const std::string& layer_name = {});

Tensor relu_forward(const Tensor& input);
// Subgradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor add_forward(const Tensor& a, const Tensor& b,
                   const std::string& where = {});

// Per-channel batch statistics captured by the train-mode forward pass.
struct BnCache {
    std::vector<float> mean;
    std::vector<float> inv_std;   // 1 / sqrt(var + eps)
};

Tensor bn_forward(const Tensor& input, BnParams& params, Mode mode,
                  BnCache* cache = nullptr);

struct BnGrads {
    Tensor input;
    std::vector<float> gamma;
    std::vector<float> beta;
};

BnGrads bn_backward(const Tensor& input, const BnParams& params,
                    const BnCache& cache, const Tensor& grad_out);

}  // namespace srrn
