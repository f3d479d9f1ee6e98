#include "srrn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>

#include "srrn/error.hpp"
#include "srrn/threads.hpp"

namespace srrn {

bool Tensor::all_finite() const {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::dims_str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

namespace {

// Unfolds one batch item into a (in_c*kh*kw) x (h*w) patch matrix with zero
// padding, so convolution becomes a plain matrix product.
void im2col(const Tensor& input, int item, int kh, int kw, int pad,
            std::vector<float>& col) {
    const int c = input.c, h = input.h, w = input.w;
    const std::size_t sites = static_cast<std::size_t>(h) * w;
    col.assign(static_cast<std::size_t>(c) * kh * kw * sites, 0.0f);
    std::size_t row = 0;
    for (int ic = 0; ic < c; ++ic) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                float* dst = col.data() + row * sites;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    const int x_lo = std::max(0, pad - kx);
                    const int x_hi = std::min(w, w + pad - kx);
                    const float* src = &input.at(item, ic, sy, 0);
                    for (int x = x_lo; x < x_hi; ++x) {
                        dst[static_cast<std::size_t>(y) * w + x] = src[x + kx - pad];
                    }
                }
            }
        }
    }
}

// Inverse of im2col: accumulates a (in_c*kh*kw) x (h*w) gradient matrix back
// into the input gradient of one batch item. Each channel owns a disjoint
// output slice, so the per-channel loop parallelizes without races.
void col2im_accumulate(const std::vector<float>& col, int item, int kh, int kw,
                       int pad, Tensor& grad_input) {
    const int c = grad_input.c, h = grad_input.h, w = grad_input.w;
    const std::size_t sites = static_cast<std::size_t>(h) * w;
    parallel_for(0, c, [&](int ic) {
        std::size_t row = static_cast<std::size_t>(ic) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                const float* src = col.data() + row * sites;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    const int x_lo = std::max(0, pad - kx);
                    const int x_hi = std::min(w, w + pad - kx);
                    float* dst = &grad_input.at(item, ic, sy, 0);
                    for (int x = x_lo; x < x_hi; ++x) {
                        dst[x + kx - pad] += src[static_cast<std::size_t>(y) * w + x];
                    }
                }
            }
        }
    });
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const ConvParams& params,
                      const std::string& layer_name) {
    if (input.c != params.in_channels()) {
        throw ConfigError("conv2d" + (layer_name.empty() ? "" : " [" + layer_name + "]") +
                          ": input has " + std::to_string(input.c) +
                          " channels, layer expects " +
                          std::to_string(params.in_channels()));
    }
    const int out_c = params.out_channels();
    const int kh = params.kh(), kw = params.kw(), pad = params.padding;
    const std::size_t sites = static_cast<std::size_t>(input.h) * input.w;
    const std::size_t krows = static_cast<std::size_t>(input.c) * kh * kw;

    Tensor out(input.n, out_c, input.h, input.w);
    std::vector<float> col;
    for (int item = 0; item < input.n; ++item) {
        im2col(input, item, kh, kw, pad, col);
        parallel_for(0, out_c, [&](int oc) {
            const float* wrow = &params.weights.at(oc, 0, 0, 0);
            float* orow = &out.at(item, oc, 0, 0);
            for (std::size_t s = 0; s < sites; ++s) orow[s] = params.bias[oc];
            for (std::size_t k = 0; k < krows; ++k) {
                const float wk = wrow[k];
                if (wk == 0.0f) continue;
                const float* crow = col.data() + k * sites;
                for (std::size_t s = 0; s < sites; ++s) orow[s] += wk * crow[s];
            }
        });
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_out, const std::string& layer_name) {
    const int out_c = params.out_channels();
    const int kh = params.kh(), kw = params.kw(), pad = params.padding;
    if (input.c != params.in_channels() || grad_out.n != input.n ||
        grad_out.c != out_c || grad_out.h != input.h || grad_out.w != input.w) {
        throw ConfigError("conv2d backward" +
                          (layer_name.empty() ? "" : " [" + layer_name + "]") +
                          ": dims " + input.dims_str() + " / " + grad_out.dims_str() +
                          " inconsistent with weights " + params.weights.dims_str());
    }
    const int h = input.h, w = input.w;

    ConvGrads g;
    g.input = Tensor(input.n, input.c, h, w);
    g.weights = Tensor(out_c, input.c, kh, kw);
    g.bias.assign(out_c, 0.0f);

    const std::size_t sites = static_cast<std::size_t>(h) * w;
    const std::size_t krows = static_cast<std::size_t>(input.c) * kh * kw;
    std::vector<float> col;
    std::vector<float> gcol(krows * sites);
    std::vector<double> wacc(static_cast<std::size_t>(out_c) * krows, 0.0);
    std::vector<double> bacc(out_c, 0.0);

    for (int item = 0; item < input.n; ++item) {
        im2col(input, item, kh, kw, pad, col);

        // Bias and weight gradients: grad_out (out_c x sites) against the
        // patch matrix, double accumulators across items and sites.
        parallel_for(0, out_c, [&](int oc) {
            const float* go = &grad_out.at(item, oc, 0, 0);
            double bsum = 0.0;
            for (std::size_t s = 0; s < sites; ++s) bsum += go[s];
            bacc[oc] += bsum;
            double* wrow = wacc.data() + static_cast<std::size_t>(oc) * krows;
            for (std::size_t k = 0; k < krows; ++k) {
                const float* crow = col.data() + k * sites;
                double acc = 0.0;
                for (std::size_t s = 0; s < sites; ++s)
                    acc += static_cast<double>(go[s]) * crow[s];
                wrow[k] += acc;
            }
        });

        // Input gradient: gcol = W^T * grad_out, folded back with col2im.
        parallel_for(0, static_cast<int>(krows), [&](int k) {
            float* grow = gcol.data() + static_cast<std::size_t>(k) * sites;
            std::fill(grow, grow + sites, 0.0f);
            for (int oc = 0; oc < out_c; ++oc) {
                const float wk = params.weights.data[static_cast<std::size_t>(oc) * krows + k];
                if (wk == 0.0f) continue;
                const float* go = &grad_out.at(item, oc, 0, 0);
                for (std::size_t s = 0; s < sites; ++s) grow[s] += wk * go[s];
            }
        });
        col2im_accumulate(gcol, item, kh, kw, pad, g.input);
    }

    for (int oc = 0; oc < out_c; ++oc) {
        g.bias[oc] = static_cast<float>(bacc[oc]);
        for (std::size_t k = 0; k < krows; ++k) {
            g.weights.data[static_cast<std::size_t>(oc) * krows + k] =
                static_cast<float>(wacc[static_cast<std::size_t>(oc) * krows + k]);
        }
    }
    return g;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    if (!input.same_dims(grad_out)) {
        throw ConfigError("relu backward: dims " + input.dims_str() + " vs " +
                          grad_out.dims_str());
    }
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (input.data[i] <= 0.0f) g.data[i] = 0.0f;
    }
    return g;
}

Tensor add_forward(const Tensor& a, const Tensor& b, const std::string& where) {
    if (!a.same_dims(b)) {
        throw ConfigError("add" + (where.empty() ? "" : " [" + where + "]") +
                          ": dims " + a.dims_str() + " vs " + b.dims_str());
    }
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor bn_forward(const Tensor& input, BnParams& params, Mode mode,
                  BnCache* cache) {
    if (input.c != params.channels()) {
        throw ConfigError("bn: input has " + std::to_string(input.c) +
                          " channels, params have " +
                          std::to_string(params.channels()));
    }
    const int c = input.c;
    const std::size_t per_channel =
        static_cast<std::size_t>(input.n) * input.h * input.w;
    Tensor out(input.n, c, input.h, input.w);

    std::vector<float> mean(c), inv_std(c);
    if (mode == Mode::Train) {
        for (int j = 0; j < c; ++j) {
            double sum = 0.0, sq = 0.0;
            for (int item = 0; item < input.n; ++item) {
                const float* p = &input.at(item, j, 0, 0);
                for (std::size_t s = 0; s < static_cast<std::size_t>(input.h) * input.w; ++s) {
                    sum += p[s];
                    sq += static_cast<double>(p[s]) * p[s];
                }
            }
            const double mu = sum / static_cast<double>(per_channel);
            const double var = std::max(0.0, sq / static_cast<double>(per_channel) - mu * mu);
            mean[j] = static_cast<float>(mu);
            inv_std[j] = static_cast<float>(1.0 / std::sqrt(var + params.epsilon));
            if (!params.stats_initialized) {
                params.running_mean[j] = static_cast<float>(mu);
                params.running_var[j] = static_cast<float>(var);
            } else {
                params.running_mean[j] = (1.0f - params.momentum) * params.running_mean[j] +
                                         params.momentum * static_cast<float>(mu);
                params.running_var[j] = (1.0f - params.momentum) * params.running_var[j] +
                                        params.momentum * static_cast<float>(var);
            }
        }
        if (!params.stats_initialized) params.stats_initialized = true;
    } else {
        if (!params.stats_initialized) {
            throw UsageError("bn: eval mode requested but running statistics are uninitialized");
        }
        for (int j = 0; j < c; ++j) {
            mean[j] = params.running_mean[j];
            inv_std[j] = 1.0f / std::sqrt(params.running_var[j] + params.epsilon);
        }
    }

    for (int item = 0; item < input.n; ++item) {
        for (int j = 0; j < c; ++j) {
            const float* p = &input.at(item, j, 0, 0);
            float* q = &out.at(item, j, 0, 0);
            for (std::size_t s = 0; s < static_cast<std::size_t>(input.h) * input.w; ++s) {
                q[s] = params.gamma[j] * (p[s] - mean[j]) * inv_std[j] + params.beta[j];
            }
        }
    }
    if (cache) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

BnGrads bn_backward(const Tensor& input, const BnParams& params,
                    const BnCache& cache, const Tensor& grad_out) {
    if (!input.same_dims(grad_out) || static_cast<int>(cache.mean.size()) != input.c) {
        throw UsageError("bn backward: cache/dims mismatch");
    }
    const int c = input.c;
    const double m = static_cast<double>(input.n) * input.h * input.w;
    BnGrads g;
    g.input = Tensor(input.n, c, input.h, input.w);
    g.gamma.assign(c, 0.0f);
    g.beta.assign(c, 0.0f);

    for (int j = 0; j < c; ++j) {
        const double mu = cache.mean[j], is = cache.inv_std[j];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int item = 0; item < input.n; ++item) {
            const float* x = &input.at(item, j, 0, 0);
            const float* dy = &grad_out.at(item, j, 0, 0);
            for (std::size_t s = 0; s < static_cast<std::size_t>(input.h) * input.w; ++s) {
                const double xhat = (x[s] - mu) * is;
                sum_dy += dy[s];
                sum_dy_xhat += dy[s] * xhat;
            }
        }
        g.beta[j] = static_cast<float>(sum_dy);
        g.gamma[j] = static_cast<float>(sum_dy_xhat);
        const double gamma = params.gamma[j];
        for (int item = 0; item < input.n; ++item) {
            const float* x = &input.at(item, j, 0, 0);
            const float* dy = &grad_out.at(item, j, 0, 0);
            float* dx = &g.input.at(item, j, 0, 0);
            for (std::size_t s = 0; s < static_cast<std::size_t>(input.h) * input.w; ++s) {
                const double xhat = (x[s] - mu) * is;
                dx[s] = static_cast<float>(
                    gamma * is * (dy[s] - sum_dy / m - xhat * sum_dy_xhat / m));
            }
        }
    }
    return g;
}

}  // namespace srrn
