#include "srrn/arch.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "srrn/error.hpp"

namespace srrn {

int ArchSpec::depth() const {
    int body = 0;
    for (const auto& c : containers) body += c.units * convs_per_unit;
    return feature_convs + body + reconstruction_convs;
}

int ArchSpec::total_units() const {
    int u = 0;
    for (const auto& c : containers) u += c.units;
    return u;
}

std::string ArchSpec::canonical() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < containers.size(); ++i) {
        if (i) os << ",";
        os << containers[i].width;
        if (containers[i].units != 1) os << "_" << containers[i].units;
    }
    if (convs_per_unit != 2) os << " convs=" << convs_per_unit;
    if (relu_position != ReluPosition::BeforeConv) os << " relu=after";
    if (use_bn) os << " bn=1";
    if (feature_convs != 2) os << " head=" << feature_convs;
    if (reconstruction_convs != 2) os << " tail=" << reconstruction_convs;
    if (projection_kernel != 1) os << " proj=" << projection_kernel;
    return os.str();
}

namespace {

[[noreturn]] void parse_fail(const std::string& text, std::size_t pos,
                             const std::string& what) {
    throw ConfigError("arch parse error at position " + std::to_string(pos) +
                      " in \"" + text + "\": " + what);
}

long long parse_int(const std::string& text, std::size_t& pos) {
    if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos])))
        parse_fail(text, pos, "expected a number");
    long long v = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        v = v * 10 + (text[pos] - '0');
        if (v > 1'000'000'000LL) parse_fail(text, pos, "number too large");
        ++pos;
    }
    return v;
}

}  // namespace

ArchSpec parse_arch(const std::string& text) {
    ArchSpec spec;
    std::size_t pos = 0;
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) parse_fail(text, pos, "empty architecture string");

    // Container list: N[_k] ("," N[_k])*
    for (;;) {
        const std::size_t tok = pos;
        long long width = parse_int(text, pos);
        long long units = 1;
        if (pos < text.size() && text[pos] == '_') {
            ++pos;
            units = parse_int(text, pos);
        }
        if (width < 1) parse_fail(text, tok, "filter count must be >= 1");
        if (units < 1) parse_fail(text, tok, "unit count must be >= 1");
        spec.containers.push_back({static_cast<int>(width), static_cast<int>(units)});
        if (pos < text.size() && text[pos] == ',') {
            ++pos;
            continue;
        }
        break;
    }

    // Optional whitespace-separated key=value flags.
    while (pos < text.size()) {
        if (std::isspace(static_cast<unsigned char>(text[pos]))) {
            ++pos;
            continue;
        }
        const std::size_t tok = pos;
        std::string key;
        while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) ||
                                     text[pos] == '_')) {
            key += text[pos++];
        }
        if (pos >= text.size() || text[pos] != '=')
            parse_fail(text, tok, "expected flag of the form key=value");
        ++pos;
        if (key == "relu") {
            std::string val;
            while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos])))
                val += text[pos++];
            if (val == "before") spec.relu_position = ReluPosition::BeforeConv;
            else if (val == "after") spec.relu_position = ReluPosition::AfterConv;
            else parse_fail(text, tok, "relu must be 'before' or 'after'");
            continue;
        }
        const long long v = parse_int(text, pos);
        if (key == "convs") {
            if (v != 2 && v != 3) parse_fail(text, tok, "convs must be 2 or 3");
            spec.convs_per_unit = static_cast<int>(v);
        } else if (key == "bn") {
            if (v != 0 && v != 1) parse_fail(text, tok, "bn must be 0 or 1");
            spec.use_bn = v == 1;
        } else if (key == "head") {
            if (v < 1) parse_fail(text, tok, "head must be >= 1");
            spec.feature_convs = static_cast<int>(v);
        } else if (key == "tail") {
            if (v < 1) parse_fail(text, tok, "tail must be >= 1");
            spec.reconstruction_convs = static_cast<int>(v);
        } else if (key == "proj") {
            if (v != 1 && v != 3) parse_fail(text, tok, "proj must be 1 or 3");
            spec.projection_kernel = static_cast<int>(v);
        } else {
            parse_fail(text, tok, "unknown flag '" + key + "'");
        }
    }
    return spec;
}

namespace {

long long conv_params(int in_c, int out_c, int k) {
    return static_cast<long long>(k) * k * in_c * out_c + out_c;
}

}  // namespace

long long count_parameters(const ArchSpec& spec) {
    if (spec.containers.empty()) throw ConfigError("arch has no containers");
    long long total = 0;
    int in_c = 1;
    const int first_width = spec.containers.front().width;
    for (int i = 0; i < spec.feature_convs; ++i) {
        total += conv_params(in_c, first_width, 3);
        in_c = first_width;
    }
    for (const auto& c : spec.containers) {
        for (int u = 0; u < c.units; ++u) {
            int branch_in = in_c;
            for (int t = 0; t < spec.convs_per_unit; ++t) {
                if (spec.use_bn) {
                    // gamma+beta on whichever side of the conv the BN sits
                    const int bn_c = spec.relu_position == ReluPosition::BeforeConv
                                         ? branch_in
                                         : c.width;
                    total += 2LL * bn_c;
                }
                total += conv_params(branch_in, c.width, 3);
                branch_in = c.width;
            }
            if (u == 0 && in_c != c.width)
                total += conv_params(in_c, c.width, spec.projection_kernel);
            in_c = c.width;
        }
    }
    for (int i = 0; i < spec.reconstruction_convs; ++i) {
        const int out_c = i + 1 == spec.reconstruction_convs ? 1 : in_c;
        total += conv_params(in_c, out_c, 3);
        in_c = out_c;
    }
    return total;
}

int receptive_field(const ArchSpec& spec) { return 2 * spec.depth() + 1; }

PathStats path_stats(const ArchSpec& spec) {
    PathStats ps;
    ps.units = spec.total_units();
    ps.log2_total_paths = static_cast<double>(ps.units);
    if (ps.units > 30) {
        ps.exact = false;
        return ps;
    }
    ps.exact = true;
    ps.total_paths = 1ULL << ps.units;
    ps.depth_histogram.assign(ps.units + 1, 0);
    ps.depth_histogram[0] = 1;
    for (int u = 1; u <= ps.units; ++u) {
        for (int d = u; d > 0; --d)
            ps.depth_histogram[d] += ps.depth_histogram[d - 1];
    }
    return ps;
}

double perturbation_impact(const ArchSpec& spec, int container_index) {
    if (container_index < 0 ||
        container_index >= static_cast<int>(spec.containers.size())) {
        throw UsageError("container index " + std::to_string(container_index) +
                         " out of range [0," +
                         std::to_string(spec.containers.size()) + ")");
    }
    return 1.0 - std::pow(0.5, spec.containers[container_index].units);
}

namespace {

ConvLayer make_conv(const std::string& name, int in_c, int out_c, int k,
                    std::mt19937_64& rng, float scale = 1.0f) {
    ConvLayer layer;
    layer.name = name;
    layer.params.weights = Tensor(out_c, in_c, k, k);
    layer.params.bias.assign(out_c, 0.0f);
    layer.params.padding = k / 2;
    const float stddev = scale * std::sqrt(2.0f / static_cast<float>(k * k * in_c));
    std::normal_distribution<float> dist(0.0f, stddev);
    for (float& w : layer.params.weights.data) w = dist(rng);
    return layer;
}

BnLayer make_bn(const std::string& name, int channels) {
    BnLayer layer;
    layer.name = name;
    layer.params.gamma.assign(channels, 1.0f);
    layer.params.beta.assign(channels, 0.0f);
    layer.params.running_mean.assign(channels, 0.0f);
    layer.params.running_var.assign(channels, 1.0f);
    return layer;
}

}  // namespace

Network build_network(const ArchSpec& spec, std::uint64_t seed) {
    if (spec.containers.empty()) throw ConfigError("arch has no containers");
    Network net;
    net.arch = spec;
    std::mt19937_64 rng(seed);

    int in_c = 1;
    const int first_width = spec.containers.front().width;
    for (int i = 0; i < spec.feature_convs; ++i) {
        net.head.push_back(make_conv("head." + std::to_string(i), in_c, first_width, 3, rng));
        in_c = first_width;
    }
    for (std::size_t ci = 0; ci < spec.containers.size(); ++ci) {
        const auto& cs = spec.containers[ci];
        NetContainer container;
        container.width = cs.width;
        for (int u = 0; u < cs.units; ++u) {
            ResidualUnit unit;
            const std::string base =
                "body.c" + std::to_string(ci) + ".u" + std::to_string(u);
            int branch_in = in_c;
            // He init, modulated: the closing conv of each branch is scaled by
            // 1/sqrt(2U) so the stacked units keep O(1) output variance at
            // init; plain He doubles the variance per unit and the resulting
            // transient collapses small-data training onto the zero function.
            const float closing_scale =
                1.0f / std::sqrt(2.0f * static_cast<float>(spec.total_units()));
            for (int t = 0; t < spec.convs_per_unit; ++t) {
                BranchStep step;
                const bool closing = t + 1 == spec.convs_per_unit;
                step.conv = make_conv(base + ".conv" + std::to_string(t),
                                      branch_in, cs.width, 3, rng,
                                      closing ? closing_scale : 1.0f);
                if (spec.use_bn) {
                    const int bn_c = spec.relu_position == ReluPosition::BeforeConv
                                         ? branch_in
                                         : cs.width;
                    step.bn = make_bn(base + ".bn" + std::to_string(t), bn_c);
                }
                unit.branch.push_back(std::move(step));
                branch_in = cs.width;
            }
            if (u == 0 && in_c != cs.width) {
                unit.projection =
                    make_conv(base + ".proj", in_c, cs.width, spec.projection_kernel, rng);
            }
            container.units.push_back(std::move(unit));
            in_c = cs.width;
        }
        net.body.push_back(std::move(container));
    }
    for (int i = 0; i < spec.reconstruction_convs; ++i) {
        const int out_c = i + 1 == spec.reconstruction_convs ? 1 : in_c;
        // The predicted residual is small; a He-scale final conv makes the
        // initial output dwarf the target and the first steps crush every
        // weight toward zero. Start the reconstruction output small instead.
        const float scale = i + 1 == spec.reconstruction_convs ? 0.05f : 1.0f;
        net.tail.push_back(
            make_conv("tail." + std::to_string(i), in_c, out_c, 3, rng, scale));
        in_c = out_c;
    }
    return net;
}

namespace {

void push_conv_tensors(ConvLayer& layer, std::vector<ParamTensor>& out) {
    out.push_back({layer.name + ".weight", &layer.params.weights.data,
                   {layer.params.weights.n, layer.params.weights.c,
                    layer.params.weights.h, layer.params.weights.w},
                   true, true});
    out.push_back({layer.name + ".bias", &layer.params.bias,
                   {static_cast<int>(layer.params.bias.size())}, true, false});
}

void push_bn_tensors(BnLayer& layer, std::vector<ParamTensor>& out) {
    const int c = layer.params.channels();
    out.push_back({layer.name + ".gamma", &layer.params.gamma, {c}, true, false});
    out.push_back({layer.name + ".beta", &layer.params.beta, {c}, true, false});
    out.push_back({layer.name + ".running_mean", &layer.params.running_mean, {c}, false, false});
    out.push_back({layer.name + ".running_var", &layer.params.running_var, {c}, false, false});
}

}  // namespace

std::vector<ParamTensor> Network::tensors() {
    std::vector<ParamTensor> out;
    for (auto& layer : head) push_conv_tensors(layer, out);
    for (auto& container : body) {
        for (auto& unit : container.units) {
            for (auto& step : unit.branch) {
                push_conv_tensors(step.conv, out);
                if (step.bn) push_bn_tensors(*step.bn, out);
            }
            if (unit.projection) push_conv_tensors(*unit.projection, out);
        }
    }
    for (auto& layer : tail) push_conv_tensors(layer, out);
    return out;
}

std::vector<ParamTensor> Network::parameters() {
    std::vector<ParamTensor> out;
    for (auto& t : tensors())
        if (t.learnable) out.push_back(t);
    return out;
}

long long Network::parameter_count() {
    long long total = 0;
    for (auto& t : parameters()) total += static_cast<long long>(t.values->size());
    return total;
}

void Network::zero_parameters() {
    for (auto& t : parameters())
        for (float& v : *t.values) v = 0.0f;
}

namespace {

Tensor branch_forward(ResidualUnit& unit, const ArchSpec& spec, Tensor x,
                      Mode mode, ForwardCache* cache) {
    for (auto& step : unit.branch) {
        if (spec.relu_position == ReluPosition::BeforeConv) {
            if (step.bn) {
                BnCache bc;
                if (cache) cache->bn_inputs.push_back(x);
                x = bn_forward(x, step.bn->params, mode, &bc);
                if (cache) cache->bn_caches.push_back(std::move(bc));
            }
            if (cache) cache->relu_inputs.push_back(x);
            x = relu_forward(x);
            if (cache) cache->conv_inputs.push_back(x);
            x = conv2d_forward(x, step.conv.params, step.conv.name);
        } else {
            if (cache) cache->conv_inputs.push_back(x);
            x = conv2d_forward(x, step.conv.params, step.conv.name);
            if (step.bn) {
                BnCache bc;
                if (cache) cache->bn_inputs.push_back(x);
                x = bn_forward(x, step.bn->params, mode, &bc);
                if (cache) cache->bn_caches.push_back(std::move(bc));
            }
            if (cache) cache->relu_inputs.push_back(x);
            x = relu_forward(x);
        }
    }
    return x;
}

}  // namespace

Tensor forward(Network& net, const Tensor& input, Mode mode, ForwardCache* cache) {
    if (input.c != 1) {
        throw ConfigError("network input must have 1 (luminance) channel, got " +
                          std::to_string(input.c));
    }
    if (cache) {
        *cache = ForwardCache{};
        cache->mode = mode;
        cache->input = input;
    }
    Tensor x = input;
    for (auto& layer : net.head) {
        if (cache) cache->conv_inputs.push_back(x);
        x = conv2d_forward(x, layer.params, layer.name);
        if (cache) cache->relu_inputs.push_back(x);
        x = relu_forward(x);
    }
    for (auto& container : net.body) {
        for (auto& unit : container.units) {
            Tensor unit_in = x;
            Tensor b = branch_forward(unit, net.arch, std::move(x), mode, cache);
            Tensor skip;
            if (unit.projection) {
                if (cache) cache->conv_inputs.push_back(unit_in);
                skip = conv2d_forward(unit_in, unit.projection->params,
                                      unit.projection->name);
            } else {
                skip = std::move(unit_in);
            }
            x = add_forward(b, skip, "residual unit shortcut");
        }
    }
    for (auto& layer : net.tail) {
        if (cache) cache->conv_inputs.push_back(x);
        x = conv2d_forward(x, layer.params, layer.name);
    }
    if (cache) cache->residual = x;
    Tensor out = net.global_skip ? add_forward(x, input, "global skip") : std::move(x);
    if (cache) cache->valid = true;
    return out;
}

namespace {

Tensor pop(std::vector<Tensor>& stack) {
    Tensor t = std::move(stack.back());
    stack.pop_back();
    return t;
}

void store_conv_grads(GradientMap& grads, const ConvLayer& layer, ConvGrads& cg) {
    grads[layer.name + ".weight"] = std::move(cg.weights.data);
    grads[layer.name + ".bias"] = std::move(cg.bias);
}

}  // namespace

GradientMap backward(Network& net, ForwardCache& cache, const Tensor& grad_out) {
    if (!cache.valid) throw UsageError("backward called with a stale or missing cache");
    if (cache.mode != Mode::Train)
        throw UsageError("backward requires a train-mode forward cache");
    if (!grad_out.same_dims(cache.residual))
        throw UsageError("backward: grad_out dims " + grad_out.dims_str() +
                         " do not match output dims " + cache.residual.dims_str());
    cache.valid = false;

    GradientMap grads;
    Tensor g = grad_out;   // gradient at tail output (skip passes it through)

    for (auto it = net.tail.rbegin(); it != net.tail.rend(); ++it) {
        Tensor in = pop(cache.conv_inputs);
        ConvGrads cg = conv2d_backward(in, it->params, g, it->name);
        store_conv_grads(grads, *it, cg);
        g = std::move(cg.input);
    }

    for (auto cit = net.body.rbegin(); cit != net.body.rend(); ++cit) {
        for (auto uit = cit->units.rbegin(); uit != cit->units.rend(); ++uit) {
            Tensor skip_grad;
            if (uit->projection) {
                Tensor in = pop(cache.conv_inputs);
                ConvGrads cg =
                    conv2d_backward(in, uit->projection->params, g, uit->projection->name);
                store_conv_grads(grads, *uit->projection, cg);
                skip_grad = std::move(cg.input);
            } else {
                skip_grad = g;
            }
            Tensor gb = std::move(g);
            for (auto sit = uit->branch.rbegin(); sit != uit->branch.rend(); ++sit) {
                if (net.arch.relu_position == ReluPosition::BeforeConv) {
                    Tensor in = pop(cache.conv_inputs);
                    ConvGrads cg = conv2d_backward(in, sit->conv.params, gb, sit->conv.name);
                    store_conv_grads(grads, sit->conv, cg);
                    gb = std::move(cg.input);
                    Tensor rin = pop(cache.relu_inputs);
                    gb = relu_backward(rin, gb);
                    if (sit->bn) {
                        Tensor bin = pop(cache.bn_inputs);
                        BnCache bc = std::move(cache.bn_caches.back());
                        cache.bn_caches.pop_back();
                        BnGrads bg = bn_backward(bin, sit->bn->params, bc, gb);
                        grads[sit->bn->name + ".gamma"] = std::move(bg.gamma);
                        grads[sit->bn->name + ".beta"] = std::move(bg.beta);
                        gb = std::move(bg.input);
                    }
                } else {
                    Tensor rin = pop(cache.relu_inputs);
                    gb = relu_backward(rin, gb);
                    if (sit->bn) {
                        Tensor bin = pop(cache.bn_inputs);
                        BnCache bc = std::move(cache.bn_caches.back());
                        cache.bn_caches.pop_back();
                        BnGrads bg = bn_backward(bin, sit->bn->params, bc, gb);
                        grads[sit->bn->name + ".gamma"] = std::move(bg.gamma);
                        grads[sit->bn->name + ".beta"] = std::move(bg.beta);
                        gb = std::move(bg.input);
                    }
                    Tensor in = pop(cache.conv_inputs);
                    ConvGrads cg = conv2d_backward(in, sit->conv.params, gb, sit->conv.name);
                    store_conv_grads(grads, sit->conv, cg);
                    gb = std::move(cg.input);
                }
            }
            g = add_forward(gb, skip_grad, "shortcut gradient merge");
        }
    }

    for (auto it = net.head.rbegin(); it != net.head.rend(); ++it) {
        Tensor rin = pop(cache.relu_inputs);
        g = relu_backward(rin, g);
        Tensor in = pop(cache.conv_inputs);
        ConvGrads cg = conv2d_backward(in, it->params, g, it->name);
        store_conv_grads(grads, *it, cg);
        g = std::move(cg.input);
    }
    return grads;
}

}  // namespace srrn
