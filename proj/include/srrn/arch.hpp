#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srrn/tensor.hpp"

namespace srrn {

enum class ReluPosition { BeforeConv, AfterConv };

struct ContainerSpec {
    int width = 0;   // filter count N
    int units = 0;   // residual units k
};

// Network blueprint: container notation plus unit hyperparameters.
// Canonical text form: "16_3,32_3,64_3" with optional trailing flags,
// e.g. "16_3,32_3 convs=3 relu=after bn=1 head=2 tail=2 proj=3".
struct ArchSpec {
    std::vector<ContainerSpec> containers;
    int convs_per_unit = 2;          // 2 or 3
    ReluPosition relu_position = ReluPosition::BeforeConv;
    bool use_bn = false;
    int feature_convs = 2;           // head size
    int reconstruction_convs = 2;    // tail size
    int projection_kernel = 1;       // 1 or 3

    int depth() const;               // excludes projection convolutions
    int total_units() const;
    std::string canonical() const;
};

ArchSpec parse_arch(const std::string& text);

long long count_parameters(const ArchSpec& spec);

// 2*depth + 1 for a stack of 3x3 stride-1 convolutions.
int receptive_field(const ArchSpec& spec);

// Unfolded-path census of the residual body: 2^U paths over U units, path
// depth counted as the number of residual branches taken.
struct PathStats {
    int units = 0;
    bool exact = false;                              // false when U > 30
    unsigned long long total_paths = 0;              // valid when exact
    std::vector<unsigned long long> depth_histogram; // index = depth, when exact
    double log2_total_paths = 0.0;                   // always valid
};

PathStats path_stats(const ArchSpec& spec);

// Fraction of unfolded paths that traverse at least one branch of the given
// container: 1 - 2^(-k).
double perturbation_impact(const ArchSpec& spec, int container_index);

struct ConvLayer {
    std::string name;
    ConvParams params;
};

struct BnLayer {
    std::string name;
    BnParams params;
};

struct BranchStep {
    ConvLayer conv;
    std::optional<BnLayer> bn;
};

struct ResidualUnit {
    std::vector<BranchStep> branch;
    std::optional<ConvLayer> projection;  // present only where width changes
};

struct NetContainer {
    int width = 0;
    std::vector<ResidualUnit> units;
};

struct ParamTensor {
    std::string name;
    std::vector<float>* values = nullptr;
    std::vector<int> dims;
    bool learnable = true;
    bool decay = true;   // weight decay applies (conv weights only)
};

class Network {
public:
    ArchSpec arch;
    std::vector<ConvLayer> head;
    std::vector<NetContainer> body;
    std::vector<ConvLayer> tail;
    bool global_skip = true;

    // All named tensors in deterministic order, running stats included.
    std::vector<ParamTensor> tensors();
    std::vector<ParamTensor> parameters();   // learnable only
    long long parameter_count();             // learnable element total
    void zero_parameters();
};

Network build_network(const ArchSpec& spec, std::uint64_t seed);

// Intermediate activations captured by forward() for the matching backward().
struct ForwardCache {
    Mode mode = Mode::Train;
    bool valid = false;
    Tensor input;
    Tensor residual;                  // tail output, before the global skip
    std::vector<Tensor> conv_inputs;
    std::vector<Tensor> relu_inputs;
    std::vector<Tensor> bn_inputs;
    std::vector<BnCache> bn_caches;
};

Tensor forward(Network& net, const Tensor& input, Mode mode,
               ForwardCache* cache = nullptr);

using GradientMap = std::map<std::string, std::vector<float>>;

// grad_out is the gradient at the network output; with the global skip the
// same gradient reaches the tail. Consumes the cache.
GradientMap backward(Network& net, ForwardCache& cache, const Tensor& grad_out);

}  // namespace srrn
