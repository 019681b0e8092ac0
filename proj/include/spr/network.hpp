#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spr/tensor.hpp"

namespace spr {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten, softmax_ce_head };

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

/// One layer of the net. Parameter-free kinds leave weights/bias empty.
/// conv2d weights are (n_out, n_inp, k, k); dense weights are (n_out, n_inp).
struct Layer {
    LayerKind kind = LayerKind::flatten;
    Tensor weights;
    Tensor bias;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    int in_ch = 0;
    int out_ch = 0;

    bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
};

inline Layer make_layer(LayerKind k) {
    Layer l;
    l.kind = k;
    return l;
}

/// Where a layer's parameters live in the flat global index space.
struct ParamSlot {
    std::size_t weight_offset = 0;
    std::size_t weight_count = 0;
    std::size_t bias_offset = 0;
    std::size_t bias_count = 0;
};

/// Feed-forward network. Parameters are enumerated layer by layer, weights
/// before bias, row-major within each tensor; that enumeration is the global
/// index space used by gradients, checkpoints and entity partitions.
struct Network {
    std::vector<int> input_shape;  // (features) for MLPs, (C,H,W) for CNNs
    std::vector<Layer> layers;
    std::vector<std::uint8_t> frozen;  // empty, or one flag per global index

    std::vector<ParamSlot> param_layout() const;
    std::size_t param_count() const;
    std::vector<int> output_shape() const;  // per-sample shape after all layers
    bool frozen_at(std::size_t j) const { return !frozen.empty() && frozen[j] != 0; }
};

/// Loss value plus dL/dw for every global parameter index.
struct GradientBundle {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
    std::vector<Tensor> inputs;                   // input seen by each layer
    std::vector<std::vector<std::size_t>> pool_src;  // per layer: argmax source index
    Tensor output;                                // final per-sample scores
};

Tensor forward(const Network& net, const Tensor& batch);
ForwardTrace forward_trace(const Network& net, const Tensor& batch);

/// Mean softmax cross-entropy over the batch plus full backprop.
GradientBundle loss_and_grad(const Network& net, const Tensor& batch,
                             const std::vector<int>& labels);

struct SgdState {
    std::vector<double> velocity;
};

/// v <- momentum*v + g ; w <- w - lr*v. Frozen indices are skipped and their
/// velocity pinned to zero.
void sgd_momentum_step(Network& net, const GradientBundle& grads, double lr,
                       double momentum, SgdState& state);

std::vector<double> get_params(const Network& net);
void set_params(Network& net, std::span<const double> flat);

/// One flag per global index: 1 for weight-tensor entries, 0 for bias
/// entries. Used by regularizers that cover weight matrices but not biases.
std::vector<std::uint8_t> weight_index_flags(const Network& net);

/// Kaiming-uniform fan-in init for dense/conv weights, zero biases.
void init_params(Network& net, std::uint64_t seed);

/// MLP: dense/relu alternations ending in a softmax-crossentropy head.
Network make_mlp(int in_features, const std::vector<int>& hidden, int classes);

/// ConvNet-S template: conv(in->c1,3x3)-relu-pool-conv(c1->c2,3x3)-relu-pool-
/// flatten-dense-head. Pad 1, stride 1, 2x2 pools.
Network make_convnet_s(int in_ch, int height, int width, int c1, int c2, int classes);

}  // namespace spr
