#include "spr/network.hpp"

#include <algorithm>
#include <cmath>

#include "spr/rng.hpp"

namespace spr {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::flatten: return "flatten";
        case LayerKind::softmax_ce_head: return "softmax-crossentropy-head";
    }
    throw Error("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "conv2d") return LayerKind::conv2d;
    if (name == "relu") return LayerKind::relu;
    if (name == "maxpool2d") return LayerKind::maxpool2d;
    if (name == "flatten") return LayerKind::flatten;
    if (name == "softmax-crossentropy-head") return LayerKind::softmax_ce_head;
    throw Error("unknown layer kind name: " + name);
}

std::vector<ParamSlot> Network::param_layout() const {
    std::vector<ParamSlot> slots(layers.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (!l.has_params()) continue;
        slots[i].weight_offset = off;
        slots[i].weight_count = l.weights.numel();
        off += slots[i].weight_count;
        slots[i].bias_offset = off;
        slots[i].bias_count = l.bias.numel();
        off += slots[i].bias_count;
    }
    return slots;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers)
        if (l.has_params()) n += l.weights.numel() + l.bias.numel();
    return n;
}

namespace {

std::vector<int> layer_output_shape(const Layer& l, const std::vector<int>& in) {
    switch (l.kind) {
        case LayerKind::dense: {
            require(in.size() == 1, "dense layer expects flat input, got rank " +
                                        std::to_string(in.size()));
            require(in[0] == l.in_ch, "dense layer expects " + std::to_string(l.in_ch) +
                                          " features, got " + std::to_string(in[0]));
            return {l.out_ch};
        }
        case LayerKind::conv2d: {
            require(in.size() == 3, "conv2d expects (C,H,W) input");
            require(in[0] == l.in_ch, "conv2d expects " + std::to_string(l.in_ch) +
                                          " channels, got " + std::to_string(in[0]));
            int ho = (in[1] + 2 * l.pad - l.kernel) / l.stride + 1;
            int wo = (in[2] + 2 * l.pad - l.kernel) / l.stride + 1;
            require(ho > 0 && wo > 0, "conv2d output collapses to zero size");
            return {l.out_ch, ho, wo};
        }
        case LayerKind::relu:
        case LayerKind::softmax_ce_head:
            return in;
        case LayerKind::maxpool2d: {
            require(in.size() == 3, "maxpool2d expects (C,H,W) input");
            int ho = (in[1] - l.kernel) / l.stride + 1;
            int wo = (in[2] - l.kernel) / l.stride + 1;
            require(ho > 0 && wo > 0, "maxpool2d output collapses to zero size");
            return {in[0], ho, wo};
        }
        case LayerKind::flatten: {
            int n = 1;
            for (int e : in) n *= e;
            return {n};
        }
    }
    throw Error("unknown layer kind");
}

Tensor dense_forward(const Layer& l, const Tensor& x) {
    int batch = x.shape[0];
    Tensor y({batch, l.out_ch});
    for (int b = 0; b < batch; ++b) {
        const double* xi = &x.data[static_cast<std::size_t>(b) * l.in_ch];
        for (int o = 0; o < l.out_ch; ++o) {
            const double* w = &l.weights.data[static_cast<std::size_t>(o) * l.in_ch];
            double acc = l.bias.data[o];
            for (int i = 0; i < l.in_ch; ++i) acc += w[i] * xi[i];
            y.at2(b, o) = acc;
        }
    }
    return y;
}

Tensor conv_forward(const Layer& l, const Tensor& x) {
    int batch = x.shape[0], ci = x.shape[1], h = x.shape[2], w = x.shape[3];
    int k = l.kernel, s = l.stride, p = l.pad;
    int ho = (h + 2 * p - k) / s + 1;
    int wo = (w + 2 * p - k) / s + 1;
    Tensor y({batch, l.out_ch, ho, wo});
    for (int b = 0; b < batch; ++b)
        for (int o = 0; o < l.out_ch; ++o)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = l.bias.data[o];
                    for (int c = 0; c < ci; ++c)
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * s - p + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * s - p + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += l.weights.at4(o, c, ky, kx) * x.at4(b, c, iy, ix);
                            }
                        }
                    y.at4(b, o, oy, ox) = acc;
                }
    return y;
}

Tensor pool_forward(const Layer& l, const Tensor& x, std::vector<std::size_t>& src) {
    int batch = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    int k = l.kernel, s = l.stride;
    int ho = (h - k) / s + 1;
    int wo = (w - k) / s + 1;
    Tensor y({batch, c, ho, wo});
    src.assign(y.numel(), 0);
    std::size_t oi = 0;
    for (int b = 0; b < batch; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox, ++oi) {
                    double best = 0.0;
                    std::size_t best_idx = 0;
                    bool first = true;
                    // Ties go to the first (lowest flat index) maximum.
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            std::size_t idx = x.idx4(b, ch, oy * s + ky, ox * s + kx);
                            double v = x.data[idx];
                            if (first || v > best) {
                                best = v;
                                best_idx = idx;
                                first = false;
                            }
                        }
                    y.data[oi] = best;
                    src[oi] = best_idx;
                }
    return y;
}

}  // namespace

std::vector<int> Network::output_shape() const {
    std::vector<int> s = input_shape;
    for (const Layer& l : layers) s = layer_output_shape(l, s);
    return s;
}

ForwardTrace forward_trace(const Network& net, const Tensor& batch) {
    require(!net.layers.empty(), "empty network");
    require(batch.dim() >= 2, "batch must have a leading sample dimension");
    std::vector<int> per_sample(batch.shape.begin() + 1, batch.shape.end());
    require(per_sample == net.input_shape,
            "batch shape " + batch.shape_str() + " does not match network input");

    ForwardTrace tr;
    tr.inputs.reserve(net.layers.size());
    tr.pool_src.resize(net.layers.size());
    Tensor cur = batch;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        tr.inputs.push_back(cur);
        switch (l.kind) {
            case LayerKind::dense: cur = dense_forward(l, cur); break;
            case LayerKind::conv2d: cur = conv_forward(l, cur); break;
            case LayerKind::relu: {
                Tensor y = cur;
                for (double& v : y.data) v = v > 0.0 ? v : 0.0;
                cur = std::move(y);
                break;
            }
            case LayerKind::maxpool2d: cur = pool_forward(l, cur, tr.pool_src[i]); break;
            case LayerKind::flatten: {
                int batch_n = cur.shape[0];
                int rest = static_cast<int>(cur.numel()) / batch_n;
                Tensor y({batch_n, rest}, cur.data);
                cur = std::move(y);
                break;
            }
            case LayerKind::softmax_ce_head:
                // Identity here; the head pairs with labels in loss_and_grad.
                break;
        }
        ensure_finite(cur, "forward through " + layer_kind_name(l.kind));
    }
    tr.output = std::move(cur);
    return tr;
}

Tensor forward(const Network& net, const Tensor& batch) {
    return forward_trace(net, batch).output;
}

GradientBundle loss_and_grad(const Network& net, const Tensor& batch,
                             const std::vector<int>& labels) {
    require(batch.shape[0] > 0, "empty batch");
    require(static_cast<std::size_t>(batch.shape[0]) == labels.size(),
            "label count does not match batch size");

    ForwardTrace tr = forward_trace(net, batch);
    const Tensor& logits = tr.output;
    require(logits.dim() == 2, "network output must be (batch, classes)");
    int b = logits.shape[0], classes = logits.shape[1];
    for (int label : labels)
        require(label >= 0 && label < classes,
                "label " + std::to_string(label) + " out of range [0," +
                    std::to_string(classes) + ")");

    GradientBundle out;
    out.grad.assign(net.param_count(), 0.0);

    // Mean cross-entropy with max-subtraction; d(logits) = (softmax-onehot)/B.
    Tensor dcur({b, classes});
    double loss = 0.0;
    for (int s = 0; s < b; ++s) {
        double mx = logits.at2(s, 0);
        for (int c = 1; c < classes; ++c) mx = std::max(mx, logits.at2(s, c));
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(logits.at2(s, c) - mx);
        double logz = mx + std::log(denom);
        loss += logz - logits.at2(s, labels[s]);
        for (int c = 0; c < classes; ++c) {
            double p = std::exp(logits.at2(s, c) - mx) / denom;
            dcur.at2(s, c) = (p - (c == labels[s] ? 1.0 : 0.0)) / b;
        }
    }
    out.loss = loss / b;
    if (!is_finite(out.loss)) throw NumericError("non-finite loss");

    std::vector<ParamSlot> slots = net.param_layout();
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const Layer& l = net.layers[li];
        const Tensor& x = tr.inputs[li];
        switch (l.kind) {
            case LayerKind::softmax_ce_head:
                break;
            case LayerKind::flatten: {
                Tensor dx(x.shape, dcur.data);
                dcur = std::move(dx);
                break;
            }
            case LayerKind::relu: {
                for (std::size_t i = 0; i < dcur.data.size(); ++i)
                    if (x.data[i] <= 0.0) dcur.data[i] = 0.0;  // subgradient 0 at 0
                break;
            }
            case LayerKind::maxpool2d: {
                Tensor dx(x.shape);
                const auto& src = tr.pool_src[li];
                for (std::size_t i = 0; i < dcur.data.size(); ++i)
                    dx.data[src[i]] += dcur.data[i];
                dcur = std::move(dx);
                break;
            }
            case LayerKind::dense: {
                const ParamSlot& slot = slots[li];
                double* dw = &out.grad[slot.weight_offset];
                double* db = &out.grad[slot.bias_offset];
                Tensor dx({x.shape[0], l.in_ch});
                for (int s = 0; s < x.shape[0]; ++s) {
                    const double* xi = &x.data[static_cast<std::size_t>(s) * l.in_ch];
                    for (int o = 0; o < l.out_ch; ++o) {
                        double g = dcur.at2(s, o);
                        db[o] += g;
                        double* dwo = dw + static_cast<std::size_t>(o) * l.in_ch;
                        const double* wo =
                            &l.weights.data[static_cast<std::size_t>(o) * l.in_ch];
                        for (int i = 0; i < l.in_ch; ++i) {
                            dwo[i] += g * xi[i];
                            dx.at2(s, i) += g * wo[i];
                        }
                    }
                }
                dcur = std::move(dx);
                break;
            }
            case LayerKind::conv2d: {
                const ParamSlot& slot = slots[li];
                double* dw = &out.grad[slot.weight_offset];
                double* db = &out.grad[slot.bias_offset];
                int ci = x.shape[1], h = x.shape[2], w = x.shape[3];
                int k = l.kernel, s = l.stride, p = l.pad;
                int ho = dcur.shape[2], wo = dcur.shape[3];
                Tensor dx(x.shape);
                for (int bb = 0; bb < x.shape[0]; ++bb)
                    for (int o = 0; o < l.out_ch; ++o)
                        for (int oy = 0; oy < ho; ++oy)
                            for (int ox = 0; ox < wo; ++ox) {
                                double g = dcur.at4(bb, o, oy, ox);
                                if (g == 0.0) continue;
                                db[o] += g;
                                for (int c = 0; c < ci; ++c)
                                    for (int ky = 0; ky < k; ++ky) {
                                        int iy = oy * s - p + ky;
                                        if (iy < 0 || iy >= h) continue;
                                        for (int kx = 0; kx < k; ++kx) {
                                            int ix = ox * s - p + kx;
                                            if (ix < 0 || ix >= w) continue;
                                            std::size_t widx =
                                                l.weights.idx4(o, c, ky, kx);
                                            dw[widx] += g * x.at4(bb, c, iy, ix);
                                            dx.at4(bb, c, iy, ix) +=
                                                g * l.weights.data[widx];
                                        }
                                    }
                            }
                dcur = std::move(dx);
                break;
            }
        }
    }

    if (!net.frozen.empty())
        for (std::size_t j = 0; j < out.grad.size(); ++j)
            if (net.frozen[j]) out.grad[j] = 0.0;
    ensure_finite(out.grad, "backward pass");
    return out;
}

void sgd_momentum_step(Network& net, const GradientBundle& grads, double lr,
                       double momentum, SgdState& state) {
    require(lr > 0.0, "learning rate must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0,1)");
    std::size_t n = net.param_count();
    require(grads.grad.size() == n, "gradient size does not match parameter count");
    if (state.velocity.empty()) state.velocity.assign(n, 0.0);
    require(state.velocity.size() == n, "velocity size does not match parameter count");

    std::vector<double> flat = get_params(net);
    for (std::size_t j = 0; j < n; ++j) {
        if (net.frozen_at(j)) {
            state.velocity[j] = 0.0;
            continue;
        }
        state.velocity[j] = momentum * state.velocity[j] + grads.grad[j];
        flat[j] -= lr * state.velocity[j];
        if (!is_finite(flat[j])) throw NumericError("non-finite parameter after SGD step");
    }
    set_params(net, flat);
}

std::vector<double> get_params(const Network& net) {
    std::vector<double> flat;
    flat.reserve(net.param_count());
    for (const Layer& l : net.layers) {
        if (!l.has_params()) continue;
        flat.insert(flat.end(), l.weights.data.begin(), l.weights.data.end());
        flat.insert(flat.end(), l.bias.data.begin(), l.bias.data.end());
    }
    return flat;
}

std::vector<std::uint8_t> weight_index_flags(const Network& net) {
    std::vector<std::uint8_t> flags(net.param_count(), 0);
    for (const ParamSlot& slot : net.param_layout())
        std::fill_n(flags.begin() + static_cast<std::ptrdiff_t>(slot.weight_offset),
                    slot.weight_count, std::uint8_t{1});
    return flags;
}

void set_params(Network& net, std::span<const double> flat) {
    require(flat.size() == net.param_count(),
            "set_params: expected " + std::to_string(net.param_count()) +
                " values, got " + std::to_string(flat.size()));
    std::size_t off = 0;
    for (Layer& l : net.layers) {
        if (!l.has_params()) continue;
        std::copy(flat.begin() + off, flat.begin() + off + l.weights.numel(),
                  l.weights.data.begin());
        off += l.weights.numel();
        std::copy(flat.begin() + off, flat.begin() + off + l.bias.numel(),
                  l.bias.data.begin());
        off += l.bias.numel();
    }
}

void init_params(Network& net, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    for (Layer& l : net.layers) {
        if (!l.has_params()) continue;
        int fan_in = l.kind == LayerKind::conv2d ? l.in_ch * l.kernel * l.kernel : l.in_ch;
        double bound = std::sqrt(6.0 / fan_in);
        for (double& w : l.weights.data) w = rng.uniform(-bound, bound);
        for (double& b : l.bias.data) b = 0.0;
    }
}

Network make_mlp(int in_features, const std::vector<int>& hidden, int classes) {
    require(in_features > 0 && classes > 0, "bad MLP dimensions");
    Network net;
    net.input_shape = {in_features};
    int prev = in_features;
    for (int h : hidden) {
        Layer d = make_layer(LayerKind::dense);
        d.in_ch = prev;
        d.out_ch = h;
        d.weights = Tensor({h, prev});
        d.bias = Tensor({h});
        net.layers.push_back(std::move(d));
        net.layers.push_back(make_layer(LayerKind::relu));
        prev = h;
    }
    Layer out = make_layer(LayerKind::dense);
    out.in_ch = prev;
    out.out_ch = classes;
    out.weights = Tensor({classes, prev});
    out.bias = Tensor({classes});
    net.layers.push_back(std::move(out));
    net.layers.push_back(make_layer(LayerKind::softmax_ce_head));
    return net;
}

Network make_convnet_s(int in_ch, int height, int width, int c1, int c2, int classes) {
    require(in_ch > 0 && height >= 4 && width >= 4, "ConvNet-S needs at least 4x4 input");
    Network net;
    net.input_shape = {in_ch, height, width};

    auto conv = [](int ci, int co) {
        Layer l = make_layer(LayerKind::conv2d);
        l.in_ch = ci;
        l.out_ch = co;
        l.kernel = 3;
        l.stride = 1;
        l.pad = 1;
        l.weights = Tensor({co, ci, 3, 3});
        l.bias = Tensor({co});
        return l;
    };
    auto pool = [] {
        Layer l = make_layer(LayerKind::maxpool2d);
        l.kernel = 2;
        l.stride = 2;
        return l;
    };

    net.layers.push_back(conv(in_ch, c1));
    net.layers.push_back(make_layer(LayerKind::relu));
    net.layers.push_back(pool());
    net.layers.push_back(conv(c1, c2));
    net.layers.push_back(make_layer(LayerKind::relu));
    net.layers.push_back(pool());
    net.layers.push_back(make_layer(LayerKind::flatten));

    int fh = height / 2 / 2, fw = width / 2 / 2;
    Layer out = make_layer(LayerKind::dense);
    out.in_ch = c2 * fh * fw;
    out.out_ch = classes;
    out.weights = Tensor({classes, out.in_ch});
    out.bias = Tensor({classes});
    net.layers.push_back(std::move(out));
    net.layers.push_back(make_layer(LayerKind::softmax_ce_head));
    return net;
}

}  // namespace spr
