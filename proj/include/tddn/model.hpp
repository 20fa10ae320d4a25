#pragma once

// Temporal deep degradation network:
//   window (w x m)
//     -> [conv width 2, causal zero pad -> ReLU -> maxpool 2/2] x depth   temporal features
//     -> flatten -> FC to w*m -> ReLU -> reshape w x m              abstract features H
//     -> attention over rows of H                                   state s (m)
//     -> FC m->8 -> ReLU -> FC 8->1                                 RUL in cycles
//
// The attention MLP sees each row of the stacked matrix
// [H | H_r | H_s | H_m], where H_r repeats h_1, H_s = h_i - h_1 and
// H_m = h_i * h_1 (elementwise). Scores are tanh(W row + b) . u_s, and
// the weighted sum runs over the original rows h_i.

#include "tddn/layers.hpp"
#include "tddn/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tddn {

struct TddnConfig {
    std::size_t window = 64;
    std::size_t m = 15;
    std::vector<std::size_t> conv_channels = {32, 64, 128};
    std::size_t attention_size = 0; // 0 means "same as window"
    std::size_t regressor_hidden = 8;
    std::uint64_t seed = 0;

    std::size_t depth() const { return conv_channels.size(); }
    std::size_t d_a() const { return attention_size ? attention_size : window; }

    /// Time length after every pooling stage (floor halving).
    std::size_t temporal_length() const {
        std::size_t t = window;
        for (std::size_t k = 0; k < depth(); ++k) t /= 2;
        return t;
    }
    std::size_t temporal_channels() const { return conv_channels.back(); }

    void validate() const {
        if (m < 1) throw ConfigError("column count m must be >= 1");
        if (conv_channels.empty()) throw ConfigError("conv depth must be >= 1");
        for (auto c : conv_channels)
            if (c < 1) throw ConfigError("conv channel counts must be >= 1");
        std::size_t t = window;
        for (std::size_t k = 0; k < depth(); ++k) {
            if (t < 2) {
                throw ConfigError("window " + std::to_string(window) + " too small for " +
                                  std::to_string(depth()) + " pooling stages");
            }
            t /= 2;
        }
        if (regressor_hidden < 1) throw ConfigError("regressor width must be >= 1");
    }
};

/// Channel plan for a conv depth sweep: 32, 64, 128, 256, ...
inline std::vector<std::size_t> default_conv_channels(std::size_t depth) {
    if (depth < 1) throw ConfigError("conv depth must be >= 1");
    std::vector<std::size_t> ch;
    for (std::size_t k = 0; k < depth; ++k) ch.push_back(std::size_t{32} << k);
    return ch;
}

/// Every learnable array in a fixed order:
///   conv{k}.filters, conv{k}.bias (k = 1..depth), abstract.weight,
///   abstract.bias, attention.weight, attention.bias, attention.context,
///   regressor1.weight, regressor1.bias, regressor2.weight, regressor2.bias
struct TddnParams {
    TddnConfig config;
    std::vector<Param> list;

    Param& conv_filters(std::size_t k) { return list[2 * k]; }
    Param& conv_bias(std::size_t k) { return list[2 * k + 1]; }
    const Param& conv_filters(std::size_t k) const { return list[2 * k]; }
    const Param& conv_bias(std::size_t k) const { return list[2 * k + 1]; }

    Param& at(std::size_t offset) { return list[2 * config.depth() + offset]; }
    const Param& at(std::size_t offset) const { return list[2 * config.depth() + offset]; }

    Param& abstract_weight() { return at(0); }
    Param& abstract_bias() { return at(1); }
    Param& attention_weight() { return at(2); }
    Param& attention_bias() { return at(3); }
    Param& context() { return at(4); }
    Param& reg1_weight() { return at(5); }
    Param& reg1_bias() { return at(6); }
    Param& reg2_weight() { return at(7); }
    Param& reg2_bias() { return at(8); }
    const Param& abstract_weight() const { return at(0); }
    const Param& abstract_bias() const { return at(1); }
    const Param& attention_weight() const { return at(2); }
    const Param& attention_bias() const { return at(3); }
    const Param& context() const { return at(4); }
    const Param& reg1_weight() const { return at(5); }
    const Param& reg1_bias() const { return at(6); }
    const Param& reg2_weight() const { return at(7); }
    const Param& reg2_bias() const { return at(8); }

    void zero_grad() {
        for (auto& p : list) p.zero_grad();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : list) n += p.value.size();
        return n;
    }

    const Param* find(const std::string& name) const {
        for (const auto& p : list)
            if (p.name == name) return &p;
        return nullptr;
    }
};

/// Shapes of every parameter, in TddnParams order.
inline std::vector<std::pair<std::string, Shape>> param_shapes(const TddnConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> out;
    std::size_t in_ch = cfg.m;
    for (std::size_t k = 0; k < cfg.depth(); ++k) {
        const auto L = cfg.conv_channels[k];
        const auto tag = "conv" + std::to_string(k + 1);
        out.push_back({tag + ".filters", {L, kConvWidth, in_ch}});
        out.push_back({tag + ".bias", {L}});
        in_ch = L;
    }
    const std::size_t flat = cfg.temporal_length() * cfg.temporal_channels();
    const std::size_t wm = cfg.window * cfg.m;
    out.push_back({"abstract.weight", {wm, flat}});
    out.push_back({"abstract.bias", {wm}});
    out.push_back({"attention.weight", {cfg.d_a(), 4 * cfg.m}});
    out.push_back({"attention.bias", {cfg.d_a()}});
    out.push_back({"attention.context", {cfg.d_a()}});
    out.push_back({"regressor1.weight", {cfg.regressor_hidden, cfg.m}});
    out.push_back({"regressor1.bias", {cfg.regressor_hidden}});
    out.push_back({"regressor2.weight", {1, cfg.regressor_hidden}});
    out.push_back({"regressor2.bias", {1}});
    return out;
}

/// Closed-form parameter count.
inline std::size_t parameter_count(const TddnConfig& cfg) {
    cfg.validate();
    std::size_t n = 0, in_ch = cfg.m;
    for (auto L : cfg.conv_channels) {
        n += L * kConvWidth * in_ch + L;
        in_ch = L;
    }
    const std::size_t flat = cfg.temporal_length() * cfg.temporal_channels();
    const std::size_t wm = cfg.window * cfg.m;
    n += wm * flat + wm;
    n += cfg.d_a() * 4 * cfg.m + 2 * cfg.d_a();
    n += cfg.regressor_hidden * cfg.m + cfg.regressor_hidden + cfg.regressor_hidden + 1;
    return n;
}

/// Glorot-uniform weights, zero biases, context vector drawn like a weight
/// row. Deterministic in config.seed.
inline TddnParams init_params(const TddnConfig& cfg) {
    TddnParams p;
    p.config = cfg;
    std::mt19937_64 rng(cfg.seed);
    for (auto& [name, shape] : param_shapes(cfg)) {
        Tensor t(shape);
        const bool is_bias = name.ends_with(".bias");
        if (!is_bias) {
            double fan_in = 0, fan_out = 0;
            if (shape.size() == 3) { // conv: L x width x C
                fan_in = static_cast<double>(shape[1] * shape[2]);
                fan_out = static_cast<double>(shape[1] * shape[0]);
            } else if (shape.size() == 2) {
                fan_in = static_cast<double>(shape[1]);
                fan_out = static_cast<double>(shape[0]);
            } else { // attention.context
                fan_in = static_cast<double>(shape[0]);
                fan_out = 1.0;
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : t.values()) v = dist(rng);
        }
        p.list.emplace_back(name, std::move(t));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Stages. All take a batch with the sample index first.

struct ConvStackTrace {
    std::vector<Tensor> inputs;      // input to conv k
    std::vector<Tensor> activations; // relu(conv k)
    std::vector<PoolResult> pools;
};

inline Tensor as_batch(const Tensor& window) {
    if (window.rank() == 3) return window;
    if (window.rank() == 2) return window.reshaped({1, window.dim(0), window.dim(1)});
    throw ShapeError("expected a w x m window or a B x w x m batch, got " + shape_str(window.shape()));
}

/// B x w x m -> B x (w >> depth) x channels.back()
inline Tensor conv_stack(const TddnParams& p, const Tensor& windows, ConvStackTrace* trace = nullptr) {
    const auto& cfg = p.config;
    const Tensor x0 = as_batch(windows);
    if (x0.dim(1) != cfg.window || x0.dim(2) != cfg.m) {
        throw ShapeError("conv_stack: window " + shape_str(x0.shape()) + " does not match config w=" +
                         std::to_string(cfg.window) + ", m=" + std::to_string(cfg.m));
    }
    if (trace) *trace = {};
    Tensor x = x0;
    for (std::size_t k = 0; k < cfg.depth(); ++k) {
        Tensor a = relu(conv1d(x, p.conv_filters(k).value, p.conv_bias(k).value));
        PoolResult pr = maxpool1d(a, 2, 2);
        Tensor next = pr.out;
        if (trace) {
            trace->inputs.push_back(std::move(x));
            trace->activations.push_back(std::move(a));
            trace->pools.push_back(std::move(pr));
        }
        x = std::move(next);
    }
    return x;
}

struct AbstractTrace {
    Tensor flat; // B x (T' * L)
    Tensor out;  // B x (w * m), post-ReLU
};

/// B x T' x L -> B x w x m, non-negative.
inline Tensor abstract_features(const TddnParams& p, const Tensor& temporal, AbstractTrace* trace = nullptr) {
    const auto& cfg = p.config;
    const Tensor t = as_batch(temporal);
    const std::size_t B = t.dim(0);
    const std::size_t flat_len = cfg.temporal_length() * cfg.temporal_channels();
    if (t.dim(1) * t.dim(2) != flat_len) {
        throw ShapeError("abstract_features: temporal features " + shape_str(t.shape()) + " do not match config");
    }
    Tensor flat = t.reshaped({B, flat_len});
    Tensor out = relu(linear(flat, p.abstract_weight().value, p.abstract_bias().value));
    Tensor H = out.reshaped({B, cfg.window, cfg.m});
    if (trace) {
        trace->flat = std::move(flat);
        trace->out = std::move(out);
    }
    return H;
}

struct AttentionOutput {
    Tensor lambda; // B x w
    Tensor state;  // B x m
};

struct AttentionTrace {
    Tensor H;       // B x w x m
    Tensor stacked; // (B*w) x 4m
    Tensor hidden;  // (B*w) x d_a, post-tanh
    AttentionOutput out;
};

/// Rows [h_i | h_1 | h_i - h_1 | h_i * h_1], shape (B*w) x 4m.
inline Tensor stack_attention_input(const Tensor& H) {
    const std::size_t B = H.dim(0), w = H.dim(1), m = H.dim(2);
    Tensor S({B * w, 4 * m});
    for (std::size_t b = 0; b < B; ++b) {
        const double* h1 = H.data() + b * w * m;
        for (std::size_t i = 0; i < w; ++i) {
            const double* hi = h1 + i * m;
            double* row = S.data() + (b * w + i) * 4 * m;
            for (std::size_t k = 0; k < m; ++k) {
                row[k] = hi[k];
                row[m + k] = h1[k];
                row[2 * m + k] = hi[k] - h1[k];
                row[3 * m + k] = hi[k] * h1[k];
            }
        }
    }
    return S;
}

inline AttentionOutput attention(const TddnParams& p, const Tensor& abstract, AttentionTrace* trace = nullptr) {
    const auto& cfg = p.config;
    const Tensor H = as_batch(abstract);
    if (H.dim(1) != cfg.window || H.dim(2) != cfg.m) {
        throw ShapeError("attention: H " + shape_str(H.shape()) + " is not w x m");
    }
    const std::size_t B = H.dim(0), w = cfg.window, m = cfg.m, da = cfg.d_a();
    Tensor S = stack_attention_input(H);
    Tensor U = tanh(linear(S, p.attention_weight().value, p.attention_bias().value));
    const Tensor& us = p.context().value;

    AttentionOutput out{Tensor({B, w}), Tensor({B, m})};
    std::vector<double> scores(w);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < w; ++i) {
            const double* u = U.data() + (b * w + i) * da;
            double e = 0.0;
            for (std::size_t k = 0; k < da; ++k) e += u[k] * us[k];
            scores[i] = e;
        }
        std::span<double> lam(out.lambda.data() + b * w, w);
        softmax(scores, lam);
        double* s = out.state.data() + b * m;
        for (std::size_t i = 0; i < w; ++i) {
            const double* hi = H.data() + (b * w + i) * m;
            for (std::size_t k = 0; k < m; ++k) s[k] += lam[i] * hi[k];
        }
    }
    if (trace) {
        trace->H = H;
        trace->stacked = std::move(S);
        trace->hidden = std::move(U);
        trace->out = out;
    }
    return out;
}

struct RegressTrace {
    Tensor in;     // B x m
    Tensor hidden; // B x 8, post-ReLU
};

/// B x m -> B raw predictions in cycles (unclamped).
inline std::vector<double> regress(const TddnParams& p, const Tensor& state, RegressTrace* trace = nullptr) {
    const Tensor in = state.rank() == 1 ? state.reshaped({1, state.dim(0)}) : state;
    Tensor hidden = relu(linear(in, p.reg1_weight().value, p.reg1_bias().value));
    Tensor out = linear(hidden, p.reg2_weight().value, p.reg2_bias().value);
    if (trace) {
        trace->in = in;
        trace->hidden = std::move(hidden);
    }
    return {out.data(), out.data() + out.size()};
}

// ---------------------------------------------------------------------------

/// Everything the backward pass needs from one batched forward pass.
struct ForwardTrace {
    ConvStackTrace conv;
    AbstractTrace abstract;
    AttentionTrace attention;
    RegressTrace regress;
    std::size_t batch = 0;
    bool ready = false;
};

/// B x w x m -> B raw predictions.
inline std::vector<double> forward_batch(const TddnParams& p, const Tensor& windows, ForwardTrace* trace = nullptr) {
    const Tensor x = as_batch(windows);
    ConvStackTrace* ct = trace ? &trace->conv : nullptr;
    AbstractTrace* at = trace ? &trace->abstract : nullptr;
    AttentionTrace* att = trace ? &trace->attention : nullptr;
    RegressTrace* rt = trace ? &trace->regress : nullptr;
    const Tensor temporal = conv_stack(p, x, ct);
    const Tensor H = abstract_features(p, temporal, at);
    const AttentionOutput ao = attention(p, H, att);
    auto pred = regress(p, ao.state, rt);
    if (trace) {
        trace->batch = x.dim(0);
        trace->ready = true;
    }
    return pred;
}

/// Accumulates d(sum_b dpred_b * pred_b)/d(param) into every Param.grad.
/// Consumes the trace; calling again requires a new forward pass.
inline void backward(ForwardTrace& tr, TddnParams& p, std::span<const double> dpred) {
    if (!tr.ready) throw Error("backward called without a completed forward pass");
    const auto& cfg = p.config;
    const std::size_t B = tr.batch, w = cfg.window, m = cfg.m, da = cfg.d_a();
    if (dpred.size() != B) throw ShapeError("backward: upstream gradient has wrong batch size");
    tr.ready = false;

    // regressor
    Tensor dout({B, 1}, std::vector<double>(dpred.begin(), dpred.end()));
    Tensor dhidden;
    linear_backward(tr.regress.hidden, p.reg2_weight().value, dout, p.reg2_weight().grad, p.reg2_bias().grad, &dhidden);
    dhidden = relu_backward(tr.regress.hidden, dhidden);
    Tensor dstate;
    linear_backward(tr.regress.in, p.reg1_weight().value, dhidden, p.reg1_weight().grad, p.reg1_bias().grad, &dstate);

    // attention
    const auto& at = tr.attention;
    const Tensor& H = at.H;
    const Tensor& lam = at.out.lambda;
    const Tensor& U = at.hidden;
    const Tensor& us = p.context().value;
    Tensor& dus = p.context().grad;
    Tensor dH({B, w, m});
    Tensor dU({B * w, da});
    std::vector<double> dlam(w), de(w);
    for (std::size_t b = 0; b < B; ++b) {
        const double* ds = dstate.data() + b * m;
        const double* lb = lam.data() + b * w;
        for (std::size_t i = 0; i < w; ++i) {
            const double* hi = H.data() + (b * w + i) * m;
            double* dhi = dH.data() + (b * w + i) * m;
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                acc += ds[k] * hi[k];
                dhi[k] += lb[i] * ds[k];
            }
            dlam[i] = acc;
        }
        softmax_backward({lb, w}, dlam, de);
        for (std::size_t i = 0; i < w; ++i) {
            const double* u = U.data() + (b * w + i) * da;
            double* du = dU.data() + (b * w + i) * da;
            for (std::size_t k = 0; k < da; ++k) {
                du[k] = de[i] * us[k];
                dus[k] += de[i] * u[k];
            }
        }
    }
    const Tensor da_pre = tanh_backward(U, dU);
    Tensor dS;
    linear_backward(at.stacked, p.attention_weight().value, da_pre, p.attention_weight().grad,
                    p.attention_bias().grad, &dS);
    for (std::size_t b = 0; b < B; ++b) {
        const double* h1 = H.data() + b * w * m;
        double* dh1 = dH.data() + b * w * m;
        for (std::size_t i = 0; i < w; ++i) {
            const double* hi = h1 + i * m;
            double* dhi = dh1 + i * m;
            const double* g = dS.data() + (b * w + i) * 4 * m;
            for (std::size_t k = 0; k < m; ++k) {
                const double g1 = g[k], g2 = g[m + k], g3 = g[2 * m + k], g4 = g[3 * m + k];
                dhi[k] += g1 + g3 + g4 * h1[k];
                dh1[k] += g2 - g3 + g4 * hi[k];
            }
        }
    }

    // abstract layer
    Tensor dabs = relu_backward(tr.abstract.out, dH.reshaped({B, w * m}));
    Tensor dflat;
    linear_backward(tr.abstract.flat, p.abstract_weight().value, dabs, p.abstract_weight().grad,
                    p.abstract_bias().grad, &dflat);

    // conv stack, last stage first
    const auto& ct = tr.conv;
    Tensor dx = dflat.reshaped(ct.pools.back().out.shape());
    for (std::size_t k = cfg.depth(); k-- > 0;) {
        Tensor dact = maxpool1d_backward(ct.pools[k], ct.activations[k].shape(), dx);
        dact = relu_backward(ct.activations[k], dact);
        Tensor dinput;
        conv1d_backward(ct.inputs[k], p.conv_filters(k).value, dact, p.conv_filters(k).grad, p.conv_bias(k).grad,
                        k > 0 ? &dinput : nullptr);
        dx = std::move(dinput);
    }
}

struct Diagnostics {
    Tensor temporal; // T' x L
    Tensor abstract; // w x m
    Tensor lambda;   // w
    Tensor state;    // m
};

struct Prediction {
    double rul = 0.0; // raw, unclamped
    Diagnostics diag;
};

/// Single w x m window through every stage, keeping intermediates.
inline Prediction forward(const TddnParams& p, const Tensor& window) {
    const Tensor x = as_batch(window);
    if (x.dim(0) != 1) throw ShapeError("forward: expected one window");
    Tensor temporal = conv_stack(p, x);
    Tensor H = abstract_features(p, temporal);
    AttentionOutput ao = attention(p, H);
    const double y = regress(p, ao.state)[0];
    Prediction out;
    out.rul = y;
    out.diag.temporal = temporal.reshaped({temporal.dim(1), temporal.dim(2)});
    out.diag.abstract = H.reshaped({H.dim(1), H.dim(2)});
    out.diag.lambda = ao.lambda.reshaped({ao.lambda.dim(1)});
    out.diag.state = ao.state.reshaped({ao.state.dim(1)});
    return out;
}

inline double clamp_rul(double v, const LabelPolicy& policy) {
    return std::clamp(v, 0.0, policy.r_max);
}

/// Raw predictions for windows [first, last) of a prepared engine.
inline std::vector<double> predict_windows(const TddnParams& p, const PreparedEngine& e, std::size_t first,
                                           std::size_t last, std::size_t chunk = 64) {
    const std::size_t w = p.config.window, m = p.config.m;
    if (e.window != w || e.m() != m) throw ShapeError("predict_windows: engine prepared with a different shape");
    std::vector<double> out;
    out.reserve(last - first);
    for (std::size_t j = first; j < last; j += chunk) {
        const std::size_t B = std::min(chunk, last - j);
        Tensor batch({B, w, m});
        for (std::size_t b = 0; b < B; ++b) e.copy_window(j + b, batch.data() + b * w * m);
        auto y = forward_batch(p, batch);
        out.insert(out.end(), y.begin(), y.end());
    }
    return out;
}

/// One clamped prediction per cycle of the trajectory.
inline std::vector<double> predict_engine(const EngineTrajectory& e, const TddnParams& p, const Scaler& scaler,
                                          const SensorSelection& sel, const LabelPolicy& policy) {
    const PreparedEngine prep = prepare_engine(e, scaler, sel, policy, p.config.window);
    auto y = predict_windows(p, prep, 0, prep.length());
    for (auto& v : y) v = clamp_rul(v, policy);
    return y;
}

} // namespace tddn
