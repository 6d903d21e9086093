#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flinfer/errors.hpp"
#include "flinfer/rng.hpp"
#include "flinfer/tensor.hpp"

namespace flinfer {

enum class Activation { kRelu, kTanh, kIdentity };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::kRelu: return "relu";
        case Activation::kTanh: return "tanh";
        case Activation::kIdentity: return "identity";
    }
    return "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::kRelu;
    if (s == "tanh") return Activation::kTanh;
    if (s == "identity") return Activation::kIdentity;
    throw ValidationError("unknown activation: " + s);
}

// Fully connected network. dims = [in, h1, ..., C]; one activation tag per
// layer, the last is normally identity (logits).
struct MlpModel {
    std::vector<std::size_t> dims;
    std::vector<Activation> acts;
    ParameterVector params;

    std::size_t input_dim() const { return dims.front(); }
    std::size_t class_count() const { return dims.back(); }
    std::size_t layer_count() const { return dims.size() - 1; }
};

inline LayoutPtr mlp_layout(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw ValidationError("mlp_layout: need at least one layer");
    std::vector<std::pair<std::string, std::vector<std::size_t>>> spec;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        spec.emplace_back("W" + std::to_string(l), std::vector<std::size_t>{dims[l], dims[l + 1]});
        spec.emplace_back("b" + std::to_string(l), std::vector<std::size_t>{dims[l + 1]});
    }
    return ParamLayout::create(std::move(spec));
}

// Default activations: relu on hidden layers, identity logits.
inline std::vector<Activation> default_activations(std::size_t layers) {
    std::vector<Activation> acts(layers, Activation::kRelu);
    acts.back() = Activation::kIdentity;
    return acts;
}

// Weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline MlpModel make_mlp(std::vector<std::size_t> dims, std::vector<Activation> acts, RngStream rng) {
    if (acts.size() != dims.size() - 1) throw ShapeError("make_mlp: one activation per layer");
    MlpModel m;
    m.dims = std::move(dims);
    m.acts = std::move(acts);
    m.params = ParameterVector(mlp_layout(m.dims));
    for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(m.dims[l]));
        auto w = m.params.view("W" + std::to_string(l));
        for (auto& v : w) v = rng.uniform(-bound, bound);
    }
    return m;
}

inline MlpModel make_mlp(std::vector<std::size_t> dims, RngStream rng) {
    auto acts = default_activations(dims.size() - 1);
    return make_mlp(std::move(dims), std::move(acts), rng);
}

namespace detail {

// out(n,q) = x(n,p) * w(p,q) + b(q)
inline void affine(const Tensor2& x, std::span<const double> w, std::span<const double> b,
                   std::size_t p, std::size_t q, Tensor2& out) {
    out.rows = x.rows;
    out.cols = q;
    out.data.assign(x.rows * q, 0.0);
    for (std::size_t n = 0; n < x.rows; ++n) {
        const double* xr = x.data.data() + n * p;
        double* or_ = out.data.data() + n * q;
        for (std::size_t j = 0; j < q; ++j) or_[j] = b[j];
        for (std::size_t k = 0; k < p; ++k) {
            const double xv = xr[k];
            if (xv == 0.0) continue;
            const double* wr = w.data() + k * q;
            for (std::size_t j = 0; j < q; ++j) or_[j] += xv * wr[j];
        }
    }
}

inline void apply_activation(Activation a, Tensor2& t) {
    switch (a) {
        case Activation::kRelu:
            for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::kTanh:
            for (auto& v : t.data) v = std::tanh(v);
            break;
        case Activation::kIdentity: break;
    }
}

}  // namespace detail

struct MlpTrace {
    // activations[0] is the input batch; activations[l+1] the output of layer l.
    std::vector<Tensor2> activations;
};

inline Tensor2 forward(const MlpModel& model, const Tensor2& batch, MlpTrace* trace = nullptr) {
    if (batch.cols != model.input_dim())
        throw ShapeError("forward: batch cols do not match model input dim");
    Tensor2 cur = batch;
    if (trace) trace->activations = {cur};
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        auto w = model.params.view("W" + std::to_string(l));
        auto b = model.params.view("b" + std::to_string(l));
        Tensor2 next;
        detail::affine(cur, w, b, model.dims[l], model.dims[l + 1], next);
        detail::apply_activation(model.acts[l], next);
        cur = std::move(next);
        if (trace) trace->activations.push_back(cur);
    }
    return cur;
}

// Numerically stable per-row softmax.
inline void softmax_rows(Tensor2& t) {
    for (std::size_t n = 0; n < t.rows; ++n) {
        auto r = t.row(n);
        double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (auto& v : r) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (auto& v : r) v /= sum;
    }
}

// Mean softmax cross-entropy (nats) and its gradient in the params layout.
inline std::pair<double, ParameterVector> loss_and_grad(const MlpModel& model, const Tensor2& batch,
                                                        const std::vector<std::size_t>& labels) {
    if (labels.size() != batch.rows) throw ShapeError("loss_and_grad: one label per batch row");
    const std::size_t C = model.class_count();
    for (std::size_t y : labels)
        if (y >= C) throw ValidationError("loss_and_grad: label out of range");
    if (batch.rows == 0) throw ValidationError("loss_and_grad: empty batch");

    MlpTrace trace;
    Tensor2 logits = forward(model, batch, &trace);
    const std::size_t n = batch.rows;

    double loss = 0.0;
    Tensor2 delta = logits;  // becomes dL/dlogits
    for (std::size_t i = 0; i < n; ++i) {
        auto r = delta.row(i);
        double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (double v : r) sum += std::exp(v - mx);
        double log_z = mx + std::log(sum);
        loss += log_z - r[labels[i]];
        for (std::size_t c = 0; c < C; ++c)
            r[c] = std::exp(r[c] - log_z) - (c == labels[i] ? 1.0 : 0.0);
    }
    loss /= static_cast<double>(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : delta.data) v *= inv_n;

    ParameterVector grad(model.params.layout);
    // Backward through layers, last to first.
    for (std::size_t l = model.layer_count(); l-- > 0;) {
        const Tensor2& in = trace.activations[l];
        const Tensor2& out = trace.activations[l + 1];
        // delta currently holds dL/d(out of layer l); fold in the activation.
        switch (model.acts[l]) {
            case Activation::kRelu:
                for (std::size_t i = 0; i < delta.data.size(); ++i)
                    if (out.data[i] <= 0.0) delta.data[i] = 0.0;
                break;
            case Activation::kTanh:
                for (std::size_t i = 0; i < delta.data.size(); ++i)
                    delta.data[i] *= 1.0 - out.data[i] * out.data[i];
                break;
            case Activation::kIdentity: break;
        }
        const std::size_t p = model.dims[l], q = model.dims[l + 1];
        auto gw = grad.view("W" + std::to_string(l));
        auto gb = grad.view("b" + std::to_string(l));
        for (std::size_t i = 0; i < n; ++i) {
            const double* xr = in.data.data() + i * p;
            const double* dr = delta.data.data() + i * q;
            for (std::size_t j = 0; j < q; ++j) gb[j] += dr[j];
            for (std::size_t k = 0; k < p; ++k) {
                const double xv = xr[k];
                if (xv == 0.0) continue;
                double* gwr = gw.data() + k * q;
                for (std::size_t j = 0; j < q; ++j) gwr[j] += xv * dr[j];
            }
        }
        if (l > 0) {
            auto w = model.params.view("W" + std::to_string(l));
            Tensor2 prev_delta(n, p, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* dr = delta.data.data() + i * q;
                double* pr = prev_delta.data.data() + i * p;
                for (std::size_t k = 0; k < p; ++k) {
                    const double* wr = w.data() + k * q;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < q; ++j) acc += wr[j] * dr[j];
                    pr[k] = acc;
                }
            }
            delta = std::move(prev_delta);
        }
    }
    return {loss, std::move(grad)};
}

inline std::size_t argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

}  // namespace flinfer
