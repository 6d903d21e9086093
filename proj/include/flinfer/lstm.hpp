#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "flinfer/errors.hpp"
#include "flinfer/rng.hpp"
#include "flinfer/tensor.hpp"

namespace flinfer {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Parameter views for one LSTM cell. Gate order inside the packed 4H axis
// is [input, forget, candidate, output].
struct LstmParams {
    std::size_t input = 0;
    std::size_t hidden = 0;
    std::span<const double> wx;  // input x 4H
    std::span<const double> wh;  // H x 4H
    std::span<const double> b;   // 4H
};

inline LayoutPtr lstm_layout(std::size_t input, std::size_t hidden) {
    return ParamLayout::create({{"lstm.Wx", {input, 4 * hidden}},
                                {"lstm.Wh", {hidden, 4 * hidden}},
                                {"lstm.b", {4 * hidden}}});
}

inline LstmParams lstm_params_view(const ParameterVector& pv, std::size_t input,
                                   std::size_t hidden) {
    LstmParams p;
    p.input = input;
    p.hidden = hidden;
    p.wx = pv.view("lstm.Wx");
    p.wh = pv.view("lstm.Wh");
    p.b = pv.view("lstm.b");
    if (p.wx.size() != input * 4 * hidden || p.wh.size() != hidden * 4 * hidden ||
        p.b.size() != 4 * hidden)
        throw ShapeError("lstm_params_view: widths inconsistent with params");
    return p;
}

// uniform(-1/sqrt(H), 1/sqrt(H)) everywhere, +1 on the forget-gate bias.
inline void init_lstm_params(ParameterVector& pv, std::size_t hidden, RngStream rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto name : {"lstm.Wx", "lstm.Wh"}) {
        auto w = pv.view(name);
        for (auto& v : w) v = rng.uniform(-bound, bound);
    }
    auto b = pv.view("lstm.b");
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
}

struct LstmStepCache {
    std::vector<double> x;
    std::vector<double> h_prev, c_prev;
    std::vector<double> gi, gf, gg, go;  // post-nonlinearity gate values
    std::vector<double> c, h, tanh_c;
};

// One step of the standard gate equations; fills the cache when given.
inline void lstm_cell(const LstmParams& p, std::span<const double> x,
                      std::span<const double> h_prev, std::span<const double> c_prev,
                      std::span<double> h_out, std::span<double> c_out,
                      LstmStepCache* cache = nullptr) {
    const std::size_t H = p.hidden, in = p.input;
    if (x.size() != in || h_prev.size() != H || c_prev.size() != H || h_out.size() != H ||
        c_out.size() != H)
        throw ShapeError("lstm_cell: width mismatch");

    std::vector<double> z(p.b.begin(), p.b.end());
    for (std::size_t k = 0; k < in; ++k) {
        const double xv = x[k];
        if (xv == 0.0) continue;
        const double* wr = p.wx.data() + k * 4 * H;
        for (std::size_t j = 0; j < 4 * H; ++j) z[j] += xv * wr[j];
    }
    for (std::size_t k = 0; k < H; ++k) {
        const double hv = h_prev[k];
        if (hv == 0.0) continue;
        const double* wr = p.wh.data() + k * 4 * H;
        for (std::size_t j = 0; j < 4 * H; ++j) z[j] += hv * wr[j];
    }

    if (cache) {
        cache->x.assign(x.begin(), x.end());
        cache->h_prev.assign(h_prev.begin(), h_prev.end());
        cache->c_prev.assign(c_prev.begin(), c_prev.end());
        cache->gi.resize(H);
        cache->gf.resize(H);
        cache->gg.resize(H);
        cache->go.resize(H);
        cache->c.resize(H);
        cache->h.resize(H);
        cache->tanh_c.resize(H);
    }
    for (std::size_t j = 0; j < H; ++j) {
        double i = sigmoid(z[j]);
        double f = sigmoid(z[H + j]);
        double g = std::tanh(z[2 * H + j]);
        double o = sigmoid(z[3 * H + j]);
        double c = f * c_prev[j] + i * g;
        double tc = std::tanh(c);
        double h = o * tc;
        c_out[j] = c;
        h_out[j] = h;
        if (cache) {
            cache->gi[j] = i;
            cache->gf[j] = f;
            cache->gg[j] = g;
            cache->go[j] = o;
            cache->c[j] = c;
            cache->h[j] = h;
            cache->tanh_c[j] = tc;
        }
    }
}

struct LstmSeqCache {
    std::vector<LstmStepCache> steps;
    std::size_t hidden = 0;
};

// Unroll from zero state over the rows of seq; returns all hidden states
// as a (T x H) tensor.
inline Tensor2 lstm_forward_seq(const LstmParams& p, const Tensor2& seq,
                                LstmSeqCache* cache = nullptr) {
    if (seq.cols != p.input) throw ShapeError("lstm_forward_seq: input width mismatch");
    const std::size_t T = seq.rows, H = p.hidden;
    Tensor2 hs(T, H);
    std::vector<double> h(H, 0.0), c(H, 0.0), h_next(H), c_next(H);
    if (cache) {
        cache->steps.resize(T);
        cache->hidden = H;
    }
    for (std::size_t t = 0; t < T; ++t) {
        lstm_cell(p, seq.row(t), h, c, h_next, c_next, cache ? &cache->steps[t] : nullptr);
        std::copy(h_next.begin(), h_next.end(), hs.row(t).begin());
        h = h_next;
        c = c_next;
    }
    return hs;
}

struct LstmGrads {
    std::span<double> wx, wh, b;
};

// Backprop through time. dh holds dL/dh_t for every step (T x H); gradients
// are accumulated into g (same packing as the forward params).
inline void lstm_backward_seq(const LstmParams& p, const LstmSeqCache& cache, const Tensor2& dh,
                              LstmGrads g, Tensor2* dx = nullptr) {
    const std::size_t T = cache.steps.size(), H = p.hidden, in = p.input;
    if (dh.rows != T || dh.cols != H) throw ShapeError("lstm_backward_seq: dh shape mismatch");
    std::vector<double> dh_carry(H, 0.0), dc_carry(H, 0.0), dz(4 * H);
    if (dx) *dx = Tensor2(T, in, 0.0);
    for (std::size_t t = T; t-- > 0;) {
        const auto& s = cache.steps[t];
        for (std::size_t j = 0; j < H; ++j) {
            double dht = dh.at(t, j) + dh_carry[j];
            double tc = s.tanh_c[j];
            double dc = dc_carry[j] + dht * s.go[j] * (1.0 - tc * tc);
            double do_ = dht * tc;
            double di = dc * s.gg[j];
            double df = dc * s.c_prev[j];
            double dg = dc * s.gi[j];
            dz[j] = di * s.gi[j] * (1.0 - s.gi[j]);
            dz[H + j] = df * s.gf[j] * (1.0 - s.gf[j]);
            dz[2 * H + j] = dg * (1.0 - s.gg[j] * s.gg[j]);
            dz[3 * H + j] = do_ * s.go[j] * (1.0 - s.go[j]);
            dc_carry[j] = dc * s.gf[j];
        }
        for (std::size_t k = 0; k < in; ++k) {
            const double xv = s.x[k];
            double* gwr = g.wx.data() + k * 4 * H;
            if (xv != 0.0)
                for (std::size_t j = 0; j < 4 * H; ++j) gwr[j] += xv * dz[j];
        }
        for (std::size_t k = 0; k < H; ++k) {
            const double hv = s.h_prev[k];
            double* gwr = g.wh.data() + k * 4 * H;
            if (hv != 0.0)
                for (std::size_t j = 0; j < 4 * H; ++j) gwr[j] += hv * dz[j];
        }
        for (std::size_t j = 0; j < 4 * H; ++j) g.b[j] += dz[j];
        for (std::size_t k = 0; k < H; ++k) {
            const double* wr = p.wh.data() + k * 4 * H;
            double acc = 0.0;
            for (std::size_t j = 0; j < 4 * H; ++j) acc += wr[j] * dz[j];
            dh_carry[k] = acc;
        }
        if (dx) {
            for (std::size_t k = 0; k < in; ++k) {
                const double* wr = p.wx.data() + k * 4 * H;
                double acc = 0.0;
                for (std::size_t j = 0; j < 4 * H; ++j) acc += wr[j] * dz[j];
                dx->at(t, k) = acc;
            }
        }
    }
}

}  // namespace flinfer
