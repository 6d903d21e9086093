#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"
#include "flinfer/lstm.hpp"
#include "flinfer/metrics.hpp"
#include "flinfer/optim.hpp"
#include "flinfer/rng.hpp"
#include "flinfer/temporal.hpp"

namespace flinfer {

// Sequence model over temporal matrices: LSTM unrolled over rounds, a
// temporal-attention pool over the hidden states, and a softmax head that
// emits a label distribution.
struct AttackerModel {
    std::size_t input = 0;   // C, the class count
    std::size_t hidden = 0;  // H
    ParameterVector params;
};

inline LayoutPtr attacker_layout(std::size_t input, std::size_t hidden) {
    return ParamLayout::create({{"lstm.Wx", {input, 4 * hidden}},
                                {"lstm.Wh", {hidden, 4 * hidden}},
                                {"lstm.b", {4 * hidden}},
                                {"attn.W", {hidden, hidden}},
                                {"attn.b", {hidden}},
                                {"attn.v", {hidden}},
                                {"head.W", {hidden, input}},
                                {"head.b", {input}}});
}

inline AttackerModel make_attacker(std::size_t input, std::size_t hidden, RngStream rng) {
    AttackerModel m;
    m.input = input;
    m.hidden = hidden;
    m.params = ParameterVector(attacker_layout(input, hidden));
    init_lstm_params(m.params, hidden, rng.child("lstm"));
    double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto name : {"attn.W", "attn.v", "head.W"}) {
        auto w = m.params.view(name);
        for (auto& v : w) v = rng.uniform(-bound, bound);
    }
    return m;
}

inline std::vector<double> softmax(std::vector<double> e) {
    double mx = *std::max_element(e.begin(), e.end());
    double sum = 0.0;
    for (auto& v : e) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : e) v /= sum;
    return e;
}

struct AttendResult {
    std::vector<double> context;  // H
    std::vector<double> weights;  // E, sums to 1
};

struct AttendCache {
    std::vector<std::vector<double>> u;  // tanh(W h_t + b) per step
    std::vector<double> scores;
};

// e_t = v' tanh(W h_t + b); alpha = softmax(e); context = sum alpha_t h_t.
inline AttendResult attend(const Tensor2& hidden_states, std::span<const double> attn_w,
                           std::span<const double> attn_b, std::span<const double> attn_v,
                           AttendCache* cache = nullptr) {
    const std::size_t E = hidden_states.rows, H = hidden_states.cols;
    if (E == 0) throw ValidationError("attend: need at least one hidden state");
    std::vector<double> scores(E);
    if (cache) cache->u.assign(E, std::vector<double>(H));
    for (std::size_t t = 0; t < E; ++t) {
        auto h = hidden_states.row(t);
        double score = 0.0;
        for (std::size_t j = 0; j < H; ++j) {
            double a = attn_b[j];
            for (std::size_t k = 0; k < H; ++k) a += attn_w[k * H + j] * h[k];
            double u = std::tanh(a);
            if (cache) cache->u[t][j] = u;
            score += attn_v[j] * u;
        }
        scores[t] = score;
    }
    AttendResult out;
    out.weights = softmax(scores);
    out.context.assign(H, 0.0);
    for (std::size_t t = 0; t < E; ++t) {
        auto h = hidden_states.row(t);
        for (std::size_t j = 0; j < H; ++j) out.context[j] += out.weights[t] * h[j];
    }
    if (cache) cache->scores = std::move(scores);
    return out;
}

inline AttendResult attend(const Tensor2& hidden_states, const AttackerModel& model,
                           AttendCache* cache = nullptr) {
    return attend(hidden_states, model.params.view("attn.W"), model.params.view("attn.b"),
                  model.params.view("attn.v"), cache);
}

struct AttackerTrace {
    LstmSeqCache lstm;
    Tensor2 hidden_states;
    AttendCache attn;
    AttendResult attended;
    std::vector<double> logits;
    std::vector<double> output;
};

inline LabelDistribution attacker_forward(const AttackerModel& model, const TemporalMatrix& r,
                                          AttackerTrace* trace = nullptr) {
    if (r.classes != model.input) throw ShapeError("attacker_forward: matrix width mismatch");
    if (r.rounds == 0) throw ValidationError("attacker_forward: empty matrix");
    Tensor2 seq(r.rounds, r.classes, r.values);
    auto p = lstm_params_view(model.params, model.input, model.hidden);

    AttackerTrace local;
    AttackerTrace* tr = trace ? trace : &local;
    tr->hidden_states = lstm_forward_seq(p, seq, &tr->lstm);
    tr->attended = attend(tr->hidden_states, model, &tr->attn);

    auto head_w = model.params.view("head.W");
    auto head_b = model.params.view("head.b");
    tr->logits.assign(head_b.begin(), head_b.end());
    for (std::size_t k = 0; k < model.hidden; ++k) {
        const double cv = tr->attended.context[k];
        if (cv == 0.0) continue;
        for (std::size_t c = 0; c < model.input; ++c) tr->logits[c] += cv * head_w[k * model.input + c];
    }
    tr->output = softmax(tr->logits);
    return LabelDistribution{tr->output};
}

// Gradient of a scalar loss wrt all model parameters, given dL/dlogits.
inline void attacker_backward(const AttackerModel& model, const TemporalMatrix& r,
                              const AttackerTrace& trace, const std::vector<double>& dlogits,
                              ParameterVector& grad) {
    const std::size_t H = model.hidden, C = model.input, E = r.rounds;
    auto head_w = model.params.view("head.W");
    auto g_head_w = grad.view("head.W");
    auto g_head_b = grad.view("head.b");

    std::vector<double> dcontext(H, 0.0);
    for (std::size_t c = 0; c < C; ++c) g_head_b[c] += dlogits[c];
    for (std::size_t k = 0; k < H; ++k) {
        const double cv = trace.attended.context[k];
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            g_head_w[k * C + c] += cv * dlogits[c];
            acc += head_w[k * C + c] * dlogits[c];
        }
        dcontext[k] = acc;
    }

    // Attention backward: context = sum_t alpha_t h_t.
    const auto& alpha = trace.attended.weights;
    std::vector<double> dalpha(E, 0.0);
    Tensor2 dh(E, H, 0.0);
    for (std::size_t t = 0; t < E; ++t) {
        auto h = trace.hidden_states.row(t);
        double acc = 0.0;
        for (std::size_t j = 0; j < H; ++j) {
            acc += dcontext[j] * h[j];
            dh.at(t, j) += alpha[t] * dcontext[j];
        }
        dalpha[t] = acc;
    }
    // softmax jacobian: de_t = alpha_t (dalpha_t - sum_k alpha_k dalpha_k)
    double mean_term = 0.0;
    for (std::size_t t = 0; t < E; ++t) mean_term += alpha[t] * dalpha[t];
    std::vector<double> dscore(E);
    for (std::size_t t = 0; t < E; ++t) dscore[t] = alpha[t] * (dalpha[t] - mean_term);

    auto attn_w = model.params.view("attn.W");
    auto attn_v = model.params.view("attn.v");
    auto g_attn_w = grad.view("attn.W");
    auto g_attn_b = grad.view("attn.b");
    auto g_attn_v = grad.view("attn.v");
    for (std::size_t t = 0; t < E; ++t) {
        const auto& u = trace.attn.u[t];
        auto h = trace.hidden_states.row(t);
        for (std::size_t j = 0; j < H; ++j) {
            g_attn_v[j] += dscore[t] * u[j];
            const double da = dscore[t] * attn_v[j] * (1.0 - u[j] * u[j]);
            if (da == 0.0) continue;
            g_attn_b[j] += da;
            for (std::size_t k = 0; k < H; ++k) {
                g_attn_w[k * H + j] += da * h[k];
                dh.at(t, k) += da * attn_w[k * H + j];
            }
        }
    }

    auto p = lstm_params_view(model.params, C, H);
    LstmGrads lg{grad.view("lstm.Wx"), grad.view("lstm.Wh"), grad.view("lstm.b")};
    lstm_backward_seq(p, trace.lstm, dh, lg);
}

enum class AttackLoss { kKl, kMse };

inline const char* to_string(AttackLoss l) { return l == AttackLoss::kKl ? "kl" : "mse"; }
inline AttackLoss attack_loss_from_string(const std::string& s) {
    if (s == "kl") return AttackLoss::kKl;
    if (s == "mse") return AttackLoss::kMse;
    throw ValidationError("unknown attacker loss: " + s);
}

// Loss value plus dL/dlogits for one (prediction, target) pair.
inline double attack_loss_and_dlogits(AttackLoss loss, const std::vector<double>& output,
                                      const LabelDistribution& target,
                                      std::vector<double>& dlogits) {
    const std::size_t C = output.size();
    dlogits.assign(C, 0.0);
    if (loss == AttackLoss::kKl) {
        // KL(target || output); grad wrt logits is output - target.
        double value = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            if (target.p[c] > 0.0) value += target.p[c] * std::log(target.p[c] / output[c]);
            dlogits[c] = output[c] - target.p[c];
        }
        return value;
    }
    double value = 0.0;
    std::vector<double> dout(C);
    for (std::size_t c = 0; c < C; ++c) {
        const double diff = output[c] - target.p[c];
        value += diff * diff / static_cast<double>(C);
        dout[c] = 2.0 * diff / static_cast<double>(C);
    }
    // softmax jacobian
    double dot = 0.0;
    for (std::size_t c = 0; c < C; ++c) dot += dout[c] * output[c];
    for (std::size_t c = 0; c < C; ++c) dlogits[c] = output[c] * (dout[c] - dot);
    return value;
}

struct AttackTrainConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 200;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    AttackLoss loss = AttackLoss::kKl;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;

    void validate() const {
        if (lr <= 0.0) throw ValidationError("AttackTrainConfig: lr must be positive");
        if (val_fraction <= 0.0 || val_fraction > 0.5)
            throw ValidationError("AttackTrainConfig: val_fraction must be in (0, 0.5]");
        if (batch_size == 0) throw ValidationError("AttackTrainConfig: batch_size must be >= 1");
    }
};

struct TrainCurvePoint {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct AttackTrainResult {
    AttackerModel model;  // best-validation parameters
    std::vector<TrainCurvePoint> curve;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
};

using TrainingPair = std::pair<TemporalMatrix, LabelDistribution>;

// Adam on mini-batches of (temporal matrix, distribution) pairs; keeps the
// parameters with the lowest validation loss.
inline AttackTrainResult train_attacker(const std::vector<TrainingPair>& pairs,
                                        const AttackTrainConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) throw ValidationError("train_attacker: no training pairs");
    const std::size_t C = pairs[0].first.classes;
    const std::size_t E = pairs[0].first.rounds;
    if (pairs.size() < 2 * C)
        throw ValidationError("train_attacker: need at least 2*C training pairs");
    for (const auto& [m, dist] : pairs) {
        if (m.classes != C || m.rounds != E)
            throw ShapeError("train_attacker: all matrices must share one shape");
        if (dist.p.size() != C) throw ShapeError("train_attacker: label width mismatch");
    }

    RngStream rng(cfg.seed, 0);
    AttackerModel model = make_attacker(C, cfg.hidden, rng.child("init"));

    // Deterministic split: shuffled indices, first chunk validates.
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto split_rng = rng.child("split");
    split_rng.shuffle(order);
    const std::size_t val_count =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                     cfg.val_fraction * static_cast<double>(pairs.size()))));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + val_count);
    std::vector<std::size_t> train_idx(order.begin() + val_count, order.end());
    if (train_idx.empty()) throw ValidationError("train_attacker: validation split ate all pairs");

    AdamState adam(model.params.layout);
    AttackTrainResult result;
    result.best_val_loss = 1e300;
    auto epoch_rng = rng.child("epochs");

    std::vector<double> dlogits;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        epoch_rng.shuffle(train_idx);
        double train_loss = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, train_idx.size());
            ParameterVector grad(model.params.layout);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& [matrix, target] = pairs[train_idx[i]];
                AttackerTrace trace;
                attacker_forward(model, matrix, &trace);
                batch_loss += attack_loss_and_dlogits(cfg.loss, trace.output, target, dlogits);
                attacker_backward(model, matrix, trace, dlogits, grad);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (auto& v : grad.values) v *= inv;
            model.params = adam_step(adam, model.params, grad, cfg.lr);
            train_loss += batch_loss;
        }
        train_loss /= static_cast<double>(train_idx.size());

        double val_loss = 0.0;
        for (std::size_t i : val_idx) {
            const auto& [matrix, target] = pairs[i];
            AttackerTrace trace;
            attacker_forward(model, matrix, &trace);
            val_loss += attack_loss_and_dlogits(cfg.loss, trace.output, target, dlogits);
        }
        val_loss /= static_cast<double>(val_idx.size());

        result.curve.push_back({epoch, train_loss, val_loss});
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    if (result.best_epoch == 0) result.model = model;
    return result;
}

inline LabelDistribution infer_distribution(const AttackerModel& model,
                                            const TemporalMatrix& victim_matrix) {
    return attacker_forward(model, victim_matrix);
}

// Checkpoint format: one JSON header line (widths, layout, layout hash)
// followed by the flat little-endian 64-bit parameter array.
inline void save_attacker(const AttackerModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("attacker: cannot write " + path);
    nlohmann::json header;
    header["format"] = "flinfer-attacker-v1";
    header["input"] = model.input;
    header["hidden"] = model.hidden;
    header["layout_hash"] = model.params.layout->hash();
    header["param_count"] = model.params.size();
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& e : model.params.layout->entries())
        layout.push_back({{"name", e.name}, {"shape", e.shape}});
    header["layout"] = layout;
    out << header.dump() << '\n';
    for (double d : model.params.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(buf), 8);
    }
}

inline AttackerModel load_attacker(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("attacker: cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw FormatError("attacker: empty checkpoint " + path);
    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "flinfer-attacker-v1")
        throw FormatError("attacker: bad checkpoint header in " + path);
    AttackerModel model;
    model.input = header.at("input").get<std::size_t>();
    model.hidden = header.at("hidden").get<std::size_t>();
    model.params = ParameterVector(attacker_layout(model.input, model.hidden));
    if (model.params.layout->hash() != header.at("layout_hash").get<std::uint64_t>())
        throw FormatError("attacker: layout hash mismatch in " + path);
    if (model.params.size() != header.at("param_count").get<std::size_t>())
        throw FormatError("attacker: parameter count mismatch in " + path);
    for (auto& d : model.params.values) {
        unsigned char buf[8];
        if (!in.read(reinterpret_cast<char*>(buf), 8))
            throw FormatError("attacker: truncated checkpoint " + path);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
    return model;
}

}  // namespace flinfer
