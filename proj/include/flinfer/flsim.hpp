#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"
#include "flinfer/mlp.hpp"
#include "flinfer/optim.hpp"
#include "flinfer/rng.hpp"

namespace flinfer {

struct ClientState {
    std::size_t id = 0;
    Dataset dataset;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.05;

    void validate() const {
        if (dataset.size() == 0) throw ValidationError("ClientState: empty dataset");
        if (batch_size == 0 || batch_size > dataset.size())
            throw ValidationError("ClientState: batch_size must be in [1, dataset size]");
        if (lr < 0.0) throw ValidationError("ClientState: lr must be non-negative");
    }
};

// What the server sees from one client in one round. grad_update follows
// the params_before - params_after convention.
struct UploadRecord {
    std::size_t round = 0;
    std::size_t client_id = 0;
    ParameterVector params;
    ParameterVector grad_update;
    double grad_norm = 0.0;
};

struct LdpConfig {
    double epsilon = 1.0;
    double delta = 1e-5;
    double clip_norm = 1.0;

    void validate() const {
        if (epsilon <= 0.0) throw ValidationError("LdpConfig: epsilon must be positive");
        if (delta <= 0.0 || delta >= 1.0) throw ValidationError("LdpConfig: delta must be in (0, 1)");
        if (clip_norm <= 0.0) throw ValidationError("LdpConfig: clip_norm must be positive");
    }
};

inline double ldp_noise_sigma(const LdpConfig& cfg) {
    return cfg.clip_norm * std::sqrt(2.0 * std::log(1.25 / cfg.delta)) / cfg.epsilon;
}

// Gaussian mechanism on an update vector: project onto the clip_norm ball,
// then add iid noise per coordinate.
inline ParameterVector apply_ldp(const ParameterVector& update, const LdpConfig& cfg,
                                 RngStream rng) {
    cfg.validate();
    ParameterVector out = update;
    double norm = grad_l2_norm(out);
    if (norm > cfg.clip_norm) {
        double scale = cfg.clip_norm / norm;
        for (auto& v : out.values) v *= scale;
    }
    const double sigma = ldp_noise_sigma(cfg);
    for (auto& v : out.values) v += rng.normal(0.0, sigma);
    return out;
}

// local_epochs of mini-batch SGD from the broadcast parameters.
inline UploadRecord local_train(const MlpModel& global, const ClientState& client, RngStream rng) {
    client.validate();
    MlpModel model = global;
    const std::size_t n = client.dataset.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < client.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += client.batch_size) {
            const std::size_t end = std::min(start + client.batch_size, n);
            Tensor2 batch(end - start, client.dataset.features.cols);
            std::vector<std::size_t> labels(end - start);
            for (std::size_t i = start; i < end; ++i) {
                auto src = client.dataset.features.row(order[i]);
                std::copy(src.begin(), src.end(), batch.row(i - start).begin());
                labels[i - start] = client.dataset.labels[order[i]];
            }
            auto [loss, grad] = loss_and_grad(model, batch, labels);
            model.params = sgd_step(model.params, grad, client.lr);
        }
    }

    UploadRecord rec;
    rec.client_id = client.id;
    rec.params = model.params;
    rec.grad_update = global.params - model.params;
    rec.grad_norm = grad_l2_norm(rec.grad_update);
    return rec;
}

// Size-weighted mean of uploaded parameter vectors.
inline ParameterVector fedavg(const std::vector<UploadRecord>& uploads,
                              const std::vector<std::size_t>& sizes) {
    if (uploads.empty()) throw ValidationError("fedavg: no uploads");
    if (sizes.size() != uploads.size()) throw ShapeError("fedavg: one size per upload");
    double total = 0.0;
    for (std::size_t s : sizes) total += static_cast<double>(s);
    if (total <= 0.0) throw ValidationError("fedavg: zero total size");
    ParameterVector out(uploads[0].params.layout);
    for (std::size_t k = 0; k < uploads.size(); ++k) {
        check_same_layout(out, uploads[k].params, "fedavg");
        const double w = static_cast<double>(sizes[k]) / total;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] += w * uploads[k].params.values[i];
    }
    return out;
}

struct RoundRecord {
    std::vector<UploadRecord> uploads;
    ParameterVector global_after;
    std::vector<double> per_class_accuracy;  // empty when no eval set given
};

struct FederationHistory {
    ParameterVector initial;
    std::vector<RoundRecord> rounds;

    std::vector<UploadRecord> client_uploads(std::size_t client_id) const {
        std::vector<UploadRecord> out;
        for (const auto& r : rounds)
            for (const auto& u : r.uploads)
                if (u.client_id == client_id) out.push_back(u);
        return out;
    }
};

// Round observer. Arguments are copies; mutating them cannot touch the
// federation trajectory.
using FederationObserver =
    std::function<void(std::size_t round, std::vector<UploadRecord> uploads,
                       ParameterVector global_after)>;

struct FederationConfig {
    MlpModel initial_model;
    std::vector<ClientState> clients;
    std::size_t rounds = 1;
    std::optional<LdpConfig> ldp;
    const Dataset* eval_set = nullptr;  // optional; enables per-round accuracy
    RngStream rng;
    std::size_t threads = 0;  // 0 = hardware default
};

namespace detail {

template <typename Fn>
inline void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

// Per-class recall: entry c = correct predictions among true-class-c
// samples over the count of class-c samples. The eval set must contain
// every class.
inline std::vector<double> per_class_accuracy(const MlpModel& model, const Dataset& eval_set) {
    const std::size_t C = model.class_count();
    if (eval_set.class_count != C)
        throw ShapeError("per_class_accuracy: eval set class count mismatch");
    std::vector<std::size_t> totals(C, 0), hits(C, 0);
    Tensor2 logits = forward(model, eval_set.features);
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const std::size_t y = eval_set.labels[i];
        totals[y]++;
        if (argmax_row(logits.row(i)) == y) hits[y]++;
    }
    std::vector<double> acc(C);
    for (std::size_t c = 0; c < C; ++c) {
        if (totals[c] == 0)
            throw ValidationError("per_class_accuracy: eval set missing class " + std::to_string(c));
        acc[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    }
    return acc;
}

// T rounds of broadcast / local train / (optional LDP) / FedAvg. Fully
// deterministic given cfg.rng, independent of thread schedule.
inline FederationHistory run_federation(const FederationConfig& cfg,
                                        const std::vector<FederationObserver>& observers = {}) {
    if (cfg.clients.empty()) throw ValidationError("run_federation: need at least one client");
    for (const auto& c : cfg.clients) c.validate();
    if (cfg.ldp) cfg.ldp->validate();

    FederationHistory history;
    history.initial = cfg.initial_model.params;
    MlpModel global = cfg.initial_model;

    std::vector<std::size_t> sizes;
    sizes.reserve(cfg.clients.size());
    for (const auto& c : cfg.clients) sizes.push_back(c.dataset.size());

    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        RoundRecord rec;
        rec.uploads.resize(cfg.clients.size());
        detail::parallel_for(cfg.clients.size(), cfg.threads, [&](std::size_t k) {
            const auto& client = cfg.clients[k];
            auto stream = cfg.rng.child("client", client.id).child("round", round);
            UploadRecord up = local_train(global, client, stream.child("train"));
            up.round = round;
            if (cfg.ldp) {
                ParameterVector noised =
                    apply_ldp(up.grad_update, *cfg.ldp, stream.child("ldp"));
                up.grad_update = std::move(noised);
                up.params = global.params - up.grad_update;
                up.grad_norm = grad_l2_norm(up.grad_update);
            }
            rec.uploads[k] = std::move(up);
        });

        global.params = fedavg(rec.uploads, sizes);
        rec.global_after = global.params;
        if (cfg.eval_set) rec.per_class_accuracy = per_class_accuracy(global, *cfg.eval_set);

        for (const auto& obs : observers) obs(round, rec.uploads, rec.global_after);
        history.rounds.push_back(std::move(rec));
    }
    return history;
}

}  // namespace flinfer
