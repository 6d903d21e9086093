#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"
#include "flinfer/flsim.hpp"
#include "flinfer/rng.hpp"
#include "flinfer/temporal.hpp"

namespace flinfer {

// Regime mix for one cluster. The quantity c_f values and Dirichlet alphas
// cycle over their lists as specs are generated.
struct ClusterPlan {
    std::size_t iid_count = 0;
    std::size_t quantity_count = 0;
    std::size_t dirichlet_count = 0;
    double iid_delta = 0.1;
    std::vector<std::size_t> quantity_cf = {3};
    std::vector<double> dirichlet_alpha = {0.5, 1.0, 2.0};
    double size_jitter = 0.2;  // sizes uniform in [1-j, 1+j] x est_size
    std::size_t id_offset = 0;
};

// Build cluster specs around the estimated size. Each spec's dataset is
// realized once to pin its true (empirical) distribution; re-sampling with
// the stored seed reproduces the same dataset.
inline std::vector<VirtualClientSpec> build_cluster(const Dataset& aux_pool, std::size_t est_size,
                                                    const ClusterPlan& plan, RngStream rng) {
    if (plan.iid_count + plan.quantity_count + plan.dirichlet_count == 0)
        throw ValidationError("build_cluster: empty plan");
    if (!plan.quantity_cf.empty())
        for (std::size_t cf : plan.quantity_cf)
            if (cf < 1 || cf > aux_pool.class_count)
                throw ValidationError("build_cluster: c_f outside [1, C]");

    std::vector<VirtualClientSpec> specs;
    std::size_t id = plan.id_offset;
    auto add_spec = [&](Regime regime) {
        VirtualClientSpec spec;
        spec.id = id;
        spec.regime = regime;
        auto stream = rng.child("spec", id);
        double jitter = stream.uniform(1.0 - plan.size_jitter, 1.0 + plan.size_jitter);
        spec.size = std::max<std::size_t>(
            aux_pool.class_count,
            static_cast<std::size_t>(std::llround(jitter * static_cast<double>(est_size))));
        spec.seed = stream.next_u64();
        Dataset ds = sample_auxiliary(aux_pool, spec);
        spec.true_distribution = ds.empirical_distribution();
        specs.push_back(std::move(spec));
        ++id;
    };

    for (std::size_t i = 0; i < plan.iid_count; ++i) add_spec(IidFluctRegime{plan.iid_delta});
    for (std::size_t i = 0; i < plan.quantity_count; ++i)
        add_spec(QuantityRegime{plan.quantity_cf[i % plan.quantity_cf.size()]});
    for (std::size_t i = 0; i < plan.dirichlet_count; ++i)
        add_spec(DirichletRegime{plan.dirichlet_alpha[i % plan.dirichlet_alpha.size()]});
    return specs;
}

struct ClusterRunConfig {
    std::size_t local_epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.05;
    std::optional<LdpConfig> mirror_ldp;  // evaluate each member as if its upload were noised
    std::size_t threads = 0;
};

// Per-round worker shared by the replay and live-observer paths: the member
// copies the aggregated global, trains locally, and its post-training model
// (optionally noised like a real upload) is scored on the eval set.
class ClusterRecorder {
  public:
    ClusterRecorder(const std::vector<VirtualClientSpec>& specs, const Dataset& aux_pool,
                    const MlpModel& model_shape, const Dataset& eval_set, ClusterRunConfig cfg,
                    RngStream rng)
        : specs_(specs), model_shape_(model_shape), eval_set_(eval_set), cfg_(cfg), rng_(rng) {
        clients_.reserve(specs.size());
        matrices_.resize(specs.size());
        rows_.resize(specs.size());
        for (const auto& spec : specs) {
            ClientState c;
            c.id = spec.id;
            c.local_epochs = cfg_.local_epochs;
            c.batch_size = cfg_.batch_size;
            c.lr = cfg_.lr;
            c.dataset = sample_auxiliary(aux_pool, spec);
            c.batch_size = std::min(c.batch_size, c.dataset.size());
            clients_.push_back(std::move(c));
        }
    }

    void on_round(std::size_t round, const ParameterVector& global_after) {
        detail::parallel_for(clients_.size(), cfg_.threads, [&](std::size_t k) {
            MlpModel model = model_shape_;
            model.params = global_after;
            auto stream = rng_.child("vclient", specs_[k].id).child("round", round);
            UploadRecord up = local_train(model, clients_[k], stream.child("train"));
            MlpModel evaluated = model_shape_;
            if (cfg_.mirror_ldp) {
                ParameterVector noised =
                    apply_ldp(up.grad_update, *cfg_.mirror_ldp, stream.child("ldp"));
                evaluated.params = global_after - noised;
            } else {
                evaluated.params = up.params;
            }
            rows_[k] = per_class_accuracy(evaluated, eval_set_);
        });
        for (std::size_t k = 0; k < clients_.size(); ++k) matrices_[k].append_row(rows_[k]);
    }

    FederationObserver observer() {
        return [this](std::size_t round, std::vector<UploadRecord>, ParameterVector global_after) {
            on_round(round, global_after);
        };
    }

    const std::vector<TemporalMatrix>& matrices() const { return matrices_; }
    std::map<std::size_t, TemporalMatrix> matrices_by_id() const {
        std::map<std::size_t, TemporalMatrix> out;
        for (std::size_t k = 0; k < specs_.size(); ++k) out[specs_[k].id] = matrices_[k];
        return out;
    }

  private:
    std::vector<VirtualClientSpec> specs_;
    MlpModel model_shape_;
    Dataset eval_set_;
    ClusterRunConfig cfg_;
    RngStream rng_;
    std::vector<ClientState> clients_;
    std::vector<TemporalMatrix> matrices_;
    std::vector<std::vector<double>> rows_;
};

// Replay the cluster against recorded per-round globals; the federation is
// untouched by construction.
inline std::map<std::size_t, TemporalMatrix> run_cluster(
    const std::vector<VirtualClientSpec>& cluster, const FederationHistory& history,
    const Dataset& aux_pool, const MlpModel& model_shape, const Dataset& eval_set,
    std::size_t rounds, const ClusterRunConfig& cfg, RngStream rng) {
    if (history.rounds.size() < rounds)
        throw ValidationError("run_cluster: federation ran fewer rounds than requested");
    ClusterRecorder recorder(cluster, aux_pool, model_shape, eval_set, cfg, rng);
    for (std::size_t t = 0; t < rounds; ++t)
        recorder.on_round(t + 1, history.rounds[t].global_after);
    return recorder.matrices_by_id();
}

// Row t = per-class accuracy of the model rebuilt from the victim's round-t
// upload.
inline TemporalMatrix record_victim(const std::vector<UploadRecord>& victim_uploads,
                                    const MlpModel& model_shape, const Dataset& eval_set) {
    TemporalMatrix m;
    std::size_t expected_round = 1;
    for (const auto& up : victim_uploads) {
        if (up.round != expected_round)
            throw ValidationError("record_victim: missing upload for round " +
                                  std::to_string(expected_round));
        MlpModel model = model_shape;
        model.params = up.params;
        m.append_row(per_class_accuracy(model, eval_set));
        expected_round++;
    }
    return m;
}

}  // namespace flinfer
