#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flinfer/attacker.hpp"
#include "flinfer/config.hpp"
#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"
#include "flinfer/flsim.hpp"
#include "flinfer/idx.hpp"
#include "flinfer/metrics.hpp"
#include "flinfer/sizeest.hpp"
#include "flinfer/vclients.hpp"

namespace flinfer {

inline LabelDistribution baseline_uniform(std::size_t C) {
    if (C < 2) throw ValidationError("baseline_uniform: need at least two classes");
    return LabelDistribution::uniform(C);
}

// Output-layer baseline: classes whose bias rose during local training (a
// negative before-minus-after delta) collect score; normalize to a simplex.
// Uniform when nothing moved.
inline LabelDistribution baseline_lastlayer(const std::vector<UploadRecord>& victim_uploads,
                                            const MlpModel& model_shape) {
    const std::size_t C = model_shape.class_count();
    const std::string bias_name = "b" + std::to_string(model_shape.layer_count() - 1);
    std::vector<double> score(C, 0.0);
    for (const auto& up : victim_uploads) {
        auto delta_bias = up.grad_update.view(bias_name);
        for (std::size_t c = 0; c < C; ++c) score[c] += std::max(0.0, -delta_bias[c]);
    }
    double total = 0.0;
    for (double s : score) total += s;
    if (total <= 0.0) return LabelDistribution::uniform(C);
    for (auto& s : score) s /= total;
    return LabelDistribution{score};
}

struct BaselineResult {
    LabelDistribution distribution;
    DistanceReport distances;
};

struct HeldoutRegimeStats {
    std::size_t count = 0;
    double mean_l1 = 0.0;
    double uniform_mean_l1 = 0.0;
    double argmax_match = 0.0;
    double support_mass = 0.0;  // mean predicted mass on the true support
};

struct ExperimentReport {
    FLRunConfig config;
    std::uint64_t config_hash = 0;

    double target_norm = 0.0;
    std::size_t estimated_size = 0;
    std::size_t search_iterations = 0;
    bool oscillation_fallback = false;
    bool search_failed = false;

    LabelDistribution victim_true;
    LabelDistribution victim_predicted;
    DistanceReport victim_distances;
    BaselineResult uniform_baseline;
    BaselineResult lastlayer_baseline;
    double victim_accuracy = 0.0;  // mean global accuracy over the last 5 rounds

    std::size_t heldout_count = 0;
    double heldout_mean_l1 = 0.0;
    double heldout_uniform_mean_l1 = 0.0;
    std::map<std::string, HeldoutRegimeStats> heldout_by_regime;

    std::size_t attacker_best_epoch = 0;
    double attacker_best_val_loss = 0.0;
    double wall_time_s = 0.0;
};

namespace expdetail {

inline json distances_to_json(const DistanceReport& d) {
    return {{"wasserstein", d.wasserstein}, {"kl", d.kl}, {"js", d.js}, {"l1", d.l1}};
}

inline json baseline_to_json(const BaselineResult& b) {
    return {{"distribution", b.distribution.p}, {"distances", distances_to_json(b.distances)}};
}

}  // namespace expdetail

inline json report_to_json(const ExperimentReport& r) {
    json doc;
    doc["config"] = config_to_json(r.config);
    doc["config_hash"] = r.config_hash;
    doc["size_estimate"] = {{"target_norm", r.target_norm},
                            {"estimated", r.estimated_size},
                            {"iterations", r.search_iterations},
                            {"oscillation_fallback", r.oscillation_fallback},
                            {"search_failed", r.search_failed}};
    doc["victim"] = {{"true_distribution", r.victim_true.p},
                     {"predicted_distribution", r.victim_predicted.p},
                     {"distances", expdetail::distances_to_json(r.victim_distances)},
                     {"accuracy", r.victim_accuracy}};
    doc["baselines"] = {{"uniform", expdetail::baseline_to_json(r.uniform_baseline)},
                        {"lastlayer", expdetail::baseline_to_json(r.lastlayer_baseline)}};
    json by_regime;
    for (const auto& [name, stats] : r.heldout_by_regime) {
        by_regime[name] = {{"count", stats.count},
                           {"mean_l1", stats.mean_l1},
                           {"uniform_mean_l1", stats.uniform_mean_l1},
                           {"argmax_match", stats.argmax_match},
                           {"support_mass", stats.support_mass}};
    }
    doc["heldout"] = {{"count", r.heldout_count},
                      {"mean_l1", r.heldout_mean_l1},
                      {"uniform_mean_l1", r.heldout_uniform_mean_l1},
                      {"by_regime", by_regime}};
    doc["attacker"] = {{"best_epoch", r.attacker_best_epoch},
                       {"best_val_loss", r.attacker_best_val_loss}};
    doc["wall_time_s"] = r.wall_time_s;
    return doc;
}

struct RunOptions {
    std::string out_dir;       // empty = in-memory only
    std::size_t threads = 0;   // 0 = hardware default
    bool write_temporal = true;
};

struct PoolSplit {
    Dataset client_pool;
    Dataset aux_pool;
    Dataset eval_set;
};

// eval gets per_class samples of every class; the rest splits evenly into
// the client-side and server-side (auxiliary) pools.
inline PoolSplit split_pools(const Dataset& pool, std::size_t eval_per_class, RngStream rng) {
    const std::size_t C = pool.class_count;
    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);
    std::vector<std::size_t> eval_idx, client_idx, aux_idx;
    for (std::size_t c = 0; c < C; ++c) {
        auto& members = by_class[c];
        if (members.size() < eval_per_class + 2)
            throw CapacityError("split_pools: class " + std::to_string(c) + " too small");
        rng.child("class", c).shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i < eval_per_class)
                eval_idx.push_back(members[i]);
            else if ((i - eval_per_class) % 2 == 0)
                client_idx.push_back(members[i]);
            else
                aux_idx.push_back(members[i]);
        }
    }
    return {pool.subset(client_idx), pool.subset(aux_idx), pool.subset(eval_idx)};
}

inline Dataset load_source(const DatasetSource& source, RngStream rng) {
    if (const auto* s = std::get_if<SyntheticSource>(&source))
        return gen_synthetic(s->classes, s->dim, s->per_class_pool, s->sep, rng);
    const auto& s = std::get<IdxSource>(source);
    return load_idx(s.images, s.labels);
}

inline Dataset sample_regime(const Dataset& pool, std::size_t size, const Regime& regime,
                             RngStream rng) {
    VirtualClientSpec spec;
    spec.size = size;
    spec.regime = regime;
    spec.seed = rng.next_u64();
    return sample_auxiliary(pool, spec);
}

namespace expdetail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("[stage:") + name + "] " + e.what());
    }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

inline std::vector<std::size_t> regime_counts(const ClusterSettings& c, std::size_t total) {
    double sum = c.regime_weights[0] + c.regime_weights[1] + c.regime_weights[2];
    if (sum <= 0.0) throw ValidationError("cluster: regime weights sum to zero");
    std::vector<double> props = {c.regime_weights[0] / sum, c.regime_weights[1] / sum,
                                 c.regime_weights[2] / sum};
    return detail::counts_from_proportions(props, total);
}

inline ClusterPlan make_plan(const ClusterSettings& c, std::size_t total, std::size_t id_offset) {
    auto counts = regime_counts(c, total);
    ClusterPlan plan;
    plan.iid_count = counts[0];
    plan.quantity_count = counts[1];
    plan.dirichlet_count = counts[2];
    plan.iid_delta = c.iid_delta;
    plan.quantity_cf = c.quantity_cf;
    plan.dirichlet_alpha = c.dirichlet_alpha;
    plan.size_jitter = c.size_jitter;
    plan.id_offset = id_offset;
    return plan;
}

inline std::string history_to_jsonl(const FederationHistory& history) {
    std::string out;
    for (std::size_t t = 0; t < history.rounds.size(); ++t) {
        const auto& round = history.rounds[t];
        for (const auto& up : round.uploads) {
            json rec = {{"round", up.round}, {"client", up.client_id}, {"grad_norm", up.grad_norm}};
            out += rec.dump();
            out += '\n';
        }
        if (!round.per_class_accuracy.empty()) {
            json rec = {{"round", t + 1}, {"accuracy", round.per_class_accuracy}};
            out += rec.dump();
            out += '\n';
        }
    }
    return out;
}

inline json trace_to_json(const std::vector<SearchStep>& trace) {
    json arr = json::array();
    for (const auto& s : trace)
        arr.push_back({{"iteration", s.iteration},
                       {"size", s.size},
                       {"norm", s.norm},
                       {"decision", s.decision}});
    return arr;
}

}  // namespace expdetail

// Per-class line-plot data behind the true-vs-predicted comparison figures.
inline std::string dist_lines_csv(const ExperimentReport& report) {
    std::string csv = "class,true,predicted,uniform,lastlayer\n";
    char buf[128];
    for (std::size_t c = 0; c < report.victim_true.p.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", c, report.victim_true.p[c],
                      report.victim_predicted.p[c], report.uniform_baseline.distribution.p[c],
                      report.lastlayer_baseline.distribution.p[c]);
        csv += buf;
    }
    return csv;
}

// The full pipeline: federation with the victim, size estimation from its
// early-round norms, cluster construction and temporal recording, attacker
// training, inference, and metrics against the truth and both baselines.
inline ExperimentReport run_experiment(const FLRunConfig& cfg, const RunOptions& opts = {}) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();
    RngStream root(cfg.seed, 0);

    const bool persist = !opts.out_dir.empty();
    fs::path out(opts.out_dir);
    if (persist) fs::create_directories(out);

    ExperimentReport report;
    report.config = cfg;
    report.config_hash = config_hash(cfg);

    // -- data --------------------------------------------------------------
    PoolSplit pools = expdetail::stage("data", [&] {
        Dataset pool = load_source(cfg.dataset, root.child("pool"));
        pool.validate();
        return split_pools(pool, cfg.eval.per_class, root.child("split"));
    });
    const std::size_t C = pools.client_pool.class_count;
    const std::size_t input_dim = pools.client_pool.features.cols;

    // -- federation ----------------------------------------------------------
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t h : cfg.model_hidden) dims.push_back(h);
    dims.push_back(C);
    MlpModel initial_model = make_mlp(dims, root.child("model-init"));

    FederationHistory history = expdetail::stage("federation", [&] {
        FederationConfig fed;
        fed.initial_model = initial_model;
        fed.rounds = cfg.rounds;
        fed.rng = root.child("federation");
        fed.threads = opts.threads;
        fed.eval_set = &pools.eval_set;
        if (cfg.ldp) fed.ldp = cfg.ldp->mechanism;

        ClientState victim;
        victim.id = 0;
        victim.local_epochs = cfg.local.epochs;
        victim.batch_size = cfg.local.batch_size;
        victim.lr = cfg.local.lr;
        victim.dataset = sample_regime(pools.client_pool, cfg.victim.size, cfg.victim.regime,
                                       root.child("victim-data"));
        victim.batch_size = std::min(victim.batch_size, victim.dataset.size());
        report.victim_true = victim.dataset.empirical_distribution();
        fed.clients.push_back(std::move(victim));

        for (std::size_t k = 1; k < cfg.clients; ++k) {
            ClientState c;
            c.id = k;
            c.local_epochs = cfg.local.epochs;
            c.batch_size = cfg.local.batch_size;
            c.lr = cfg.local.lr;
            c.dataset = sample_regime(pools.client_pool, cfg.victim.size, IidFluctRegime{0.1},
                                      root.child("bg-client", k));
            c.batch_size = std::min(c.batch_size, c.dataset.size());
            fed.clients.push_back(std::move(c));
        }
        return run_federation(fed);
    });
    {
        double acc = 0.0;
        const std::size_t tail = std::min<std::size_t>(5, history.rounds.size());
        for (std::size_t t = history.rounds.size() - tail; t < history.rounds.size(); ++t) {
            const auto& row = history.rounds[t].per_class_accuracy;
            double mean = 0.0;
            for (double v : row) mean += v;
            acc += mean / static_cast<double>(row.size());
        }
        report.victim_accuracy = acc / static_cast<double>(tail);
    }
    if (persist) expdetail::write_text(out / "history.jsonl", expdetail::history_to_jsonl(history));

    auto victim_uploads = history.client_uploads(0);

    // -- size estimation -----------------------------------------------------
    SizeSearchConfig search_cfg = cfg.sizeest;
    if (cfg.ldp && cfg.sizeest_mirror_ldp) search_cfg.mirror_ldp = cfg.ldp->mechanism;
    expdetail::stage("sizeest", [&] {
        double target = 0.0;
        const std::size_t window = std::min<std::size_t>(search_cfg.probe_rounds,
                                                         victim_uploads.size());
        for (std::size_t t = 0; t < window; ++t) target += victim_uploads[t].grad_norm;
        target /= static_cast<double>(window);
        report.target_norm = target;
        try {
            SizeEstimate est = estimate_size(target, pools.aux_pool, initial_model, search_cfg,
                                             root.child("sizeest"));
            report.estimated_size = est.size;
            report.search_iterations = est.trace.size();
            report.oscillation_fallback = est.oscillation_fallback;
            if (persist)
                expdetail::write_text(out / "search_trace.json",
                                      expdetail::trace_to_json(est.trace).dump(2) + "\n");
        } catch (const SearchError& e) {
            report.search_failed = true;
            report.estimated_size = e.best_size > 0 ? e.best_size : search_cfg.s_init;
            report.search_iterations = search_cfg.max_iters;
        }
        return 0;
    });

    // -- cluster -------------------------------------------------------------
    auto cluster_rng = root.child("cluster");
    std::vector<VirtualClientSpec> train_specs, test_specs;
    std::map<std::size_t, TemporalMatrix> matrices;
    expdetail::stage("cluster", [&] {
        ClusterPlan train_plan = expdetail::make_plan(cfg.cluster, cfg.cluster.train, 0);
        ClusterPlan test_plan =
            expdetail::make_plan(cfg.cluster, cfg.cluster.test, cfg.cluster.train);
        train_specs = build_cluster(pools.aux_pool, report.estimated_size, train_plan,
                                    cluster_rng.child("train"));
        test_specs = build_cluster(pools.aux_pool, report.estimated_size, test_plan,
                                   cluster_rng.child("test"));

        std::vector<VirtualClientSpec> all = train_specs;
        all.insert(all.end(), test_specs.begin(), test_specs.end());
        ClusterRunConfig run_cfg;
        run_cfg.local_epochs = cfg.local.epochs;
        run_cfg.batch_size = cfg.local.batch_size;
        run_cfg.lr = cfg.local.lr;
        run_cfg.threads = opts.threads;
        if (cfg.ldp && cfg.ldp->mirror) run_cfg.mirror_ldp = cfg.ldp->mechanism;
        matrices = run_cluster(all, history, pools.aux_pool, initial_model, pools.eval_set,
                               cfg.rounds, run_cfg, cluster_rng.child("run"));
        return 0;
    });

    if (persist && opts.write_temporal) {
        fs::create_directories(out / "temporal");
        json labels;
        for (const auto& spec : train_specs) labels[std::to_string(spec.id)] = spec.true_distribution.p;
        for (const auto& spec : test_specs) labels[std::to_string(spec.id)] = spec.true_distribution.p;
        expdetail::write_text(out / "labels.json", labels.dump(2) + "\n");
        for (const auto& [id, matrix] : matrices)
            save_temporal_csv(matrix, (out / "temporal" / ("client_" + std::to_string(id) + ".csv")).string());
    }

    // -- attacker ------------------------------------------------------------
    AttackTrainResult trained = expdetail::stage("attacker", [&] {
        std::vector<TrainingPair> pairs;
        pairs.reserve(train_specs.size());
        for (const auto& spec : train_specs)
            pairs.emplace_back(matrices.at(spec.id), spec.true_distribution);
        AttackTrainConfig train_cfg = cfg.attacker;
        train_cfg.seed = root.child("attacker").next_u64();
        return train_attacker(pairs, train_cfg);
    });
    report.attacker_best_epoch = trained.best_epoch;
    report.attacker_best_val_loss = trained.best_val_loss;
    if (persist) save_attacker(trained.model, (out / "attacker.ckpt").string());

    // -- inference + metrics ---------------------------------------------------
    expdetail::stage("inference", [&] {
        TemporalMatrix victim_matrix = record_victim(victim_uploads, initial_model, pools.eval_set);
        if (persist && opts.write_temporal)
            save_temporal_csv(victim_matrix, (out / "temporal" / "victim.csv").string());
        report.victim_predicted = infer_distribution(trained.model, victim_matrix);

        report.victim_distances = distance_report(report.victim_true, report.victim_predicted);
        report.uniform_baseline.distribution = baseline_uniform(C);
        report.uniform_baseline.distances =
            distance_report(report.victim_true, report.uniform_baseline.distribution);
        report.lastlayer_baseline.distribution = baseline_lastlayer(victim_uploads, initial_model);
        report.lastlayer_baseline.distances =
            distance_report(report.victim_true, report.lastlayer_baseline.distribution);

        const LabelDistribution uniform = baseline_uniform(C);
        std::map<std::string, std::vector<const VirtualClientSpec*>> groups;
        for (const auto& spec : test_specs) groups[regime_name(spec.regime)].push_back(&spec);
        double total_l1 = 0.0, total_uniform_l1 = 0.0;
        for (const auto& [name, members] : groups) {
            HeldoutRegimeStats stats;
            stats.count = members.size();
            double support_total = 0.0;
            for (const auto* spec : members) {
                LabelDistribution pred = infer_distribution(trained.model, matrices.at(spec->id));
                const double err = l1(spec->true_distribution, pred);
                stats.mean_l1 += err;
                total_l1 += err;
                const double base = l1(spec->true_distribution, uniform);
                stats.uniform_mean_l1 += base;
                total_uniform_l1 += base;
                if (pred.argmax() == spec->true_distribution.argmax()) stats.argmax_match += 1.0;
                double mass = 0.0;
                for (std::size_t c = 0; c < C; ++c)
                    if (spec->true_distribution.p[c] > 0.0) mass += pred.p[c];
                support_total += mass;
            }
            const double n = static_cast<double>(members.size());
            stats.mean_l1 /= n;
            stats.uniform_mean_l1 /= n;
            stats.argmax_match /= n;
            stats.support_mass = support_total / n;
            report.heldout_by_regime[name] = stats;
        }
        report.heldout_count = test_specs.size();
        if (!test_specs.empty()) {
            report.heldout_mean_l1 = total_l1 / static_cast<double>(test_specs.size());
            report.heldout_uniform_mean_l1 =
                total_uniform_l1 / static_cast<double>(test_specs.size());
        }
        return 0;
    });

    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (persist) {
        expdetail::write_text(out / "report.json", report_to_json(report).dump(2) + "\n");
        expdetail::write_text(out / "dist_lines.csv", dist_lines_csv(report));
    }
    return report;
}

struct DpSweepResult {
    std::vector<double> epsilons;
    std::vector<ExperimentReport> reports;
};

inline std::string dp_sweep_csv(const DpSweepResult& sweep) {
    std::string csv = "epsilon,wasserstein,kl,js,l1,accuracy\n";
    char buf[160];
    for (std::size_t i = 0; i < sweep.reports.size(); ++i) {
        const auto& r = sweep.reports[i];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", sweep.epsilons[i],
                      r.victim_distances.wasserstein, r.victim_distances.kl, r.victim_distances.js,
                      r.victim_distances.l1, r.victim_accuracy);
        csv += buf;
    }
    return csv;
}

// Run the pipeline once per privacy budget; everything else held fixed.
inline DpSweepResult sweep_dp(const FLRunConfig& base_cfg, const std::vector<double>& epsilons,
                              const RunOptions& opts = {}) {
    DpSweepResult result;
    result.epsilons = epsilons;
    for (double eps : epsilons) {
        FLRunConfig cfg = base_cfg;
        if (!cfg.ldp) cfg.ldp = LdpSettings{};
        cfg.ldp->mechanism.epsilon = eps;
        RunOptions run_opts = opts;
        if (!opts.out_dir.empty()) {
            char label[64];
            std::snprintf(label, sizeof label, "eps_%g", eps);
            run_opts.out_dir = (std::filesystem::path(opts.out_dir) / label).string();
        }
        result.reports.push_back(run_experiment(cfg, run_opts));
    }
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        expdetail::write_text(std::filesystem::path(opts.out_dir) / "dp_sweep.csv",
                              dp_sweep_csv(result));
    }
    return result;
}

}  // namespace flinfer
