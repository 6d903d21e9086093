#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "flinfer/attacker.hpp"
#include "flinfer/dataset.hpp"
#include "flinfer/errors.hpp"
#include "flinfer/flsim.hpp"
#include "flinfer/sizeest.hpp"
#include "flinfer/vclients.hpp"

namespace flinfer {

using json = nlohmann::json;

struct SyntheticSource {
    std::size_t classes = 10;
    std::size_t dim = 32;
    std::size_t per_class_pool = 2600;
    double sep = 3.0;
};

struct IdxSource {
    std::string images;
    std::string labels;
};

using DatasetSource = std::variant<SyntheticSource, IdxSource>;

struct LocalTrainParams {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double lr = 0.05;
};

struct VictimSpec {
    std::size_t size = 2000;
    Regime regime = IidFluctRegime{0.1};
};

struct LdpSettings {
    LdpConfig mechanism;
    bool mirror = true;  // noise virtual clients and probes the same way
};

struct ClusterSettings {
    std::size_t train = 120;
    std::size_t test = 40;
    double size_jitter = 0.2;
    double iid_delta = 0.1;
    std::vector<std::size_t> quantity_cf = {3};
    std::vector<double> dirichlet_alpha = {0.5, 1.0, 2.0};
    std::vector<double> regime_weights = {1.0, 1.0, 1.0};  // iid, quantity, dirichlet
};

struct EvalSettings {
    std::size_t per_class = 50;
};

// Full experiment description; everything an end-to-end run needs.
struct FLRunConfig {
    std::uint64_t seed = 1;
    std::size_t rounds = 30;
    std::size_t clients = 8;
    std::string out_dir;
    DatasetSource dataset;
    std::vector<std::size_t> model_hidden = {24};
    LocalTrainParams local;
    VictimSpec victim;
    std::optional<LdpSettings> ldp;
    ClusterSettings cluster;
    AttackTrainConfig attacker;
    SizeSearchConfig sizeest;
    bool sizeest_mirror_ldp = true;  // probes inherit the run's LDP mechanism
    EvalSettings eval;
};

namespace cfgdetail {

inline std::string joined(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
}

inline void reject_unknown(const json& j, const std::string& path,
                           const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ConfigError(joined(path, key), "unknown key");
}

template <typename T>
T get_or(const json& j, const std::string& path, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(joined(path, key), "type mismatch");
    }
}

inline double positive(double v, const std::string& path) {
    if (v <= 0.0) throw ConfigError(path, "must be positive");
    return v;
}

// Duplicate keys parse "last wins" by default; a SAX callback catches them.
inline json parse_rejecting_duplicates(const std::string& text) {
    std::vector<std::set<std::string>> object_stack;
    json::parser_callback_t cb = [&object_stack](int, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::object_start) {
            object_stack.emplace_back();
        } else if (event == json::parse_event_t::object_end) {
            object_stack.pop_back();
        } else if (event == json::parse_event_t::key) {
            const std::string key = parsed.get<std::string>();
            if (!object_stack.back().insert(key).second)
                throw ConfigError(key, "duplicate key");
        }
        return true;
    };
    try {
        return json::parse(text, cb);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
}

inline Regime parse_regime(const json& j, const std::string& path) {
    require_object(j, path);
    const std::string type = get_or<std::string>(j, path, "type", "");
    if (type == "iid_fluct") {
        reject_unknown(j, path, {"type", "delta"});
        double delta = get_or<double>(j, path, "delta", 0.1);
        if (delta < 0.0 || delta >= 1.0) throw ConfigError(joined(path, "delta"), "must be in [0, 1)");
        return IidFluctRegime{delta};
    }
    if (type == "quantity") {
        reject_unknown(j, path, {"type", "c_f"});
        auto c_f = get_or<std::size_t>(j, path, "c_f", 3);
        if (c_f < 1) throw ConfigError(joined(path, "c_f"), "must be >= 1");
        return QuantityRegime{c_f};
    }
    if (type == "dirichlet") {
        reject_unknown(j, path, {"type", "alpha"});
        double alpha = get_or<double>(j, path, "alpha", 1.0);
        if (alpha <= 0.0) throw ConfigError(joined(path, "alpha"), "must be positive");
        return DirichletRegime{alpha};
    }
    throw ConfigError(joined(path, "type"),
                      "must be one of iid_fluct, quantity, dirichlet");
}

inline json regime_to_json(const Regime& r) {
    json j;
    j["type"] = regime_name(r);
    if (const auto* iid = std::get_if<IidFluctRegime>(&r)) j["delta"] = iid->delta;
    if (const auto* q = std::get_if<QuantityRegime>(&r)) j["c_f"] = q->c_f;
    if (const auto* d = std::get_if<DirichletRegime>(&r)) j["alpha"] = d->alpha;
    return j;
}

}  // namespace cfgdetail

inline FLRunConfig config_from_json(const json& root) {
    using namespace cfgdetail;
    require_object(root, "");
    reject_unknown(root, "",
                   {"seed", "rounds", "clients", "out_dir", "dataset", "model", "local", "victim",
                    "ldp", "cluster", "attacker", "sizeest", "eval"});
    FLRunConfig cfg;
    cfg.seed = get_or<std::uint64_t>(root, "", "seed", cfg.seed);
    cfg.rounds = get_or<std::size_t>(root, "", "rounds", cfg.rounds);
    if (cfg.rounds < 1) throw ConfigError("rounds", "must be >= 1");
    cfg.clients = get_or<std::size_t>(root, "", "clients", cfg.clients);
    if (cfg.clients < 1) throw ConfigError("clients", "must be >= 1");
    cfg.out_dir = get_or<std::string>(root, "", "out_dir", cfg.out_dir);

    if (!root.contains("dataset")) throw ConfigError("dataset", "required");
    {
        const json& j = root.at("dataset");
        require_object(j, "dataset");
        const std::string type = get_or<std::string>(j, "dataset", "type", "synthetic");
        if (type == "synthetic") {
            reject_unknown(j, "dataset", {"type", "classes", "dim", "per_class_pool", "sep"});
            SyntheticSource s;
            s.classes = get_or<std::size_t>(j, "dataset", "classes", s.classes);
            if (s.classes < 2) throw ConfigError("dataset.classes", "must be >= 2");
            s.dim = get_or<std::size_t>(j, "dataset", "dim", s.dim);
            if (s.dim < 1) throw ConfigError("dataset.dim", "must be >= 1");
            s.per_class_pool = get_or<std::size_t>(j, "dataset", "per_class_pool", s.per_class_pool);
            s.sep = positive(get_or<double>(j, "dataset", "sep", s.sep), "dataset.sep");
            cfg.dataset = s;
        } else if (type == "idx") {
            reject_unknown(j, "dataset", {"type", "images", "labels"});
            IdxSource s;
            s.images = get_or<std::string>(j, "dataset", "images", "");
            s.labels = get_or<std::string>(j, "dataset", "labels", "");
            if (s.images.empty()) throw ConfigError("dataset.images", "required for idx source");
            if (s.labels.empty()) throw ConfigError("dataset.labels", "required for idx source");
            if (!std::filesystem::exists(s.images))
                throw ConfigError("dataset.images", "file does not exist: " + s.images);
            if (!std::filesystem::exists(s.labels))
                throw ConfigError("dataset.labels", "file does not exist: " + s.labels);
            cfg.dataset = s;
        } else {
            throw ConfigError("dataset.type", "must be synthetic or idx");
        }
    }

    if (root.contains("model")) {
        const json& j = root.at("model");
        require_object(j, "model");
        reject_unknown(j, "model", {"hidden"});
        cfg.model_hidden = get_or<std::vector<std::size_t>>(j, "model", "hidden", cfg.model_hidden);
    }

    if (root.contains("local")) {
        const json& j = root.at("local");
        require_object(j, "local");
        reject_unknown(j, "local", {"epochs", "batch_size", "lr"});
        cfg.local.epochs = get_or<std::size_t>(j, "local", "epochs", cfg.local.epochs);
        cfg.local.batch_size = get_or<std::size_t>(j, "local", "batch_size", cfg.local.batch_size);
        if (cfg.local.batch_size < 1) throw ConfigError("local.batch_size", "must be >= 1");
        cfg.local.lr = positive(get_or<double>(j, "local", "lr", cfg.local.lr), "local.lr");
    }

    if (root.contains("victim")) {
        const json& j = root.at("victim");
        require_object(j, "victim");
        reject_unknown(j, "victim", {"size", "regime"});
        cfg.victim.size = get_or<std::size_t>(j, "victim", "size", cfg.victim.size);
        if (cfg.victim.size < 1) throw ConfigError("victim.size", "must be >= 1");
        if (j.contains("regime")) cfg.victim.regime = parse_regime(j.at("regime"), "victim.regime");
    }

    if (root.contains("ldp") && !root.at("ldp").is_null()) {
        const json& j = root.at("ldp");
        require_object(j, "ldp");
        reject_unknown(j, "ldp", {"epsilon", "delta", "clip_norm", "mirror"});
        LdpSettings s;
        s.mechanism.epsilon =
            positive(get_or<double>(j, "ldp", "epsilon", s.mechanism.epsilon), "ldp.epsilon");
        s.mechanism.delta = get_or<double>(j, "ldp", "delta", s.mechanism.delta);
        if (s.mechanism.delta <= 0.0 || s.mechanism.delta >= 1.0)
            throw ConfigError("ldp.delta", "must be in (0, 1)");
        s.mechanism.clip_norm =
            positive(get_or<double>(j, "ldp", "clip_norm", s.mechanism.clip_norm), "ldp.clip_norm");
        s.mirror = get_or<bool>(j, "ldp", "mirror", s.mirror);
        cfg.ldp = s;
    }

    if (root.contains("cluster")) {
        const json& j = root.at("cluster");
        require_object(j, "cluster");
        reject_unknown(j, "cluster",
                       {"train", "test", "size_jitter", "iid_delta", "quantity_cf",
                        "dirichlet_alpha", "regime_weights"});
        auto& c = cfg.cluster;
        c.train = get_or<std::size_t>(j, "cluster", "train", c.train);
        c.test = get_or<std::size_t>(j, "cluster", "test", c.test);
        c.size_jitter = get_or<double>(j, "cluster", "size_jitter", c.size_jitter);
        if (c.size_jitter < 0.0 || c.size_jitter >= 1.0)
            throw ConfigError("cluster.size_jitter", "must be in [0, 1)");
        c.iid_delta = get_or<double>(j, "cluster", "iid_delta", c.iid_delta);
        if (c.iid_delta < 0.0 || c.iid_delta >= 1.0)
            throw ConfigError("cluster.iid_delta", "must be in [0, 1)");
        c.quantity_cf = get_or<std::vector<std::size_t>>(j, "cluster", "quantity_cf", c.quantity_cf);
        c.dirichlet_alpha =
            get_or<std::vector<double>>(j, "cluster", "dirichlet_alpha", c.dirichlet_alpha);
        for (double a : c.dirichlet_alpha)
            if (a <= 0.0) throw ConfigError("cluster.dirichlet_alpha", "alphas must be positive");
        c.regime_weights =
            get_or<std::vector<double>>(j, "cluster", "regime_weights", c.regime_weights);
        if (c.regime_weights.size() != 3)
            throw ConfigError("cluster.regime_weights", "need [iid, quantity, dirichlet]");
        for (double w : c.regime_weights)
            if (w < 0.0) throw ConfigError("cluster.regime_weights", "weights must be >= 0");
    }

    if (root.contains("attacker")) {
        const json& j = root.at("attacker");
        require_object(j, "attacker");
        reject_unknown(j, "attacker",
                       {"hidden", "epochs", "lr", "batch_size", "loss", "val_fraction"});
        auto& a = cfg.attacker;
        a.hidden = get_or<std::size_t>(j, "attacker", "hidden", a.hidden);
        if (a.hidden < 1) throw ConfigError("attacker.hidden", "must be >= 1");
        a.epochs = get_or<std::size_t>(j, "attacker", "epochs", a.epochs);
        a.lr = positive(get_or<double>(j, "attacker", "lr", a.lr), "attacker.lr");
        a.batch_size = get_or<std::size_t>(j, "attacker", "batch_size", a.batch_size);
        const std::string loss = get_or<std::string>(j, "attacker", "loss", to_string(a.loss));
        try {
            a.loss = attack_loss_from_string(loss);
        } catch (const ValidationError&) {
            throw ConfigError("attacker.loss", "must be kl or mse");
        }
        a.val_fraction = get_or<double>(j, "attacker", "val_fraction", a.val_fraction);
        if (a.val_fraction <= 0.0 || a.val_fraction > 0.5)
            throw ConfigError("attacker.val_fraction", "must be in (0, 0.5]");
    }

    if (root.contains("sizeest")) {
        const json& j = root.at("sizeest");
        require_object(j, "sizeest");
        reject_unknown(j, "sizeest",
                       {"tolerance", "s_init", "s_min", "s_max", "probe_rounds", "probe_repeats",
                        "max_iters", "mirror_ldp"});
        auto& s = cfg.sizeest;
        s.tolerance = get_or<double>(j, "sizeest", "tolerance", s.tolerance);
        if (s.tolerance < 0.0) throw ConfigError("sizeest.tolerance", "must be >= 0");
        s.s_init = get_or<std::size_t>(j, "sizeest", "s_init", s.s_init);
        s.s_min = get_or<std::size_t>(j, "sizeest", "s_min", s.s_min);
        s.s_max = get_or<std::size_t>(j, "sizeest", "s_max", s.s_max);
        if (s.s_min == 0 || s.s_min > s.s_init || s.s_init > s.s_max)
            throw ConfigError("sizeest.s_init", "need 0 < s_min <= s_init <= s_max");
        s.probe_rounds = get_or<std::size_t>(j, "sizeest", "probe_rounds", s.probe_rounds);
        if (s.probe_rounds < 1) throw ConfigError("sizeest.probe_rounds", "must be >= 1");
        s.probe_repeats = get_or<std::size_t>(j, "sizeest", "probe_repeats", s.probe_repeats);
        if (s.probe_repeats < 1) throw ConfigError("sizeest.probe_repeats", "must be >= 1");
        s.max_iters = get_or<std::size_t>(j, "sizeest", "max_iters", s.max_iters);
        if (s.max_iters < 1) throw ConfigError("sizeest.max_iters", "must be >= 1");
        cfg.sizeest_mirror_ldp =
            get_or<bool>(j, "sizeest", "mirror_ldp", cfg.sizeest_mirror_ldp);
    }

    if (root.contains("eval")) {
        const json& j = root.at("eval");
        require_object(j, "eval");
        reject_unknown(j, "eval", {"per_class"});
        cfg.eval.per_class = get_or<std::size_t>(j, "eval", "per_class", cfg.eval.per_class);
        if (cfg.eval.per_class < 1) throw ConfigError("eval.per_class", "must be >= 1");
    }

    // Local training params drive the size probes as well.
    cfg.sizeest.local_epochs = cfg.local.epochs;
    cfg.sizeest.batch_size = cfg.local.batch_size;
    cfg.sizeest.lr = cfg.local.lr;
    return cfg;
}

// Strict parse: unknown keys, duplicate keys, and constraint violations all
// fail with the offending key path.
inline FLRunConfig parse_config_text(const std::string& text) {
    return config_from_json(cfgdetail::parse_rejecting_duplicates(text));
}

inline FLRunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

// Full echo with every default made explicit; parse(serialize(c)) == c.
inline json config_to_json(const FLRunConfig& cfg) {
    using namespace cfgdetail;
    json root;
    root["seed"] = cfg.seed;
    root["rounds"] = cfg.rounds;
    root["clients"] = cfg.clients;
    root["out_dir"] = cfg.out_dir;
    if (const auto* s = std::get_if<SyntheticSource>(&cfg.dataset)) {
        root["dataset"] = {{"type", "synthetic"},
                           {"classes", s->classes},
                           {"dim", s->dim},
                           {"per_class_pool", s->per_class_pool},
                           {"sep", s->sep}};
    } else {
        const auto& idx = std::get<IdxSource>(cfg.dataset);
        root["dataset"] = {{"type", "idx"}, {"images", idx.images}, {"labels", idx.labels}};
    }
    root["model"] = {{"hidden", cfg.model_hidden}};
    root["local"] = {{"epochs", cfg.local.epochs},
                     {"batch_size", cfg.local.batch_size},
                     {"lr", cfg.local.lr}};
    root["victim"] = {{"size", cfg.victim.size}, {"regime", regime_to_json(cfg.victim.regime)}};
    if (cfg.ldp) {
        root["ldp"] = {{"epsilon", cfg.ldp->mechanism.epsilon},
                       {"delta", cfg.ldp->mechanism.delta},
                       {"clip_norm", cfg.ldp->mechanism.clip_norm},
                       {"mirror", cfg.ldp->mirror}};
    } else {
        root["ldp"] = nullptr;
    }
    root["cluster"] = {{"train", cfg.cluster.train},
                       {"test", cfg.cluster.test},
                       {"size_jitter", cfg.cluster.size_jitter},
                       {"iid_delta", cfg.cluster.iid_delta},
                       {"quantity_cf", cfg.cluster.quantity_cf},
                       {"dirichlet_alpha", cfg.cluster.dirichlet_alpha},
                       {"regime_weights", cfg.cluster.regime_weights}};
    root["attacker"] = {{"hidden", cfg.attacker.hidden},
                        {"epochs", cfg.attacker.epochs},
                        {"lr", cfg.attacker.lr},
                        {"batch_size", cfg.attacker.batch_size},
                        {"loss", to_string(cfg.attacker.loss)},
                        {"val_fraction", cfg.attacker.val_fraction}};
    root["sizeest"] = {{"tolerance", cfg.sizeest.tolerance},
                       {"s_init", cfg.sizeest.s_init},
                       {"s_min", cfg.sizeest.s_min},
                       {"s_max", cfg.sizeest.s_max},
                       {"probe_rounds", cfg.sizeest.probe_rounds},
                       {"probe_repeats", cfg.sizeest.probe_repeats},
                       {"max_iters", cfg.sizeest.max_iters},
                       {"mirror_ldp", cfg.sizeest_mirror_ldp}};
    root["eval"] = {{"per_class", cfg.eval.per_class}};
    return root;
}

inline std::uint64_t config_hash(const FLRunConfig& cfg) {
    return detail::fnv1a(config_to_json(cfg).dump());
}

}  // namespace flinfer
