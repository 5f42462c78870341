// Run configuration: JSON in, validated struct out. Unknown keys are
// rejected so typos fail loudly instead of silently running defaults.
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hash.hpp"

namespace fedh2l {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // Data source. "synthetic" builds rotated 2-D clusters; "idx" loads an
    // image/label pair and builds one rotated domain per angle.
    std::string dataset = "synthetic";
    std::size_t n_domains = 4;
    int classes = 4;
    std::size_t n_per_domain = 2000;
    double rotation_step_deg = 25.0;
    double noise_sd = 0.06;
    std::string idx_images, idx_labels;
    std::vector<double> angles_deg;
    std::size_t per_class = 100;

    // Per-domain split fractions of the full set; private data is the rest.
    double alpha = 0.10;
    double val_frac = 0.10;
    double test_frac = 0.15;

    // Hidden layer widths: one architecture for every node, or one list per
    // node (heterogeneous models). Input/output widths come from the data.
    std::vector<std::vector<std::size_t>> hidden = {{32}};

    std::vector<std::string> methods = {"fedh2l"};
    std::vector<std::uint64_t> seeds = {1};

    int rounds = 2000;
    int mutual_every = 1;  // global phase fires when round % mutual_every == 0
    std::size_t batch = 32;
    std::size_t public_batch = 32;
    std::string optimizer = "amsgrad";  // "sgd" | "amsgrad"
    double lr_local = 1e-3;
    double lr_global = 1e-3;
    double weight_decay = 1e-4;
    double weight_decay_global = 1e-4;

    // Mutual-phase knobs.
    double kl_weight = 1.0;
    double ce_public_weight = 1.0;
    std::string conflict = "project";  // "project" | "off" | "pcgrad"
    bool local_pool_all_public = true;
    std::string local_grad = "displacement";  // | "grad_diff"
    std::string schedule = "sync";            // | "async_pairs"
    int pairs_per_round = 0;                  // 0 = floor(N/2)

    // Baseline knobs.
    double fedprox_mu = 0.01;
    double participation = 1.0;
    int aggregate_every = 1;
    int distill_steps = 1;
    std::size_t distill_batch = 32;

    int eval_every = 50;
    bool emit_pca = false;
    bool trace_params = false;
};

inline const std::set<std::string>& known_methods() {
    static const std::set<std::string> m = {"fedh2l", "ind", "agg", "fedavg", "fedprox", "fedmd"};
    return m;
}

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["dataset"] = c.dataset;
    j["n_domains"] = c.n_domains;
    j["classes"] = c.classes;
    j["n_per_domain"] = c.n_per_domain;
    j["rotation_step_deg"] = c.rotation_step_deg;
    j["noise_sd"] = c.noise_sd;
    j["idx_images"] = c.idx_images;
    j["idx_labels"] = c.idx_labels;
    j["angles_deg"] = c.angles_deg;
    j["per_class"] = c.per_class;
    j["alpha"] = c.alpha;
    j["val_frac"] = c.val_frac;
    j["test_frac"] = c.test_frac;
    j["hidden"] = c.hidden;
    j["methods"] = c.methods;
    j["seeds"] = c.seeds;
    j["rounds"] = c.rounds;
    j["mutual_every"] = c.mutual_every;
    j["batch"] = c.batch;
    j["public_batch"] = c.public_batch;
    j["optimizer"] = c.optimizer;
    j["lr_local"] = c.lr_local;
    j["lr_global"] = c.lr_global;
    j["weight_decay"] = c.weight_decay;
    j["weight_decay_global"] = c.weight_decay_global;
    j["kl_weight"] = c.kl_weight;
    j["ce_public_weight"] = c.ce_public_weight;
    j["conflict"] = c.conflict;
    j["local_pool_all_public"] = c.local_pool_all_public;
    j["local_grad"] = c.local_grad;
    j["schedule"] = c.schedule;
    j["pairs_per_round"] = c.pairs_per_round;
    j["fedprox_mu"] = c.fedprox_mu;
    j["participation"] = c.participation;
    j["aggregate_every"] = c.aggregate_every;
    j["distill_steps"] = c.distill_steps;
    j["distill_batch"] = c.distill_batch;
    j["eval_every"] = c.eval_every;
    j["emit_pca"] = c.emit_pca;
    j["trace_params"] = c.trace_params;
    return j;
}

// Everything that shapes the run except method and seed; those live in their
// own provenance columns.
inline std::uint64_t config_hash(const RunConfig& c) {
    nlohmann::json j = to_json(c);
    j.erase("methods");
    j.erase("seeds");
    return fnv1a64(j.dump());
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    RunConfig c;
    const nlohmann::json canon = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!canon.contains(key)) throw ConfigError("config: unknown key \"" + key + "\"");
        (void)value;
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            try {
                field = j.at(key).template get<std::decay_t<decltype(field)>>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError(std::string("config: bad value for \"") + key + "\"");
            }
        }
    };
    get("dataset", c.dataset);
    get("n_domains", c.n_domains);
    get("classes", c.classes);
    get("n_per_domain", c.n_per_domain);
    get("rotation_step_deg", c.rotation_step_deg);
    get("noise_sd", c.noise_sd);
    get("idx_images", c.idx_images);
    get("idx_labels", c.idx_labels);
    get("angles_deg", c.angles_deg);
    get("per_class", c.per_class);
    get("alpha", c.alpha);
    get("val_frac", c.val_frac);
    get("test_frac", c.test_frac);
    if (j.contains("hidden")) {
        const nlohmann::json& h = j.at("hidden");
        if (!h.is_array() || h.empty()) throw ConfigError("config: \"hidden\" must be a non-empty array");
        c.hidden.clear();
        if (h[0].is_array()) {
            for (const auto& arch : h) {
                if (!arch.is_array()) throw ConfigError("config: mixed \"hidden\" forms");
                c.hidden.push_back(arch.get<std::vector<std::size_t>>());
            }
        } else {
            c.hidden.push_back(h.get<std::vector<std::size_t>>());
        }
    }
    get("methods", c.methods);
    get("seeds", c.seeds);
    get("rounds", c.rounds);
    get("mutual_every", c.mutual_every);
    get("batch", c.batch);
    get("public_batch", c.public_batch);
    get("optimizer", c.optimizer);
    get("lr_local", c.lr_local);
    get("lr_global", c.lr_global);
    get("weight_decay", c.weight_decay);
    get("weight_decay_global", c.weight_decay_global);
    get("kl_weight", c.kl_weight);
    get("ce_public_weight", c.ce_public_weight);
    get("conflict", c.conflict);
    get("local_pool_all_public", c.local_pool_all_public);
    get("local_grad", c.local_grad);
    get("schedule", c.schedule);
    get("pairs_per_round", c.pairs_per_round);
    get("fedprox_mu", c.fedprox_mu);
    get("participation", c.participation);
    get("aggregate_every", c.aggregate_every);
    get("distill_steps", c.distill_steps);
    get("distill_batch", c.distill_batch);
    get("eval_every", c.eval_every);
    get("emit_pca", c.emit_pca);
    get("trace_params", c.trace_params);
    return c;
}

inline void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (c.dataset != "synthetic" && c.dataset != "idx")
        fail("dataset must be \"synthetic\" or \"idx\"");
    if (c.dataset == "synthetic") {
        if (c.n_domains == 0) fail("n_domains must be positive");
        if (c.classes < 2) fail("classes must be at least 2");
        if (c.n_per_domain < static_cast<std::size_t>(c.classes))
            fail("n_per_domain must cover every class");
        if (c.noise_sd < 0.0) fail("noise_sd must be non-negative");
    } else {
        if (c.idx_images.empty() || c.idx_labels.empty())
            fail("idx dataset needs idx_images and idx_labels");
        if (c.angles_deg.empty()) fail("idx dataset needs at least one angle");
        if (c.per_class == 0) fail("per_class must be positive");
    }
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail("alpha must be in (0, 1)");
    if (c.val_frac <= 0.0 || c.test_frac <= 0.0 || c.alpha + c.val_frac + c.test_frac >= 1.0)
        fail("alpha + val_frac + test_frac must leave private data");
    if (c.hidden.empty()) fail("hidden must not be empty");
    for (const auto& arch : c.hidden)
        for (std::size_t w : arch)
            if (w == 0) fail("hidden widths must be positive");
    if (c.methods.empty()) fail("methods must not be empty");
    for (const std::string& m : c.methods)
        if (!known_methods().count(m)) fail("unknown method \"" + m + "\"");
    if (c.seeds.empty()) fail("seeds must not be empty");
    if (c.rounds < 1) fail("rounds must be positive");
    if (c.mutual_every < 1) fail("mutual_every must be positive");
    if (c.batch == 0 || c.public_batch == 0 || c.distill_batch == 0)
        fail("batch sizes must be positive");
    if (c.optimizer != "sgd" && c.optimizer != "amsgrad")
        fail("optimizer must be \"sgd\" or \"amsgrad\"");
    if (c.lr_local <= 0.0 || c.lr_global <= 0.0) fail("learning rates must be positive");
    if (c.weight_decay < 0.0 || c.weight_decay_global < 0.0)
        fail("weight decay must be non-negative");
    if (c.kl_weight < 0.0 || c.ce_public_weight < 0.0)
        fail("mutual loss weights must be non-negative");
    if (c.conflict != "project" && c.conflict != "off" && c.conflict != "pcgrad")
        fail("conflict must be \"project\", \"off\", or \"pcgrad\"");
    if (c.local_grad != "displacement" && c.local_grad != "grad_diff")
        fail("local_grad must be \"displacement\" or \"grad_diff\"");
    if (c.schedule != "sync" && c.schedule != "async_pairs")
        fail("schedule must be \"sync\" or \"async_pairs\"");
    if (c.pairs_per_round < 0) fail("pairs_per_round must be non-negative");
    if (c.fedprox_mu < 0.0) fail("fedprox_mu must be non-negative");
    if (!(c.participation > 0.0 && c.participation <= 1.0))
        fail("participation must be in (0, 1]");
    if (c.aggregate_every < 1) fail("aggregate_every must be positive");
    if (c.distill_steps < 1) fail("distill_steps must be positive");
    if (c.eval_every < 1) fail("eval_every must be positive");
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    RunConfig c = config_from_json(j);
    validate_config(c);
    return c;
}

}  // namespace fedh2l
