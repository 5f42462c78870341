// The decentralized training protocol. Every node alternates between
//
//   local phase:  one supervised step per round on its own pool
//   global phase: every `mutual_every` rounds, exchange teaching signals
//                 and take one mutual-distillation step, with the public
//                 gradient projected so it cannot undo local progress
//
// Simulation discipline: all signals of a global phase are emitted (and
// encoded to wire bytes) before any node updates, nodes are processed in id
// order, and every byte that would cross a real network passes through the
// codec so f32 rounding is part of the semantics. Training never reads
// another node's private, validation, or test partition; the only shared
// inputs are the public partitions held in the PublicStore.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "hash.hpp"
#include "idx.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "nn.hpp"
#include "projection.hpp"
#include "rng.hpp"
#include "signal.hpp"

namespace fedh2l {

// Byte accounting for everything that would cross the network. Payload and
// header are tracked separately; bandwidth comparisons use payload.
struct NetworkLedger {
    std::uint64_t messages = 0;
    std::uint64_t payload_bytes = 0;
    std::uint64_t header_bytes = 0;

    struct PerRound {
        int round = 0;
        std::uint64_t messages = 0;
        std::uint64_t payload_bytes = 0;
        std::uint64_t header_bytes = 0;
    };
    std::vector<PerRound> rounds;

    void add(int round, std::uint64_t n_messages, std::uint64_t payload, std::uint64_t header) {
        messages += n_messages;
        payload_bytes += payload;
        header_bytes += header;
        if (rounds.empty() || rounds.back().round != round) rounds.push_back({round, 0, 0, 0});
        rounds.back().messages += n_messages;
        rounds.back().payload_bytes += payload;
        rounds.back().header_bytes += header;
    }
};

struct NodeState {
    int id;
    const DomainDataset* domain;
    LabeledSet pool;  // local-phase training pool: private data + public mix
    ModelParams model;
    OptimizerState opt_local;
    OptimizerState opt_global;
    EpochSampler pool_sampler;
    EpochSampler pub_sampler;
    bool track_grads;         // keep first/last raw gradients of the window
    FlatVector window_start;  // params at the start of the current window
    FlatVector grad_first, grad_last;
    bool has_grad_first = false;
};

// ---- construction ---------------------------------------------------------

inline std::string resolve_data_path(const std::string& path) {
    if (path.empty() || path.front() == '/') return path;
    if (const char* env = std::getenv("FEDH2L_DATA_DIR"))
        if (*env) return std::string(env) + "/" + path;
    return path;
}

struct SimData {
    std::vector<DomainDataset> domains;
    PublicStore store;
    std::uint64_t split_hash = 0;
};

// Domains and splits come from the Data stream alone, so every method run
// under the same seed trains against byte-identical partitions.
inline SimData build_domains(const RunConfig& cfg, std::uint64_t seed) {
    RngStream rng(derive_seed(seed, Stream::Data));
    std::vector<LabeledSet> sets;
    std::vector<double> rotations;
    if (cfg.dataset == "synthetic") {
        sets = make_synthetic_domains(cfg.n_domains, cfg.classes, cfg.n_per_domain,
                                      cfg.rotation_step_deg, cfg.noise_sd, rng);
        for (std::size_t k = 0; k < sets.size(); ++k)
            rotations.push_back(static_cast<double>(k) * cfg.rotation_step_deg);
    } else {
        const LabeledSet base =
            load_idx(resolve_data_path(cfg.idx_images), resolve_data_path(cfg.idx_labels));
        sets = make_rotated_domains(base, cfg.angles_deg, cfg.per_class, rng);
        rotations = cfg.angles_deg;
    }
    SimData data;
    for (std::size_t k = 0; k < sets.size(); ++k) {
        data.domains.push_back(split_domain(sets[k], static_cast<int>(k), rotations[k], cfg.alpha,
                                            cfg.val_frac, cfg.test_frac, rng));
        data.store.add(static_cast<int>(k), data.domains.back().pub);
    }
    data.split_hash = split_fingerprint(data.domains);
    return data;
}

inline LabeledSet build_local_pool(const std::vector<DomainDataset>& domains, std::size_t i,
                                   bool all_public) {
    std::vector<const LabeledSet*> parts = {&domains[i].pri};
    if (all_public) {
        for (const DomainDataset& d : domains) parts.push_back(&d.pub);
    } else {
        parts.push_back(&domains[i].pub);
    }
    return concat(parts);
}

inline std::vector<std::size_t> node_dims(const RunConfig& cfg, std::size_t node,
                                          std::size_t n_nodes, std::size_t input_dim,
                                          std::size_t output_dim) {
    const std::vector<std::size_t>* hidden;
    if (cfg.hidden.size() == 1) {
        hidden = &cfg.hidden[0];
    } else if (cfg.hidden.size() == n_nodes) {
        hidden = &cfg.hidden[node];
    } else {
        throw ConfigError("config: hidden has " + std::to_string(cfg.hidden.size()) +
                          " architectures for " + std::to_string(n_nodes) + " nodes");
    }
    std::vector<std::size_t> dims = {input_dim};
    dims.insert(dims.end(), hidden->begin(), hidden->end());
    dims.push_back(output_dim);
    return dims;
}

inline OptimizerConfig make_opt_config(const RunConfig& cfg, bool global_phase) {
    OptimizerConfig oc;
    oc.kind = cfg.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::AmsGrad;
    oc.lr = global_phase ? cfg.lr_global : cfg.lr_local;
    oc.weight_decay = global_phase ? cfg.weight_decay_global : cfg.weight_decay;
    return oc;
}

inline std::vector<NodeState> build_nodes(const RunConfig& cfg, std::uint64_t seed,
                                          const SimData& data, bool pool_all) {
    const std::size_t n = data.domains.size();
    std::vector<NodeState> nodes;
    nodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const DomainDataset& dom = data.domains[i];
        LabeledSet pool = build_local_pool(data.domains, i, pool_all);
        const std::size_t input_dim = pool.x.cols;
        const auto output_dim = static_cast<std::size_t>(pool.classes);
        RngStream init_rng(derive_seed(seed, Stream::Init, i));
        ModelParams model = init_mlp(node_dims(cfg, i, n, input_dim, output_dim), init_rng);
        FlatVector start = flatten(model);
        const std::size_t pool_n = pool.size();
        nodes.push_back(NodeState{
            static_cast<int>(i), &dom, std::move(pool), std::move(model),
            OptimizerState(make_opt_config(cfg, false)), OptimizerState(make_opt_config(cfg, true)),
            EpochSampler(pool_n, RngStream(derive_seed(seed, Stream::LocalSampler, i))),
            EpochSampler(dom.pub.size(), RngStream(derive_seed(seed, Stream::PublicSampler, i))),
            cfg.local_grad == "grad_diff", std::move(start), {}, {}, false});
    }
    return nodes;
}

// ---- protocol operations --------------------------------------------------

// One supervised step on the node's own pool. Returns the batch CE loss.
inline double local_round(NodeState& node, std::size_t batch_size) {
    const Batch batch = sample_batch(node.pool, batch_size, node.pool_sampler);
    ForwardCache cache;
    const Matrix logits = forward(node.model, batch.x, &cache);
    const CeResult ce = ce_loss_grad(logits, batch.y);
    FlatVector g = backward(node.model, cache, ce.dlogits);
    if (node.track_grads) {
        if (!node.has_grad_first) {
            node.grad_first = g;
            node.has_grad_first = true;
        }
        node.grad_last = g;
    }
    apply_update(node.model, node.opt_local, g);
    return ce.loss;
}

// Predictions on the node's own public batch, as they would leave the node:
// soft labels and confidence already narrowed to f32, sample ids attached.
inline TeachingSignal emit_signal(NodeState& node, int round, std::size_t public_batch) {
    const Batch batch = sample_batch(node.domain->pub, public_batch, node.pub_sampler);
    const Matrix logits = forward(node.model, batch.x);
    const Matrix probs = softmax(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* z = logits.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (z[c] > z[best]) best = c;
        if (static_cast<int>(best) == batch.y[i]) ++correct;
    }
    TeachingSignal s;
    s.sender = static_cast<std::uint32_t>(node.id);
    s.round = round;
    s.classes = static_cast<std::uint32_t>(probs.cols);
    s.acc = static_cast<float>(static_cast<double>(correct) / static_cast<double>(logits.rows));
    s.ids = batch.ids;
    s.soft.resize(probs.data.size());
    for (std::size_t i = 0; i < probs.data.size(); ++i)
        s.soft[i] = static_cast<float>(probs.data[i]);
    return s;
}

// The direction local training actually moved against during the current
// window. Default: parameter displacement (start - now), which aggregates
// every optimizer step since the last global phase. The literal variant uses
// the difference between the window's last and first raw gradients.
inline FlatVector effective_local_gradient(const NodeState& node, bool literal_grad_diff) {
    if (literal_grad_diff) {
        if (!node.has_grad_first)
            throw std::logic_error("effective_local_gradient: no local steps in window");
        FlatVector g = node.grad_last;
        axpy(-1.0, node.grad_first, g);
        return g;
    }
    FlatVector g = node.window_start;
    axpy(-1.0, flatten(node.model), g);
    return g;
}

struct GlobalOutcome {
    ProjectionResult proj;
    LossReport losses;
};

// One mutual step from a set of peer signals. Computes the public gradient,
// resolves its conflict with the window's local gradient per cfg.conflict,
// applies the update with the global-phase optimizer, and opens a new
// window.
inline GlobalOutcome global_round(NodeState& node, const std::vector<TeachingSignal>& signals,
                                  const PublicStore& store, const RunConfig& cfg) {
    MutualGrad mg = mutual_grad(node.model, signals, store, cfg.kl_weight, cfg.ce_public_weight);
    const FlatVector g_loc = effective_local_gradient(node, cfg.local_grad == "grad_diff");
    GlobalOutcome out;
    out.losses = mg.report;
    FlatVector update;
    if (cfg.conflict == "project") {
        out.proj = project(mg.grad, g_loc);
        update = out.proj.g;
    } else if (cfg.conflict == "pcgrad") {
        auto [gp, gl] = pcgrad_symmetric(mg.grad, g_loc);
        out.proj.dot_before = dot(mg.grad, g_loc);
        out.proj.conflicted = out.proj.dot_before < 0.0;
        update = std::move(gp);
        axpy(1.0, gl, update);
        out.proj.g = update;
        out.proj.dot_after = dot(update, g_loc);
    } else {  // "off": apply the public gradient as-is
        out.proj.dot_before = dot(mg.grad, g_loc);
        out.proj.conflicted = out.proj.dot_before < 0.0;
        out.proj.dot_after = out.proj.dot_before;
        out.proj.g = mg.grad;
        update = mg.grad;
    }
    apply_update(node.model, node.opt_global, update);
    node.window_start = flatten(node.model);
    node.has_grad_first = false;
    return out;
}

// ---- run bookkeeping ------------------------------------------------------

struct EvalPoint {
    int round = 0;
    MetricsRecord val;
    double ce_local = 0.0;      // mean local CE since the previous eval
    double kl_mutual = 0.0;     // mean mutual KL term per global step
    double ce_public = 0.0;     // mean public CE term per global step
    double conflict_frac = 0.0; // fraction of global steps that conflicted
};

struct RunResult {
    std::string method;
    std::uint64_t seed = 0;
    std::uint64_t config = 0;
    std::uint64_t split_hash = 0;
    int node_count = 0;
    std::vector<EvalPoint> history;
    MetricsRecord final_test;        // selected checkpoints on test partitions
    std::vector<int> picked_round;   // per node, round of the kept checkpoint
    std::vector<ModelParams> final_models;
    NetworkLedger ledger;
    std::uint64_t traj_hash = 0;     // set when cfg.trace_params
};

// Validation cadence, checkpoint policy (max validation ACC, earliest round
// wins ties), loss averaging, and the optional parameter trajectory hash.
class EvalTracker {
public:
    EvalTracker(const RunConfig& cfg, const std::vector<DomainDataset>& domains)
        : cfg_(&cfg) {
        for (const DomainDataset& d : domains) {
            val_sets_.push_back(&d.val);
            test_sets_.push_back(&d.test);
        }
        best_acc_.assign(domains.size(), -1.0);
        best_round_.assign(domains.size(), 0);
        best_params_.resize(domains.size());
    }

    void note_local(double ce) {
        ce_sum_ += ce;
        ++ce_n_;
    }

    void note_global(const LossReport& losses, const ProjectionResult& proj) {
        kl_sum_ += losses.kl_mutual;
        cepub_sum_ += losses.ce_public;
        ++global_n_;
        if (proj.conflicted) ++conflict_n_;
    }

    void note_round_end(const std::vector<NodeState>& nodes) {
        if (!cfg_->trace_params) return;
        for (const NodeState& node : nodes) traj_.update_f64(flatten(node.model));
    }

    bool due(int round) const { return round % cfg_->eval_every == 0 || round == cfg_->rounds; }

    void eval(int round, const std::vector<NodeState>& nodes) {
        std::vector<ModelParams> models;
        models.reserve(nodes.size());
        for (const NodeState& n : nodes) models.push_back(n.model);
        EvalPoint pt;
        pt.round = round;
        pt.val = metrics_record(models, val_sets_);
        pt.ce_local = ce_n_ ? ce_sum_ / static_cast<double>(ce_n_) : 0.0;
        pt.kl_mutual = global_n_ ? kl_sum_ / static_cast<double>(global_n_) : 0.0;
        pt.ce_public = global_n_ ? cepub_sum_ / static_cast<double>(global_n_) : 0.0;
        pt.conflict_frac =
            global_n_ ? static_cast<double>(conflict_n_) / static_cast<double>(global_n_) : 0.0;
        ce_sum_ = kl_sum_ = cepub_sum_ = 0.0;
        ce_n_ = global_n_ = conflict_n_ = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (pt.val.nodes[i].acc > best_acc_[i]) {
                best_acc_[i] = pt.val.nodes[i].acc;
                best_round_[i] = round;
                best_params_[i] = flatten(nodes[i].model);
            }
        }
        history_.push_back(std::move(pt));
    }

    RunResult finalize(const std::string& method, std::uint64_t seed, std::uint64_t split_hash,
                       const std::vector<NodeState>& nodes, NetworkLedger ledger) {
        RunResult r;
        r.method = method;
        r.seed = seed;
        r.config = config_hash(*cfg_);
        r.split_hash = split_hash;
        r.node_count = static_cast<int>(nodes.size());
        r.history = std::move(history_);
        r.ledger = std::move(ledger);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            ModelParams m = nodes[i].model;
            unflatten(best_params_[i], m);
            r.final_models.push_back(std::move(m));
            r.picked_round.push_back(best_round_[i]);
        }
        std::vector<ModelParams> finals = r.final_models;
        r.final_test = metrics_record(finals, test_sets_);
        if (cfg_->trace_params) r.traj_hash = traj_.state;
        return r;
    }

private:
    const RunConfig* cfg_;
    std::vector<const LabeledSet*> val_sets_, test_sets_;
    std::vector<double> best_acc_;
    std::vector<int> best_round_;
    std::vector<FlatVector> best_params_;
    std::vector<EvalPoint> history_;
    double ce_sum_ = 0.0, kl_sum_ = 0.0, cepub_sum_ = 0.0;
    std::size_t ce_n_ = 0, global_n_ = 0, conflict_n_ = 0;
    Fnv64 traj_;
};

// ---- protocol loops -------------------------------------------------------

// FedH2L and its local-only degenerations (a single node, or IND/AGG which
// never enter the global phase) share this loop.
inline RunResult run_protocol(const RunConfig& cfg, std::uint64_t seed, const std::string& method) {
    const bool mutual = method == "fedh2l";
    const bool pool_all = method == "agg" || (method == "fedh2l" && cfg.local_pool_all_public);
    SimData data = build_domains(cfg, seed);
    std::vector<NodeState> nodes = build_nodes(cfg, seed, data, pool_all);
    EvalTracker tracker(cfg, data.domains);
    NetworkLedger ledger;
    RngStream pair_rng(derive_seed(seed, Stream::Pairing));
    const bool async = cfg.schedule == "async_pairs";

    for (int round = 1; round <= cfg.rounds; ++round) {
        for (NodeState& node : nodes) tracker.note_local(local_round(node, cfg.batch));
        if (mutual && nodes.size() > 1 && round % cfg.mutual_every == 0) {
            if (!async) {
                const std::size_t n = nodes.size();
                std::vector<std::vector<std::uint8_t>> wire;
                wire.reserve(n);
                for (NodeState& node : nodes)
                    wire.push_back(encode_signal(emit_signal(node, round, cfg.public_batch)));
                for (std::size_t i = 0; i < n; ++i) {
                    std::vector<TeachingSignal> inbox;
                    inbox.reserve(n - 1);
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j == i) continue;
                        inbox.push_back(decode_signal(wire[j]));
                        ledger.add(round, 1, signal_payload_bytes(inbox.back()),
                                   signal_header_bytes());
                    }
                    const GlobalOutcome out = global_round(nodes[i], inbox, data.store, cfg);
                    tracker.note_global(out.losses, out.proj);
                }
            } else {
                std::vector<std::size_t> order(nodes.size());
                std::iota(order.begin(), order.end(), 0);
                pair_rng.shuffle(order);
                std::size_t n_pairs = nodes.size() / 2;
                if (cfg.pairs_per_round > 0)
                    n_pairs = std::min(n_pairs, static_cast<std::size_t>(cfg.pairs_per_round));
                for (std::size_t p = 0; p < n_pairs; ++p) {
                    NodeState& a = nodes[order[2 * p]];
                    NodeState& b = nodes[order[2 * p + 1]];
                    const auto wire_a = encode_signal(emit_signal(a, round, cfg.public_batch));
                    const auto wire_b = encode_signal(emit_signal(b, round, cfg.public_batch));
                    const TeachingSignal from_a = decode_signal(wire_a);
                    const TeachingSignal from_b = decode_signal(wire_b);
                    ledger.add(round, 1, signal_payload_bytes(from_a), signal_header_bytes());
                    ledger.add(round, 1, signal_payload_bytes(from_b), signal_header_bytes());
                    const GlobalOutcome oa = global_round(a, {from_b}, data.store, cfg);
                    const GlobalOutcome ob = global_round(b, {from_a}, data.store, cfg);
                    tracker.note_global(oa.losses, oa.proj);
                    tracker.note_global(ob.losses, ob.proj);
                }
            }
        }
        tracker.note_round_end(nodes);
        if (tracker.due(round)) tracker.eval(round, nodes);
    }
    return tracker.finalize(method, seed, data.split_hash, nodes, std::move(ledger));
}

inline RunResult run_synchronous(const RunConfig& cfg, std::uint64_t seed) {
    RunConfig c = cfg;
    c.schedule = "sync";
    return run_protocol(c, seed, "fedh2l");
}

inline RunResult run_asynchronous_pairs(const RunConfig& cfg, std::uint64_t seed) {
    RunConfig c = cfg;
    c.schedule = "async_pairs";
    return run_protocol(c, seed, "fedh2l");
}

}  // namespace fedh2l
