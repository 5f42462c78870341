// Comparison methods around the same node/data machinery:
//   ind      local training only, on the node's own private + public data
//   agg      local training only, with every domain's public data pooled in
//   fedavg   server-side weighted parameter averaging (homogeneous models)
//   fedprox  fedavg plus a proximal pull toward the last downloaded model
//   fedmd    centralized distillation toward mean soft labels on a common
//            public batch (simplified: unweighted consensus, shared server)
//
// ind and agg reuse the protocol loop with the global phase disabled; the
// rest have their own loops but share construction, evaluation, and byte
// accounting so results are directly comparable.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "nn.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace fedh2l {

// Parameter averaging is only defined when every model has the same shape.
struct InapplicableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Size-weighted average of client parameters.
inline ModelParams fedavg_round(const std::vector<const ModelParams*>& models,
                                const std::vector<std::size_t>& sizes) {
    if (models.empty() || models.size() != sizes.size())
        throw std::invalid_argument("fedavg_round: need one size per model");
    for (const ModelParams* m : models)
        if (!m->same_shape(*models[0]))
            throw InapplicableError(
                "fedavg_round: parameter averaging needs homogeneous architectures");
    double total = 0.0;
    for (std::size_t s : sizes) {
        if (s == 0) throw std::invalid_argument("fedavg_round: zero client size");
        total += static_cast<double>(s);
    }
    FlatVector acc(param_count(*models[0]), 0.0);
    for (std::size_t i = 0; i < models.size(); ++i)
        axpy(static_cast<double>(sizes[i]) / total, flatten(*models[i]), acc);
    ModelParams out = *models[0];
    unflatten(acc, out);
    return out;
}

struct ProxGrad {
    FlatVector grad;
    double loss = 0.0;  // CE plus the proximal term
};

// Batch CE gradient plus mu * (theta - theta_global). mu = 0 takes the exact
// FedAvg path: the proximal term is skipped entirely, not just zeroed.
inline ProxGrad fedprox_local_grad(const ModelParams& model, const Matrix& x,
                                   const std::vector<int>& y, const FlatVector& theta_global,
                                   double mu) {
    if (mu < 0.0) throw std::invalid_argument("fedprox_local_grad: negative mu");
    ForwardCache cache;
    const Matrix logits = forward(model, x, &cache);
    const CeResult ce = ce_loss_grad(logits, y);
    ProxGrad out;
    out.grad = backward(model, cache, ce.dlogits);
    out.loss = ce.loss;
    if (mu != 0.0) {
        FlatVector diff = flatten(model);
        if (diff.size() != theta_global.size())
            throw std::invalid_argument("fedprox_local_grad: anchor length mismatch");
        axpy(-1.0, theta_global, diff);
        out.loss += 0.5 * mu * squared_norm(diff);
        axpy(mu, diff, out.grad);
    }
    return out;
}

// Unweighted mean of per-node soft labels on a common batch.
inline Matrix fedmd_consensus(const std::vector<Matrix>& probs) {
    if (probs.empty()) throw std::invalid_argument("fedmd_consensus: no predictions");
    Matrix out(probs[0].rows, probs[0].cols, 0.0);
    for (const Matrix& p : probs) {
        if (p.rows != out.rows || p.cols != out.cols)
            throw std::invalid_argument("fedmd_consensus: shape mismatch");
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += p.data[i];
    }
    const double inv = 1.0 / static_cast<double>(probs.size());
    for (double& v : out.data) v *= inv;
    return out;
}

// FedAvg / FedProx. Server state starts from the size-weighted average of
// the client inits. Each aggregation period: participants download the
// server model, take `aggregate_every` local steps, upload, and the server
// re-averages. Wire accounting: one download and one upload per participant
// per period, 4 bytes per parameter, 16-byte header per message.
inline RunResult run_fedavg(const RunConfig& cfg, std::uint64_t seed, double mu,
                            const std::string& method) {
    SimData data = build_domains(cfg, seed);
    std::vector<NodeState> nodes = build_nodes(cfg, seed, data, false);
    EvalTracker tracker(cfg, data.domains);
    NetworkLedger ledger;
    RngStream part_rng(derive_seed(seed, Stream::Participation));

    std::vector<const ModelParams*> views;
    std::vector<std::size_t> sizes;
    for (const NodeState& n : nodes) {
        views.push_back(&n.model);
        sizes.push_back(n.pool.size());
    }
    FlatVector theta_global = flatten(fedavg_round(views, sizes));
    const std::uint64_t param_bytes = static_cast<std::uint64_t>(theta_global.size()) * 4;

    std::vector<std::size_t> participants;
    std::vector<FlatVector> anchors(nodes.size());
    for (int round = 1; round <= cfg.rounds; ++round) {
        const bool period_start = (round - 1) % cfg.aggregate_every == 0;
        if (period_start) {
            std::vector<std::size_t> order(nodes.size());
            std::iota(order.begin(), order.end(), 0);
            part_rng.shuffle(order);
            auto k = static_cast<std::size_t>(
                std::lround(cfg.participation * static_cast<double>(nodes.size())));
            k = std::clamp<std::size_t>(k, 1, nodes.size());
            participants.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
            std::sort(participants.begin(), participants.end());
            for (std::size_t i : participants) {
                unflatten(theta_global, nodes[i].model);
                anchors[i] = theta_global;
                ledger.add(round, 1, param_bytes, 16);  // download
            }
        }
        for (std::size_t i : participants) {
            NodeState& node = nodes[i];
            const Batch batch = sample_batch(node.pool, cfg.batch, node.pool_sampler);
            const ProxGrad pg = fedprox_local_grad(node.model, batch.x, batch.y, anchors[i], mu);
            apply_update(node.model, node.opt_local, pg.grad);
            tracker.note_local(pg.loss);
        }
        const bool period_end = round % cfg.aggregate_every == 0 || round == cfg.rounds;
        if (period_end) {
            std::vector<const ModelParams*> pv;
            std::vector<std::size_t> ps;
            for (std::size_t i : participants) {
                pv.push_back(&nodes[i].model);
                ps.push_back(nodes[i].pool.size());
                ledger.add(round, 1, param_bytes, 16);  // upload
            }
            theta_global = flatten(fedavg_round(pv, ps));
        }
        tracker.note_round_end(nodes);
        if (tracker.due(round)) tracker.eval(round, nodes);
    }
    return tracker.finalize(method, seed, data.split_hash, nodes, std::move(ledger));
}

// Simplified FedMD. Every `mutual_every` rounds the server draws a common
// batch from the union of public partitions, collects every node's soft
// labels, broadcasts the unweighted mean back, and each node takes
// `distill_steps` KL steps toward it. Wire accounting per exchange: the
// server sends the batch ids to every node (8 bytes per id), every node
// uploads soft labels, and the consensus goes back out (4 bytes per
// probability), all with 16-byte headers.
inline RunResult run_fedmd(const RunConfig& cfg, std::uint64_t seed) {
    SimData data = build_domains(cfg, seed);
    std::vector<NodeState> nodes = build_nodes(cfg, seed, data, false);
    EvalTracker tracker(cfg, data.domains);
    NetworkLedger ledger;

    std::vector<const LabeledSet*> pubs;
    for (const DomainDataset& d : data.domains) pubs.push_back(&d.pub);
    const LabeledSet union_pub = concat(pubs);
    EpochSampler common_sampler(union_pub.size(), RngStream(derive_seed(seed, Stream::Distill)));

    for (int round = 1; round <= cfg.rounds; ++round) {
        for (NodeState& node : nodes) tracker.note_local(local_round(node, cfg.batch));
        if (nodes.size() > 1 && round % cfg.mutual_every == 0) {
            const Batch batch = sample_batch(union_pub, cfg.distill_batch, common_sampler);
            const std::uint64_t b = batch.size();
            const auto m = static_cast<std::uint64_t>(union_pub.classes);
            std::vector<Matrix> probs;
            probs.reserve(nodes.size());
            for (NodeState& node : nodes)
                probs.push_back(softmax(forward(node.model, batch.x)));
            const Matrix consensus = fedmd_consensus(probs);
            const auto n = static_cast<std::uint64_t>(nodes.size());
            ledger.add(round, n, n * b * 8, n * 16);          // ids out
            ledger.add(round, n, n * b * m * 4, n * 16);      // soft labels in
            ledger.add(round, n, n * b * m * 4, n * 16);      // consensus out
            const double inv_b = 1.0 / static_cast<double>(b);
            for (NodeState& node : nodes) {
                LossReport report;
                for (int s = 0; s < cfg.distill_steps; ++s) {
                    ForwardCache cache;
                    const Matrix logits = forward(node.model, batch.x, &cache);
                    const Matrix p = softmax(logits);
                    Matrix dlogits(p.rows, p.cols);
                    double kl = 0.0;
                    for (std::size_t i = 0; i < p.rows; ++i)
                        for (std::size_t c = 0; c < p.cols; ++c) {
                            const double t = consensus(i, c);
                            if (t > 0.0)
                                kl += t * (std::log(t) - std::log(std::max(p(i, c), 1e-12)));
                            dlogits(i, c) = inv_b * (p(i, c) - t);
                        }
                    report.kl_mutual = kl * inv_b;
                    FlatVector g = backward(node.model, cache, dlogits);
                    apply_update(node.model, node.opt_global, g);
                }
                tracker.note_global(report, ProjectionResult{});
                node.window_start = flatten(node.model);
                node.has_grad_first = false;
            }
        }
        tracker.note_round_end(nodes);
        if (tracker.due(round)) tracker.eval(round, nodes);
    }
    return tracker.finalize("fedmd", seed, data.split_hash, nodes, std::move(ledger));
}

// Single entry point for every method name accepted in configs.
inline RunResult run_single(const RunConfig& cfg, const std::string& method, std::uint64_t seed) {
    if (method == "fedh2l" || method == "ind" || method == "agg")
        return run_protocol(cfg, seed, method);
    if (method == "fedavg") return run_fedavg(cfg, seed, 0.0, "fedavg");
    if (method == "fedprox") return run_fedavg(cfg, seed, cfg.fedprox_mu, "fedprox");
    if (method == "fedmd") return run_fedmd(cfg, seed);
    throw ConfigError("config: unknown method \"" + method + "\"");
}

}  // namespace fedh2l
