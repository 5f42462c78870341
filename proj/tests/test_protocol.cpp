#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include <fedh2l/baselines.hpp>
#include <fedh2l/protocol.hpp>

using namespace fedh2l;

namespace {

// A configuration small enough that whole runs finish in milliseconds.
RunConfig small_cfg() {
    RunConfig c;
    c.n_domains = 3;
    c.classes = 4;
    c.n_per_domain = 400;
    c.alpha = 0.10;
    c.val_frac = 0.10;
    c.test_frac = 0.15;
    c.hidden = {{16}};
    c.rounds = 10;
    c.eval_every = 5;
    return c;
}

}  // namespace

TEST_CASE("build_domains produces the configured partitions deterministically") {
    const RunConfig cfg = small_cfg();
    const SimData a = build_domains(cfg, 7);
    REQUIRE(a.domains.size() == 3);
    for (const DomainDataset& d : a.domains) {
        REQUIRE(d.pub.size() == 40);
        REQUIRE(d.val.size() == 40);
        REQUIRE(d.test.size() == 60);
        REQUIRE(d.pri.size() == 260);
    }
    REQUIRE(a.store.domains() == std::vector<int>{0, 1, 2});
    const SimData b = build_domains(cfg, 7);
    REQUIRE(a.split_hash == b.split_hash);
    REQUIRE(a.domains[1].pri.x.data == b.domains[1].pri.x.data);
    const SimData c = build_domains(cfg, 8);
    REQUIRE(a.split_hash != c.split_hash);
}

TEST_CASE("build_domains with missing idx files reports the failure") {
    RunConfig cfg = small_cfg();
    cfg.dataset = "idx";
    cfg.idx_images = "/nonexistent/images.idx";
    cfg.idx_labels = "/nonexistent/labels.idx";
    cfg.angles_deg = {0.0, 90.0};
    cfg.per_class = 5;
    REQUIRE_THROWS(build_domains(cfg, 1));
}

TEST_CASE("local pools mix private data with the chosen public partitions") {
    const RunConfig cfg = small_cfg();
    const SimData data = build_domains(cfg, 7);
    const LabeledSet own = build_local_pool(data.domains, 1, false);
    REQUIRE(own.size() == 260 + 40);
    const LabeledSet all = build_local_pool(data.domains, 1, true);
    REQUIRE(all.size() == 260 + 3 * 40);
    // private rows first, then public partitions in domain order
    REQUIRE(all.ids[0] == data.domains[1].pri.ids[0]);
    REQUIRE(all.ids[260] == data.domains[0].pub.ids[0]);
    REQUIRE(all.ids[260 + 40] == data.domains[1].pub.ids[0]);
}

TEST_CASE("node_dims broadcasts one architecture or assigns per node") {
    RunConfig cfg = small_cfg();
    REQUIRE(node_dims(cfg, 2, 3, 2, 4) == std::vector<std::size_t>{2, 16, 4});
    cfg.hidden = {{8}, {12, 6}, {16}};
    REQUIRE(node_dims(cfg, 1, 3, 2, 4) == std::vector<std::size_t>{2, 12, 6, 4});
    cfg.hidden = {{8}, {12}};
    REQUIRE_THROWS_AS(node_dims(cfg, 0, 3, 2, 4), ConfigError);
}

TEST_CASE("build_nodes is deterministic and starts a fresh window") {
    const RunConfig cfg = small_cfg();
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> a = build_nodes(cfg, 7, data, true);
    std::vector<NodeState> b = build_nodes(cfg, 7, data, true);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].id == static_cast<int>(i));
        REQUIRE(a[i].pool.size() == 260 + 3 * 40);
        REQUIRE(a[i].model.layer_dims == std::vector<std::size_t>{2, 16, 4});
        REQUIRE(flatten(a[i].model) == flatten(b[i].model));
        REQUIRE(a[i].window_start == flatten(a[i].model));
        REQUIRE_FALSE(a[i].has_grad_first);
    }
    // different init lanes per node
    REQUIRE(flatten(a[0].model) != flatten(a[1].model));
}

TEST_CASE("local_round trains on the pool and tracks window gradients on demand") {
    RunConfig cfg = small_cfg();
    cfg.local_grad = "grad_diff";
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> nodes = build_nodes(cfg, 7, data, false);
    NodeState& node = nodes[0];
    const FlatVector before = flatten(node.model);
    const double ce = local_round(node, cfg.batch);
    REQUIRE(std::isfinite(ce));
    REQUIRE(ce > 0.0);
    REQUIRE(flatten(node.model) != before);
    REQUIRE(node.has_grad_first);
    REQUIRE(node.grad_first == node.grad_last);
    local_round(node, cfg.batch);
    REQUIRE(node.grad_first != node.grad_last);
}

TEST_CASE("teaching signals draw from the node's own public partition") {
    const RunConfig cfg = small_cfg();
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> nodes = build_nodes(cfg, 7, data, false);
    const TeachingSignal s = emit_signal(nodes[1], 3, cfg.public_batch);
    REQUIRE(s.sender == 1);
    REQUIRE(s.round == 3);
    REQUIRE(s.classes == 4);
    REQUIRE(s.ids.size() == cfg.public_batch);
    REQUIRE(s.acc >= 0.0f);
    REQUIRE(s.acc <= 1.0f);
    const std::set<std::uint64_t> own(nodes[1].domain->pub.ids.begin(),
                                      nodes[1].domain->pub.ids.end());
    for (std::uint64_t id : s.ids) REQUIRE(own.count(id) == 1);
    // receivers can resolve every id against the shared store
    const Batch resolved = data.store.lookup(1, s.ids);
    REQUIRE(resolved.size() == s.ids.size());
}

TEST_CASE("emitting a signal never disturbs local-phase sampling") {
    const RunConfig cfg = small_cfg();
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> plain = build_nodes(cfg, 7, data, false);
    std::vector<NodeState> emitting = build_nodes(cfg, 7, data, false);
    emit_signal(emitting[0], 1, cfg.public_batch);
    const Batch a = sample_batch(plain[0].pool, cfg.batch, plain[0].pool_sampler);
    const Batch b = sample_batch(emitting[0].pool, cfg.batch, emitting[0].pool_sampler);
    REQUIRE(a.ids == b.ids);
}

TEST_CASE("window gradient: displacement of parameters or difference of raw gradients") {
    RunConfig cfg = small_cfg();
    cfg.optimizer = "sgd";
    cfg.weight_decay = 0.0;
    cfg.lr_local = 0.05;
    cfg.local_grad = "grad_diff";  // enables tracking; both variants queried below
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> nodes = build_nodes(cfg, 7, data, false);
    NodeState& node = nodes[0];

    REQUIRE_THROWS_AS(effective_local_gradient(node, true), std::logic_error);
    FlatVector disp0 = effective_local_gradient(node, false);
    REQUIRE(norm(disp0) == 0.0);

    local_round(node, cfg.batch);
    // one plain SGD step: displacement = lr * grad, literal difference = 0
    const FlatVector disp = effective_local_gradient(node, false);
    REQUIRE(disp.size() == node.grad_first.size());
    for (std::size_t i = 0; i < disp.size(); ++i)
        REQUIRE_THAT(disp[i], Catch::Matchers::WithinAbs(cfg.lr_local * node.grad_first[i], 1e-12));
    const FlatVector lit = effective_local_gradient(node, true);
    REQUIRE(norm(lit) == 0.0);

    local_round(node, cfg.batch);
    FlatVector expect = node.grad_last;
    axpy(-1.0, node.grad_first, expect);
    REQUIRE(effective_local_gradient(node, true) == expect);
}

TEST_CASE("global_round applies the resolved update and opens a new window") {
    RunConfig cfg = small_cfg();
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> nodes = build_nodes(cfg, 7, data, true);
    local_round(nodes[0], cfg.batch);
    const TeachingSignal peer = emit_signal(nodes[1], 1, cfg.public_batch);
    const FlatVector before = flatten(nodes[0].model);
    const GlobalOutcome out = global_round(nodes[0], {peer}, data.store, cfg);
    REQUIRE(flatten(nodes[0].model) != before);
    REQUIRE(out.losses.kl_mutual >= 0.0);
    REQUIRE(out.losses.ce_public > 0.0);
    REQUIRE(nodes[0].window_start == flatten(nodes[0].model));
    REQUIRE_FALSE(nodes[0].has_grad_first);
}

TEST_CASE("zero mutual weights make the global phase an exact no-op") {
    RunConfig cfg = small_cfg();
    cfg.kl_weight = 0.0;
    cfg.ce_public_weight = 0.0;
    cfg.weight_decay_global = 0.0;
    const SimData data = build_domains(cfg, 7);
    std::vector<NodeState> nodes = build_nodes(cfg, 7, data, true);
    local_round(nodes[0], cfg.batch);
    const TeachingSignal peer = emit_signal(nodes[1], 1, cfg.public_batch);
    const FlatVector before = flatten(nodes[0].model);
    const GlobalOutcome out = global_round(nodes[0], {peer}, data.store, cfg);
    REQUIRE(flatten(nodes[0].model) == before);
    REQUIRE(out.losses.kl_mutual == 0.0);
    REQUIRE(out.losses.ce_public == 0.0);
    REQUIRE_FALSE(out.proj.conflicted);
}

TEST_CASE("the ledger counts every signal that crosses the network") {
    RunConfig cfg = small_cfg();
    cfg.rounds = 4;
    cfg.mutual_every = 2;
    cfg.eval_every = 4;
    const RunResult r = run_protocol(cfg, 11, "fedh2l");
    // two global phases, each with n*(n-1) = 6 directed signals
    const std::uint64_t per_signal = signal_payload_bytes(cfg.public_batch, 4);
    REQUIRE(per_signal == 4 + 32 * 8 + 32 * 4 * 4);
    REQUIRE(r.ledger.messages == 12);
    REQUIRE(r.ledger.payload_bytes == 12 * per_signal);
    REQUIRE(r.ledger.header_bytes == 12 * 16);
    REQUIRE(r.ledger.rounds.size() == 2);
    REQUIRE(r.ledger.rounds[0].round == 2);
    REQUIRE(r.ledger.rounds[1].round == 4);
    REQUIRE(r.ledger.rounds[0].messages == 6);
}

TEST_CASE("local-only methods never touch the network") {
    RunConfig cfg = small_cfg();
    for (const std::string method : {"ind", "agg"}) {
        const RunResult r = run_protocol(cfg, 11, method);
        REQUIRE(r.ledger.messages == 0);
        REQUIRE(r.ledger.payload_bytes == 0);
    }
}

TEST_CASE("evaluation cadence covers the configured grid plus the final round") {
    RunConfig cfg = small_cfg();
    cfg.rounds = 10;
    cfg.eval_every = 4;
    const RunResult r = run_protocol(cfg, 3, "ind");
    REQUIRE(r.history.size() == 3);
    REQUIRE(r.history[0].round == 4);
    REQUIRE(r.history[1].round == 8);
    REQUIRE(r.history[2].round == 10);
    REQUIRE(r.node_count == 3);
    REQUIRE(r.final_test.nodes.size() == 3);
    REQUIRE(r.picked_round.size() == 3);
    for (int round : r.picked_round) REQUIRE((round == 4 || round == 8 || round == 10));
}

TEST_CASE("runs are bit-reproducible under a fixed seed") {
    RunConfig cfg = small_cfg();
    cfg.rounds = 20;
    cfg.eval_every = 10;
    cfg.trace_params = true;
    const RunResult a = run_protocol(cfg, 5, "fedh2l");
    const RunResult b = run_protocol(cfg, 5, "fedh2l");
    REQUIRE(a.traj_hash == b.traj_hash);
    REQUIRE(a.final_test.avg_acc == b.final_test.avg_acc);
    const RunResult c = run_protocol(cfg, 6, "fedh2l");
    REQUIRE(a.traj_hash != c.traj_hash);
}

TEST_CASE("every method sees the same split under the same seed") {
    RunConfig cfg = small_cfg();
    cfg.rounds = 2;
    cfg.eval_every = 2;
    const RunResult a = run_protocol(cfg, 9, "fedh2l");
    const RunResult b = run_protocol(cfg, 9, "ind");
    const RunResult c = run_single(cfg, "fedavg", 9);
    REQUIRE(a.split_hash == b.split_hash);
    REQUIRE(a.split_hash == c.split_hash);
}

TEST_CASE("with two nodes the pairwise schedule matches the synchronous one") {
    RunConfig cfg = small_cfg();
    cfg.n_domains = 2;
    cfg.rounds = 30;
    cfg.eval_every = 10;
    cfg.trace_params = true;
    const RunResult sync = run_synchronous(cfg, 13);
    const RunResult pairs = run_asynchronous_pairs(cfg, 13);
    REQUIRE(sync.traj_hash == pairs.traj_hash);
    REQUIRE(sync.ledger.messages == pairs.ledger.messages);
    REQUIRE(sync.ledger.payload_bytes == pairs.ledger.payload_bytes);
}

TEST_CASE("pairs_per_round caps the exchanges of a pairwise global phase") {
    RunConfig cfg = small_cfg();
    cfg.n_domains = 4;
    cfg.schedule = "async_pairs";
    cfg.pairs_per_round = 1;
    cfg.rounds = 6;
    cfg.eval_every = 6;
    const RunResult r = run_protocol(cfg, 2, "fedh2l");
    // one pair per round: 2 signals per global phase, 6 rounds
    REQUIRE(r.ledger.messages == 12);
}

TEST_CASE("a single node degenerates to independent training exactly") {
    RunConfig cfg = small_cfg();
    cfg.n_domains = 1;
    cfg.rounds = 50;
    cfg.eval_every = 25;
    cfg.trace_params = true;
    const RunResult fed = run_protocol(cfg, 17, "fedh2l");
    const RunResult ind = run_protocol(cfg, 17, "ind");
    REQUIRE(fed.traj_hash == ind.traj_hash);
    REQUIRE(fed.ledger.messages == 0);
    REQUIRE(fed.final_test.avg_acc == ind.final_test.avg_acc);
}
