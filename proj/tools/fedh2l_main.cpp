// Command-line front end.
//
//   fedh2l run --config cfg.json [--seed S] [--method M] [--out DIR]
//   fedh2l report --in DIR
//   fedh2l selftest
//
// run executes the full methods x seeds matrix from the config (optionally
// narrowed to one method / one seed), writing one directory per cell.
// Relative idx data paths resolve against $FEDH2L_DATA_DIR when it is set.
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <fedh2l/fedh2l.hpp>

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::string& method, std::int64_t seed) {
    fedh2l::RunConfig cfg = fedh2l::load_config(config_path);
    if (!method.empty()) {
        if (!fedh2l::known_methods().count(method)) {
            std::cerr << "unknown method \"" << method << "\"\n";
            return 2;
        }
        cfg.methods = {method};
    }
    if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
    return fedh2l::run_matrix(cfg, out_dir);
}

int cmd_report(const std::string& in_dir) {
    fedh2l::write_report(in_dir, std::cout);
    return 0;
}

// Fast invariant battery over the numeric core. Seconds, not minutes.
int cmd_selftest() {
    using namespace fedh2l;
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::cout << (ok ? "ok   " : "FAIL ") << name << '\n';
        if (!ok) ++failures;
    };

    {
        RngStream rng(7);
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            const std::size_t dim = 2 + rng.index(199);
            FlatVector gp(dim), gl(dim);
            for (double& v : gp) v = rng.normal();
            for (double& v : gl) v = rng.normal();
            const ProjectionResult pr = project(gp, gl);
            const double v_num = qp_dual_numeric(make_projection_qp(gp, gl), 1e-12);
            ok = std::fabs(pr.v - v_num) <= 1e-8 && pr.dot_after >= -1e-9 &&
                 norm(pr.g) <= norm(gp) + 1e-12;
        }
        check("projection closed form matches numeric dual", ok);
    }
    {
        RngStream rng(11);
        ModelParams m = init_mlp({5, 8, 4}, rng);
        Matrix x(6, 5);
        for (double& v : x.data) v = rng.uniform();
        std::vector<int> y = {0, 1, 2, 3, 0, 1};
        ForwardCache cache;
        const CeResult ce = ce_loss_grad(forward(m, x, &cache), y);
        const FlatVector g = backward(m, cache, ce.dlogits);
        const FlatVector fd = finite_diff_gradient(
            [&](const ModelParams& p) { return ce_loss_grad(forward(p, x), y).loss; }, m);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double denom = std::max({std::fabs(g[i]), std::fabs(fd[i]), 1e-8});
            worst = std::max(worst, std::fabs(g[i] - fd[i]) / denom);
        }
        check("analytic CE gradient matches finite differences", worst < 1e-4);
    }
    {
        TeachingSignal s;
        s.sender = 3;
        s.round = 42;
        s.classes = 4;
        s.acc = 0.75f;
        s.ids = {9, 2, 77};
        s.soft = {0.1f, 0.2f, 0.3f, 0.4f, 0.25f, 0.25f, 0.25f, 0.25f, 1.0f, 0.0f, 0.0f, 0.0f};
        const auto bytes = encode_signal(s);
        const TeachingSignal d = decode_signal(bytes);
        check("teaching signal wire roundtrip",
              bytes.size() == signal_header_bytes() + signal_payload_bytes(s) &&
                  d.sender == s.sender && d.round == s.round && d.ids == s.ids &&
                  d.soft == s.soft && d.acc == s.acc);
    }
    {
        EpochSampler sampler(13, RngStream(3));
        std::vector<int> seen(13, 0);
        for (int i = 0; i < 13; ++i)
            for (std::size_t idx : sampler.next(1)) ++seen[idx];
        bool ok = true;
        for (int c : seen) ok = ok && c == 1;
        check("epoch sampler covers every index once per pass", ok);
    }
    {
        RunConfig cfg;
        cfg.n_domains = 2;
        cfg.classes = 3;
        cfg.n_per_domain = 120;
        cfg.rounds = 30;
        cfg.eval_every = 10;
        cfg.hidden = {{8}};
        cfg.trace_params = true;
        const RunResult a = run_single(cfg, "fedh2l", 5);
        const RunResult b = run_single(cfg, "fedh2l", 5);
        check("repeated runs are bit-identical",
              a.traj_hash == b.traj_hash && a.final_test.avg_acc == b.final_test.avg_acc &&
                  a.split_hash == b.split_hash);
    }
    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic lab for decentralized mutual-distillation learning"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "runs", method, in_dir;
    std::int64_t seed = -1;

    CLI::App* run = app.add_subcommand("run", "run the configured methods x seeds matrix");
    run->add_option("--config", config_path, "JSON config file")->required();
    run->add_option("--seed", seed, "run only this seed");
    run->add_option("--method", method, "run only this method");
    run->add_option("--out", out_dir, "output directory (default: runs)");

    CLI::App* report = app.add_subcommand("report", "aggregate result.json files");
    report->add_option("--in", in_dir, "directory holding run cells")->required();

    app.add_subcommand("selftest", "fast numeric invariant battery");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, method, seed);
        if (report->parsed()) return cmd_report(in_dir);
        return cmd_selftest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
