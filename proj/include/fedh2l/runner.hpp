// Run orchestration and file outputs. One "cell" = (method, seed) under a
// shared config; each cell gets its own directory containing:
//   metrics.csv   validation metrics history, fixed %.6f formatting so
//                 reruns are byte-identical
//   result.json   summary: final selected-checkpoint test metrics, history,
//                 byte ledger totals, provenance hashes
//   ledger.json   full per-round network accounting
//   node<i>.ckpt  selected checkpoint per node
//   config.json   the resolved configuration
//   pca.csv       optional feature-space snapshot (emit_pca)
// A cell whose result.json already exists is skipped, so an interrupted
// matrix can simply be rerun.
#pragma once

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "baselines.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "hash.hpp"
#include "metrics.hpp"
#include "protocol.hpp"

namespace fedh2l {

inline std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string cell_name(const RunConfig& cfg, const std::string& method,
                             std::uint64_t seed) {
    return method + "_s" + std::to_string(seed) + "_" + hex16(config_hash(cfg)).substr(0, 8);
}

inline void write_metrics_csv(const std::string& path, const RunResult& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    const std::string config = hex16(r.config);
    out << "method,seed,config,node,round,wdp,cdp,acc\n";
    auto row = [&](const std::string& node, int round, double wdp, bool has_cdp, double cdp,
                   double acc) {
        out << r.method << ',' << r.seed << ',' << config << ',' << node << ',' << round << ','
            << fmt6(wdp) << ',' << (has_cdp ? fmt6(cdp) : std::string()) << ',' << fmt6(acc)
            << '\n';
    };
    for (const EvalPoint& ep : r.history) {
        for (const NodeMetrics& nm : ep.val.nodes)
            row(std::to_string(nm.node), ep.round, nm.wdp, nm.has_cdp, nm.cdp, nm.acc);
        row("avg", ep.round, ep.val.avg_wdp, ep.val.has_cdp, ep.val.avg_cdp, ep.val.avg_acc);
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline nlohmann::json metrics_to_json(const MetricsRecord& m) {
    nlohmann::json j;
    j["avg_wdp"] = m.avg_wdp;
    j["avg_acc"] = m.avg_acc;
    if (m.has_cdp) j["avg_cdp"] = m.avg_cdp;
    j["nodes"] = nlohmann::json::array();
    for (const NodeMetrics& nm : m.nodes) {
        nlohmann::json n;
        n["node"] = nm.node;
        n["wdp"] = nm.wdp;
        n["acc"] = nm.acc;
        if (nm.has_cdp) n["cdp"] = nm.cdp;
        j["nodes"].push_back(n);
    }
    return j;
}

inline void write_result_json(const std::string& path, const RunResult& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["config"] = hex16(r.config);
    j["split"] = hex16(r.split_hash);
    j["nodes"] = r.node_count;
    j["history"] = nlohmann::json::array();
    for (const EvalPoint& ep : r.history) {
        nlohmann::json h;
        h["round"] = ep.round;
        h["val"] = metrics_to_json(ep.val);
        h["ce_local"] = ep.ce_local;
        h["kl_mutual"] = ep.kl_mutual;
        h["ce_public"] = ep.ce_public;
        h["conflict_frac"] = ep.conflict_frac;
        j["history"].push_back(h);
    }
    j["final"] = metrics_to_json(r.final_test);
    j["picked_round"] = r.picked_round;
    j["ledger"] = {{"messages", r.ledger.messages},
                   {"payload_bytes", r.ledger.payload_bytes},
                   {"header_bytes", r.ledger.header_bytes}};
    if (r.traj_hash != 0) j["traj_hash"] = hex16(r.traj_hash);
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline void write_ledger_json(const std::string& path, const NetworkLedger& ledger) {
    nlohmann::json j;
    j["messages"] = ledger.messages;
    j["payload_bytes"] = ledger.payload_bytes;
    j["header_bytes"] = ledger.header_bytes;
    j["rounds"] = nlohmann::json::array();
    for (const NetworkLedger::PerRound& pr : ledger.rounds) {
        j["rounds"].push_back({{"round", pr.round},
                               {"messages", pr.messages},
                               {"payload_bytes", pr.payload_bytes},
                               {"header_bytes", pr.header_bytes}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error(path + ": write failed");
}

// Per-node 2-D PCA of last-hidden-layer features over the union of test
// partitions. Rebuilds the domains from the seed, which reproduces the run's
// exact split.
inline void write_pca_csv(const std::string& path, const RunConfig& cfg, std::uint64_t seed,
                          const RunResult& r) {
    const SimData data = build_domains(cfg, seed);
    std::vector<const LabeledSet*> tests;
    for (const DomainDataset& d : data.domains) tests.push_back(&d.test);
    const LabeledSet all = concat(tests);
    std::vector<int> sample_domain;
    for (const DomainDataset& d : data.domains)
        sample_domain.insert(sample_domain.end(), d.test.size(), d.domain_id);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for write");
    out << "node,sample_id,domain,label,pc1,pc2\n";
    for (std::size_t i = 0; i < r.final_models.size(); ++i) {
        const Matrix feats = hidden_features(r.final_models[i], all.x);
        const Matrix pc = pca2d(feats);
        for (std::size_t s = 0; s < all.size(); ++s)
            out << i << ',' << all.ids[s] << ',' << sample_domain[s] << ',' << all.y[s] << ','
                << fmt6(pc(s, 0)) << ',' << fmt6(pc(s, 1)) << '\n';
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

// Runs one cell unless its result.json already exists. Returns the cell dir.
inline std::filesystem::path run_cell(const RunConfig& cfg, const std::string& method,
                                      std::uint64_t seed, const std::filesystem::path& out_dir) {
    const std::filesystem::path dir = out_dir / cell_name(cfg, method, seed);
    if (std::filesystem::exists(dir / "result.json")) return dir;
    std::filesystem::create_directories(dir);
    const RunResult r = run_single(cfg, method, seed);
    write_metrics_csv((dir / "metrics.csv").string(), r);
    write_ledger_json((dir / "ledger.json").string(), r.ledger);
    for (std::size_t i = 0; i < r.final_models.size(); ++i)
        save_params(r.final_models[i], (dir / ("node" + std::to_string(i) + ".ckpt")).string());
    if (cfg.emit_pca) write_pca_csv((dir / "pca.csv").string(), cfg, seed, r);
    {
        std::ofstream out(dir / "config.json");
        out << to_json(cfg).dump(2) << '\n';
    }
    // result.json last: its presence marks the cell complete.
    write_result_json((dir / "result.json").string(), r);
    return dir;
}

// Full methods x seeds matrix. Failed cells are reported and skipped; the
// return value is the number of failures.
inline int run_matrix(const RunConfig& cfg, const std::filesystem::path& out_dir,
                      std::ostream& log = std::cout) {
    validate_config(cfg);
    int failures = 0;
    for (const std::string& method : cfg.methods) {
        for (std::uint64_t seed : cfg.seeds) {
            const std::string name = cell_name(cfg, method, seed);
            try {
                const bool skipped = std::filesystem::exists(out_dir / name / "result.json");
                run_cell(cfg, method, seed, out_dir);
                log << (skipped ? "skip " : "done ") << name << '\n';
            } catch (const std::exception& e) {
                ++failures;
                log << "fail " << name << ": " << e.what() << '\n';
            }
        }
    }
    return failures;
}

// ---- aggregation ----------------------------------------------------------

struct MethodSummary {
    std::string method;
    int runs = 0;
    double acc_mean = 0, acc_sd = 0;
    double wdp_mean = 0, wdp_sd = 0;
    double cdp_mean = 0, cdp_sd = 0;
    bool has_cdp = false;
    double payload_mean = 0;
};

inline std::vector<MethodSummary> aggregate_results(const std::filesystem::path& in_dir) {
    struct Acc {
        std::vector<double> acc, wdp, cdp, payload;
        bool has_cdp = false;
    };
    std::map<std::string, Acc> by_method;
    if (!std::filesystem::is_directory(in_dir))
        throw std::runtime_error(in_dir.string() + ": not a directory");
    for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
        const auto result = entry.path() / "result.json";
        if (!entry.is_directory() || !std::filesystem::exists(result)) continue;
        std::ifstream in(result);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception&) {
            throw std::runtime_error(result.string() + ": malformed result file");
        }
        Acc& a = by_method[j.at("method").get<std::string>()];
        const nlohmann::json& fin = j.at("final");
        a.acc.push_back(fin.at("avg_acc").get<double>());
        a.wdp.push_back(fin.at("avg_wdp").get<double>());
        if (fin.contains("avg_cdp")) {
            a.cdp.push_back(fin.at("avg_cdp").get<double>());
            a.has_cdp = true;
        }
        a.payload.push_back(j.at("ledger").at("payload_bytes").get<double>());
    }
    auto mean_sd = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        m /= v.empty() ? 1.0 : static_cast<double>(v.size());
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        const double sd = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
        return std::make_pair(m, sd);
    };
    std::vector<MethodSummary> out;
    for (const auto& [method, a] : by_method) {
        MethodSummary s;
        s.method = method;
        s.runs = static_cast<int>(a.acc.size());
        std::tie(s.acc_mean, s.acc_sd) = mean_sd(a.acc);
        std::tie(s.wdp_mean, s.wdp_sd) = mean_sd(a.wdp);
        if (a.has_cdp) std::tie(s.cdp_mean, s.cdp_sd) = mean_sd(a.cdp);
        s.has_cdp = a.has_cdp;
        s.payload_mean = mean_sd(a.payload).first;
        out.push_back(s);
    }
    return out;
}

inline void write_report(const std::filesystem::path& in_dir, std::ostream& table) {
    const std::vector<MethodSummary> summaries = aggregate_results(in_dir);
    if (summaries.empty()) throw std::runtime_error("report: no result files under " +
                                                    in_dir.string());
    std::ofstream csv(in_dir / "report.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("report: cannot write report.csv");
    csv << "method,runs,acc_mean,acc_sd,wdp_mean,wdp_sd,cdp_mean,cdp_sd,payload_bytes_mean\n";
    table << "method    runs  acc(mean+/-sd)       wdp(mean+/-sd)       cdp(mean+/-sd)       payload\n";
    for (const MethodSummary& s : summaries) {
        csv << s.method << ',' << s.runs << ',' << fmt6(s.acc_mean) << ',' << fmt6(s.acc_sd) << ','
            << fmt6(s.wdp_mean) << ',' << fmt6(s.wdp_sd) << ','
            << (s.has_cdp ? fmt6(s.cdp_mean) : std::string()) << ','
            << (s.has_cdp ? fmt6(s.cdp_sd) : std::string()) << ','
            << fmt6(s.payload_mean) << '\n';
        char line[160];
        if (s.has_cdp) {
            std::snprintf(line, sizeof line, "%-8s  %4d  %.4f +/- %.4f   %.4f +/- %.4f   %.4f +/- %.4f   %.3g\n",
                          s.method.c_str(), s.runs, s.acc_mean, s.acc_sd, s.wdp_mean, s.wdp_sd,
                          s.cdp_mean, s.cdp_sd, s.payload_mean);
        } else {
            std::snprintf(line, sizeof line, "%-8s  %4d  %.4f +/- %.4f   %.4f +/- %.4f   %-18s   %.3g\n",
                          s.method.c_str(), s.runs, s.acc_mean, s.acc_sd, s.wdp_mean, s.wdp_sd,
                          "-", s.payload_mean);
        }
        table << line;
    }
}

}  // namespace fedh2l
