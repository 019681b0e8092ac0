// Command-line front door: train / relax / grid / bench / inspect.
// Exit codes: 0 ok, 1 config or IO error, 2 divergence, 3 degenerate
// pruning, 4 relaxation-ordering violation.
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spr/checkpoint.hpp"
#include "spr/config.hpp"
#include "spr/fsio.hpp"
#include "spr/pipeline.hpp"
#include "spr/relax.hpp"
#include "spr/rng.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void write_json(const std::string& path, const json& j) {
    spr::atomic_write_file(path, j.dump(2) + "\n");
}

void emit_resolved_config(const spr::ToolConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    spr::atomic_write_file(cfg.out_dir + "/resolved_config.ini",
                           spr::resolved_config_text(cfg));
}

/// Trains the unregularized reference that anchors accuracy and supplies the
/// per-layer weight bounds. Shares the starting parameters with the SPR run.
spr::Network train_reference(const spr::Network& init, const spr::Dataset& train,
                             const spr::Dataset& test, const spr::PipelineConfig& pc,
                             spr::RunRecord* rec_out) {
    spr::TrainConfig rc = pc.phase1;
    rc.phase = spr::Phase::baseline;
    rc.reg = spr::RegKind::none;
    rc.spr = spr::SprParams{0.0, 0.0};
    spr::Network ref = init;
    spr::RunRecord rec = spr::train_baseline(ref, train, test, rc);
    if (rec_out != nullptr) *rec_out = std::move(rec);
    return ref;
}

int cmd_train(const spr::ToolConfig& cfg) {
    emit_resolved_config(cfg);
    auto [train, test] = spr::build_datasets(cfg);
    spr::Network net = spr::build_model(cfg, train);
    spr::init_params(net, cfg.seed);
    spr::PipelineConfig pc = spr::build_pipeline_config(cfg);

    if (cfg.mode == "baseline") {
        spr::TrainConfig bc = pc.phase1;
        bc.phase = spr::Phase::baseline;
        if (bc.reg == spr::RegKind::spr) {
            std::fprintf(stderr, "note: mode=baseline trains without the spr penalty; "
                                 "set spr.reg to l2/l1/group_lasso for a comparison run\n");
            bc.reg = spr::RegKind::none;
        }
        spr::EntityPartition part = spr::build_filter_partition(net, pc.policy);
        spr::RunRecord rec = spr::train_baseline(net, train, test, bc, &part);
        write_json(cfg.out_dir + "/baseline_run.json", spr::run_record_to_json(rec));
        std::printf("baseline: train %.2f%%  test %.2f%%\n", rec.final_train_acc,
                    rec.final_test_acc);
        return 0;
    }

    if (cfg.mode == "phase1") {
        spr::EntityPartition part = spr::build_filter_partition(net, pc.policy);
        if (pc.phase1.reg == spr::RegKind::spr && pc.phase1.spr.lambda > 0.0) {
            spr::Network ref = train_reference(net, train, test, pc, nullptr);
            spr::assign_bounds(part, spr::estimate_layer_bounds(ref, pc.policy));
        }
        spr::RunRecord rec = spr::train_phase1(net, part, train, test, pc.phase1);
        write_json(cfg.out_dir + "/phase1_run.json", spr::run_record_to_json(rec));
        spr::atomic_write_file(cfg.out_dir + "/entity_diag.csv",
                               spr::diagnostics_csv(spr::penalty_diagnostics(
                                   net, part, pc.phase1.spr.alpha)));
        std::printf("phase1: train %.2f%%  test %.2f%%\n", rec.final_train_acc,
                    rec.final_test_acc);
        return 0;
    }

    // two_phase
    spr::RunRecord ref_rec;
    spr::Network ref = train_reference(net, train, test, pc, &ref_rec);
    spr::save_checkpoint(cfg.out_dir + "/baseline_final.sprc", ref,
                         json{{"phase", "baseline"}, {"final_test_acc", ref_rec.final_test_acc}});
    spr::PipelineResult res = spr::run_two_phase(net, ref, train, test, pc);

    write_json(cfg.out_dir + "/phase1_run.json", spr::run_record_to_json(res.phase1));
    write_json(cfg.out_dir + "/phase2_run.json", spr::run_record_to_json(res.phase2));
    spr::atomic_write_file(cfg.out_dir + "/report.csv", spr::report_csv(res.report));
    write_json(cfg.out_dir + "/report.json", spr::report_to_json(res.report));
    write_json(cfg.out_dir + "/summary.json",
               json{{"schema", "spr.summary.v1"},
                    {"baseline_acc", ref_rec.final_test_acc},
                    {"acc_after_phase1", res.acc_after_phase1},
                    {"acc_after_prune", res.acc_after_prune},
                    {"acc_final", res.acc_final},
                    {"pruned_params", res.report.pruned_params},
                    {"total_prunable", res.report.total_prunable},
                    {"pruned_pct", res.report.pruned_pct}});
    std::printf("two_phase: baseline %.2f%%  phase1 %.2f%%  pruned %zu/%zu (%.2f%%)  "
                "after prune %.2f%%  final %.2f%%\n",
                ref_rec.final_test_acc, res.acc_after_phase1, res.report.pruned_params,
                res.report.total_prunable, res.report.pruned_pct, res.acc_after_prune,
                res.acc_final);
    return 0;
}

int cmd_relax(const spr::ToolConfig& cfg) {
    emit_resolved_config(cfg);
    std::vector<spr::BatchRow> rows;
    if (!cfg.relax_instance.empty()) {
        const spr::MipInstance inst =
            spr::instance_from_json(json::parse(spr::read_file(cfg.relax_instance)));
        const spr::RelaxationResult r = spr::verify_ordering(inst, cfg.relax_tol);
        spr::BatchRow row;
        row.seed = 0;
        row.N = inst.num_groups();
        row.n = inst.n;
        row.v_bigm = r.v_bigm;
        row.v_pr = r.v_pr;
        row.v_int = r.v_int;
        row.gap_bigm = r.gap_bigm;
        row.gap_pr = r.gap_pr;
        row.pr_tighter = r.pr_tighter;
        row.joint_dev = std::abs(r.v_pr - r.v_joint);
        rows.push_back(row);
    } else {
        if (cfg.relax_count < 1) throw spr::ConfigError("relax.count must be >= 1");
        rows = spr::run_relax_batch(cfg.seed, static_cast<std::size_t>(cfg.relax_count),
                                    cfg.relax_tol, cfg.threads);
    }
    spr::atomic_write_file(cfg.out_dir + "/relax.csv", spr::batch_csv(rows));

    std::size_t tighter = 0;
    double mean_bigm = 0.0;
    double mean_pr = 0.0;
    for (const spr::BatchRow& r : rows) {
        tighter += r.pr_tighter ? 1 : 0;
        mean_bigm += r.gap_bigm;
        mean_pr += r.gap_pr;
    }
    mean_bigm /= static_cast<double>(rows.size());
    mean_pr /= static_cast<double>(rows.size());
    std::printf("relax: %zu instances, ordering holds on all; pr gap < big-M gap on %zu "
                "(mean gaps %.6f vs %.6f)\n",
                rows.size(), tighter, mean_pr, mean_bigm);
    return 0;
}

int cmd_grid(const spr::ToolConfig& cfg) {
    emit_resolved_config(cfg);
    auto [train, test] = spr::build_datasets(cfg);
    const spr::Network proto = spr::build_model(cfg, train);
    const spr::PipelineConfig pc = spr::build_pipeline_config(cfg);
    const spr::GridOutcome out = spr::grid_search(cfg.grid_lambdas, cfg.grid_alphas, proto,
                                                  train, test, pc, cfg.threads);

    const std::string csv = spr::grid_csv(out);
    spr::atomic_write_file(cfg.out_dir + "/grid.csv", csv);
    json cells = json::array();
    std::size_t ok_count = 0;
    for (const spr::GridCell& c : out.cells) {
        ok_count += c.ok ? 1 : 0;
        cells.push_back(json{{"lambda", c.lambda},
                             {"alpha", c.alpha},
                             {"lr0", c.lr0},
                             {"ok", c.ok},
                             {"error", c.error},
                             {"acc_after_prune", c.acc_after_prune},
                             {"acc_final", c.acc_final},
                             {"pruned_params", c.pruned_params},
                             {"pruned_pct", c.pruned_pct}});
        if (!c.ok)
            std::fprintf(stderr, "grid cell (lambda=%g, alpha=%g) failed: %s\n", c.lambda,
                         c.alpha, c.error.c_str());
    }
    write_json(cfg.out_dir + "/grid.json",
               json{{"schema", "spr.grid.v1"},
                    {"baseline_acc", out.baseline_acc},
                    {"cells", std::move(cells)}});
    std::fputs(csv.c_str(), stdout);
    if (ok_count == 0) {
        std::fprintf(stderr, "error: every grid cell failed\n");
        return 1;
    }
    return 0;
}

int cmd_bench(const spr::ToolConfig& cfg) {
    emit_resolved_config(cfg);
    if (cfg.bench_epochs < 1) throw spr::ConfigError("bench.epochs must be >= 1");
    auto [train, test] = spr::build_datasets(cfg);
    spr::Network init = spr::build_model(cfg, train);
    spr::init_params(init, cfg.seed);
    const spr::PipelineConfig pc = spr::build_pipeline_config(cfg);

    spr::EntityPartition part = spr::build_filter_partition(init, pc.policy);

    // Plain run first: lambda = 0 skips the penalty code path entirely, and
    // the trained result doubles as the bounds reference for the timed run.
    spr::TrainConfig plain_cfg = pc.phase1;
    plain_cfg.epochs = cfg.bench_epochs;
    plain_cfg.spr = spr::SprParams{0.0, pc.phase1.spr.alpha};
    plain_cfg.out_dir.clear();
    spr::Network plain_net = init;
    const spr::RunRecord plain = spr::train_phase1(plain_net, part, train, test, plain_cfg);

    spr::assign_bounds(part, spr::estimate_layer_bounds(plain_net, pc.policy));
    spr::TrainConfig spr_cfg = pc.phase1;
    spr_cfg.epochs = cfg.bench_epochs;
    spr_cfg.out_dir.clear();
    spr::Network spr_net = init;
    const spr::RunRecord with = spr::train_phase1(spr_net, part, train, test, spr_cfg);

    auto mean_seconds = [](const spr::RunRecord& rec) {
        double s = 0.0;
        for (const spr::EpochStats& es : rec.epochs) s += es.seconds;
        return s / static_cast<double>(rec.epochs.size());
    };
    auto losses = [](const spr::RunRecord& rec) {
        std::vector<double> out;
        for (const spr::EpochStats& es : rec.epochs) out.push_back(es.train_loss);
        return out;
    };
    const double plain_mean = mean_seconds(plain);
    const double spr_mean = mean_seconds(with);
    spr::require(plain_mean > 0.0, "bench: plain epochs completed in zero measured time");
    const double ratio = spr_mean / plain_mean;

    write_json(cfg.out_dir + "/bench.json",
               json{{"schema", "spr.bench.v1"},
                    {"epochs", cfg.bench_epochs},
                    {"lambda", pc.phase1.spr.lambda},
                    {"alpha", pc.phase1.spr.alpha},
                    {"plain_mean_s", plain_mean},
                    {"spr_mean_s", spr_mean},
                    {"ratio", ratio},
                    {"plain_losses", losses(plain)},
                    {"spr_losses", losses(with)}});
    std::printf("bench: plain %.4f s/epoch, spr %.4f s/epoch, ratio %.3f\n", plain_mean,
                spr_mean, ratio);
    return 0;
}

int cmd_inspect(const std::string& checkpoint_path) {
    const spr::LoadedCheckpoint lc = spr::load_checkpoint(checkpoint_path);
    const spr::Network& net = lc.net;

    spr::PartitionPolicy policy;
    spr::EntityPartition part = spr::build_filter_partition(net, policy);
    spr::require(!part.entities.empty(), "inspect: checkpoint has no prunable entities");

    double alpha = 0.3;
    if (lc.header.contains("extra") && lc.header["extra"].contains("alpha") &&
        lc.header["extra"]["alpha"].is_number()) {
        alpha = lc.header["extra"]["alpha"].get<double>();
    } else {
        std::fprintf(stderr, "note: checkpoint stores no alpha; diagnostics use 0.3\n");
    }

    // Per-layer bounds from the checkpoint itself; a fully-zeroed layer gets
    // a unit bound so its diagnostics stay well defined.
    const std::vector<double> w = spr::get_params(net);
    std::map<int, double> bounds;
    for (const spr::Entity& e : part.entities) {
        double& m = bounds[e.layer_id];
        for (std::size_t j : e.weight_indices) m = std::max(m, std::abs(w[j]));
    }
    for (auto& [layer, m] : bounds)
        if (m == 0.0) m = 1.0;
    spr::assign_bounds(part, bounds);

    struct LayerStat {
        std::size_t entities = 0;
        std::size_t pruned = 0;
        std::size_t params = 0;
        std::size_t zeros = 0;
    };
    std::map<int, LayerStat> stats;
    for (const spr::Entity& e : part.entities) {
        LayerStat& ls = stats[e.layer_id];
        ls.entities += 1;
        ls.params += e.u;
        double max_abs = 0.0;
        std::size_t zeros = 0;
        for (std::size_t j : e.weight_indices) {
            max_abs = std::max(max_abs, std::abs(w[j]));
            zeros += w[j] == 0.0 ? 1 : 0;
        }
        ls.zeros += zeros;
        ls.pruned += max_abs == 0.0 ? 1 : 0;
    }

    std::printf("# schema=spr.inspect.v1\n");
    std::printf("layer,kind,entities,pruned_entities,prunable_params,zero_params,zero_pct\n");
    LayerStat total;
    for (const auto& [layer, ls] : stats) {
        total.entities += ls.entities;
        total.pruned += ls.pruned;
        total.params += ls.params;
        total.zeros += ls.zeros;
        std::printf("%d,%s,%zu,%zu,%zu,%zu,%.2f\n", layer,
                    spr::layer_kind_name(net.layers[static_cast<std::size_t>(layer)].kind).c_str(),
                    ls.entities, ls.pruned, ls.params, ls.zeros,
                    100.0 * static_cast<double>(ls.zeros) / static_cast<double>(ls.params));
    }
    std::printf("total,,%zu,%zu,%zu,%zu,%.2f\n", total.entities, total.pruned, total.params,
                total.zeros,
                100.0 * static_cast<double>(total.zeros) / static_cast<double>(total.params));
    std::printf("\n");
    std::fputs(spr::diagnostics_csv(spr::penalty_diagnostics(net, part, alpha)).c_str(),
               stdout);
    return 0;
}

template <typename F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const spr::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const spr::DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const spr::DegeneratePruningError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const spr::OrderingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structured-sparsity training and pruning toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string checkpoint_path;

    CLI::App* train = app.add_subcommand(
        "train", "baseline, phase-1, or full two-phase training per the config");
    train->add_option("config", config_path, "config file path")->required();

    CLI::App* relax = app.add_subcommand(
        "relax", "verify the relaxation ordering over a seeded instance batch");
    relax->add_option("config", config_path, "config file path")->required();

    CLI::App* grid = app.add_subcommand(
        "grid", "two-phase pipeline over a lambda x alpha grid, one shared baseline");
    grid->add_option("config", config_path, "config file path")->required();

    CLI::App* bench = app.add_subcommand(
        "bench", "time epochs with and without the penalty on identical data and seed");
    bench->add_option("config", config_path, "config file path")->required();

    CLI::App* inspect = app.add_subcommand(
        "inspect", "print per-layer pruning statistics and entity diagnostics");
    inspect->add_option("checkpoint", checkpoint_path, "checkpoint (.sprc) path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // usage problems are config errors
    }

    return guarded([&]() -> int {
        if (inspect->parsed()) return cmd_inspect(checkpoint_path);
        const spr::ToolConfig cfg = spr::load_config(config_path);
        if (train->parsed()) return cmd_train(cfg);
        if (relax->parsed()) return cmd_relax(cfg);
        if (grid->parsed()) return cmd_grid(cfg);
        return cmd_bench(cfg);
    });
}
