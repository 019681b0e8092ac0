#include "spr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "spr/checkpoint.hpp"
#include "spr/common.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

using json = nlohmann::json;

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    double lr = cfg.lr0;
    for (int m : cfg.lr_milestones)
        if (epoch >= m) lr *= cfg.lr_factor;
    return lr;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!is_finite(x)) return false;
    return true;
}

/// Copies rows perm[begin..end) of a rank-2 or rank-4 sample tensor into a
/// fresh batch tensor of the same per-sample shape.
Tensor gather_batch(const Tensor& inputs, const std::vector<std::size_t>& perm,
                    std::size_t begin, std::size_t end) {
    const std::size_t row = inputs.numel() / static_cast<std::size_t>(inputs.shape[0]);
    std::vector<int> shape = inputs.shape;
    shape[0] = static_cast<int>(end - begin);
    Tensor out(shape);
    for (std::size_t i = begin; i < end; ++i)
        std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(perm[i] * row), row,
                    out.data.begin() + static_cast<std::ptrdiff_t>((i - begin) * row));
    return out;
}

/// Adds the regularizer gradient into `g` and returns its value. A null
/// function means no penalty at all: lambda = 0 runs the exact same code as
/// an unregularized run, which is what makes them bit-identical.
using PenaltyFn = std::function<double(const Network&, std::vector<double>&)>;

PenaltyFn make_penalty(const TrainConfig& cfg, const EntityPartition* part) {
    if (cfg.phase == Phase::finetune) {
        // Fine-tuning keeps only a plain lambda*alpha*||w||^2 term over every
        // parameter, biases included: uniform decay preserves the relative
        // scale of logits and biases, so shrinking weights cannot let free
        // biases take over the predictions. Pruned weights are frozen at
        // exactly 0 and contribute nothing.
        const double c = cfg.spr.lambda * cfg.spr.alpha;
        if (c <= 0.0) return {};
        return [c](const Network& net, std::vector<double>& g) {
            const std::vector<double> w = get_params(net);
            double value = 0.0;
            for (std::size_t j = 0; j < w.size(); ++j) {
                value += c * w[j] * w[j];
                g[j] += 2.0 * c * w[j];
            }
            return value;
        };
    }
    if (cfg.reg == RegKind::none || cfg.spr.lambda == 0.0) return {};
    if (cfg.reg == RegKind::spr) {
        require(part != nullptr, "train: spr regularizer needs an entity partition");
        const SprParams params = cfg.spr;
        return [part, params](const Network& net, std::vector<double>& g) {
            AggregateResult ar = aggregate_penalty(net, *part, params);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += ar.grad[j];
            return ar.value;
        };
    }
    const BaselineKind kind = cfg.reg == RegKind::l2  ? BaselineKind::l2
                              : cfg.reg == RegKind::l1 ? BaselineKind::l1
                                                       : BaselineKind::group_lasso;
    if (kind == BaselineKind::group_lasso)
        require(part != nullptr, "train: group-lasso regularizer needs an entity partition");
    static const EntityPartition kEmptyPart;
    const EntityPartition* use = part != nullptr ? part : &kEmptyPart;
    const double lambda = cfg.spr.lambda;
    return [kind, use, lambda](const Network& net, std::vector<double>& g) {
        AggregateResult ar = baseline_penalty(kind, net, *use, lambda);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += ar.grad[j];
        return ar.value;
    };
}

void check_data_matches_net(const Network& net, const Dataset& train, const Dataset& test) {
    train.validate();
    test.validate();
    require(train.classes == test.classes, "train: train/test class counts differ (" +
                                               std::to_string(train.classes) + " vs " +
                                               std::to_string(test.classes) + ")");
    const std::vector<int> sample(train.inputs.shape.begin() + 1, train.inputs.shape.end());
    require(sample == net.input_shape,
            "train: dataset sample shape does not match the network input shape");
    require(net.output_shape() == std::vector<int>{train.classes},
            "train: network emits " + std::to_string(net.output_shape().back()) +
                " scores but the dataset has " + std::to_string(train.classes) + " classes");
}

[[noreturn]] void throw_divergence(const Network& net, const TrainConfig& cfg, int epoch,
                                   std::size_t batch) {
    std::string where = "(not saved: no output directory)";
    if (!cfg.out_dir.empty()) {
        const std::string path = cfg.out_dir + "/diverged_" + phase_name(cfg.phase) + ".sprc";
        try {
            json extra{{"diverged", true},
                       {"phase", phase_name(cfg.phase)},
                       {"epoch", epoch},
                       {"batch", batch}};
            save_checkpoint(path, net, extra);
            where = path;
        } catch (const std::exception& e) {
            where = std::string("(checkpoint save failed: ") + e.what() + ")";
        }
    }
    throw DivergenceError("training diverged: non-finite loss or gradient at epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(batch) +
                          "; last finite state " + where);
}

/// The shared minibatch-SGD loop behind all three phases.
RunRecord train_loop(Network& net, const Dataset& train, const Dataset& test,
                     const TrainConfig& cfg, const EntityPartition* part) {
    cfg.validate();
    check_data_matches_net(net, train, test);
    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

    const PenaltyFn penalty = make_penalty(cfg, part);
    const std::size_t n = train.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t nbatch = (n + bs - 1) / bs;
    const bool images = train.inputs.dim() == 4;

    SgdState state;
    RunRecord rec;
    rec.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
    std::vector<std::size_t> perm(n);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch))).shuffle(perm);

        double loss_sum = 0.0;
        double pen_sum = 0.0;
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t b = 0; b < nbatch; ++b) {
            const std::size_t lo = b * bs;
            const std::size_t hi = std::min(n, lo + bs);
            Tensor batch = gather_batch(train.inputs, perm, lo, hi);
            std::vector<int> labels(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) labels[i - lo] = train.labels[perm[i]];
            if (images && cfg.augment != AugmentPolicy::none)
                batch = augment(batch, cfg.augment, cfg.augment_pad, cfg.seed,
                                static_cast<std::uint64_t>(epoch), b);

            try {
                GradientBundle gb = loss_and_grad(net, batch, labels);
                double pen = 0.0;
                if (penalty) pen = penalty(net, gb.grad);
                gb.loss += pen;
                if (!is_finite(gb.loss) || !all_finite(gb.grad))
                    throw_divergence(net, cfg, epoch, b);
                sgd_momentum_step(net, gb, lr, cfg.momentum, state);
                loss_sum += gb.loss;
                pen_sum += pen;
            } catch (const NumericError&) {
                // A NaN/Inf anywhere in the forward/backward/update step is a
                // blown-up run, not a caller bug.
                throw_divergence(net, cfg, epoch, b);
            }
        }
        const auto t1 = std::chrono::steady_clock::now();

        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        es.train_loss = loss_sum / static_cast<double>(nbatch);
        es.penalty = pen_sum / static_cast<double>(nbatch);
        es.seconds = std::chrono::duration<double>(t1 - t0).count();
        try {
            es.train_acc = evaluate(net, train);
            es.test_acc = evaluate(net, test);
        } catch (const NumericError&) {
            throw_divergence(net, cfg, epoch, nbatch);
        }
        rec.epochs.push_back(es);
    }

    if (!rec.epochs.empty()) {
        rec.final_train_acc = rec.epochs.back().train_acc;
        rec.final_test_acc = rec.epochs.back().test_acc;
    } else {
        rec.final_train_acc = evaluate(net, train);
        rec.final_test_acc = evaluate(net, test);
    }

    if (!cfg.out_dir.empty()) {
        const std::string path = cfg.out_dir + "/" + phase_name(cfg.phase) + "_final.sprc";
        json extra{{"phase", phase_name(cfg.phase)}, {"epochs", cfg.epochs},
                   {"seed", cfg.seed},             {"lambda", cfg.spr.lambda},
                   {"alpha", cfg.spr.alpha},       {"reg", reg_kind_name(cfg.reg)},
                   {"final_test_acc", rec.final_test_acc}};
        save_checkpoint(path, net, extra);
        rec.checkpoint_paths.push_back(path);
    }
    return rec;
}

}  // namespace

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::baseline: return "baseline";
        case Phase::spr: return "spr";
        case Phase::finetune: return "finetune";
    }
    throw Error("unknown phase");
}

Phase phase_from_name(const std::string& name) {
    if (name == "baseline") return Phase::baseline;
    if (name == "spr") return Phase::spr;
    if (name == "finetune") return Phase::finetune;
    throw ConfigError("unknown phase '" + name + "' (baseline, spr, finetune)");
}

std::string reg_kind_name(RegKind k) {
    switch (k) {
        case RegKind::none: return "none";
        case RegKind::spr: return "spr";
        case RegKind::l2: return "l2";
        case RegKind::l1: return "l1";
        case RegKind::group_lasso: return "group_lasso";
    }
    throw Error("unknown regularizer kind");
}

RegKind reg_kind_from_name(const std::string& name) {
    if (name == "none") return RegKind::none;
    if (name == "spr") return RegKind::spr;
    if (name == "l2") return RegKind::l2;
    if (name == "l1") return RegKind::l1;
    if (name == "group_lasso" || name == "group-lasso") return RegKind::group_lasso;
    throw ConfigError("unknown regularizer '" + name +
                      "' (none, spr, l2, l1, group_lasso)");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr0 > 0.0) || !is_finite(lr0)) throw ConfigError("train: lr0 must be > 0");
    if (!(lr_factor > 0.0 && lr_factor < 1.0))
        throw ConfigError("train: lr_factor must lie in (0,1)");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("train: momentum must lie in [0,1)");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
        if (lr_milestones[i] < 1) throw ConfigError("train: lr milestones are 1-based epochs");
        if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
            throw ConfigError("train: lr milestones must be strictly increasing");
    }
    if (!(spr.lambda >= 0.0) || !is_finite(spr.lambda))
        throw ConfigError("train: lambda must be >= 0");
    if (!(spr.alpha >= 0.0 && spr.alpha <= 1.0))
        throw ConfigError("train: alpha must lie in [0,1]");
    if (augment != AugmentPolicy::none && augment_pad < 0)
        throw ConfigError("train: augment_pad must be >= 0");
}

nlohmann::json run_record_to_json(const RunRecord& rec) {
    json epochs = json::array();
    for (const EpochStats& es : rec.epochs)
        epochs.push_back({{"epoch", es.epoch},
                          {"lr", es.lr},
                          {"train_loss", es.train_loss},
                          {"train_acc", es.train_acc},
                          {"test_acc", es.test_acc},
                          {"penalty", es.penalty},
                          {"seconds", es.seconds}});
    return {{"schema", "spr.run_record.v1"},
            {"epochs", std::move(epochs)},
            {"final_train_acc", rec.final_train_acc},
            {"final_test_acc", rec.final_test_acc},
            {"checkpoints", rec.checkpoint_paths}};
}

RunRecord train_phase1(Network& net, const EntityPartition& part, const Dataset& train,
                       const Dataset& test, const TrainConfig& cfg) {
    require(cfg.phase == Phase::spr, "train_phase1: config phase must be 'spr'");
    return train_loop(net, train, test, cfg, &part);
}

RunRecord train_baseline(Network& net, const Dataset& train, const Dataset& test,
                         const TrainConfig& cfg, const EntityPartition* part) {
    require(cfg.phase == Phase::baseline, "train_baseline: config phase must be 'baseline'");
    require(cfg.reg != RegKind::spr,
            "train_baseline: the spr regularizer belongs to train_phase1");
    return train_loop(net, train, test, cfg, part);
}

std::pair<PruneMask, PruneReport> prune_step(Network& net, const EntityPartition& part,
                                             double weight_tol, double entity_frac,
                                             PruneRule rule, bool degenerate_ok) {
    require(!part.entities.empty(), "prune: partition has no entities");
    PruneMask mask = decide_pruning(net, part, weight_tol, entity_frac, rule);
    if (mask.pruned_entity_count() == part.entities.size()) {
        const std::string what = "pruning removed every one of the " +
                                 std::to_string(part.entities.size()) +
                                 " entities; lambda or the thresholds are too aggressive";
        if (!degenerate_ok) throw DegeneratePruningError(what);
        std::fprintf(stderr, "warning: %s\n", what.c_str());
    }
    PruneReport report = make_report(net, part, mask);  // magnitudes before zeroing
    apply_mask(net, mask);
    return {std::move(mask), std::move(report)};
}

RunRecord train_phase2(Network& net, const PruneMask& mask, const Dataset& train,
                       const Dataset& test, const TrainConfig& cfg) {
    require(cfg.phase == Phase::finetune, "train_phase2: config phase must be 'finetune'");
    const std::vector<double> w = get_params(net);
    for (std::size_t j : mask.zero_indices) {
        require(j < w.size(), "train_phase2: prune mask index out of range");
        require(w[j] == 0.0 && net.frozen_at(j),
                "train_phase2: prune mask not applied to the network (index " +
                    std::to_string(j) + " is live); fine-tuning resumes from the "
                    "phase-1 survivors, it never re-initializes");
    }
    RunRecord rec = train_loop(net, train, test, cfg, nullptr);
    const std::vector<double> after = get_params(net);
    for (std::size_t j : mask.zero_indices)
        require(after[j] == 0.0, "train_phase2: a pruned weight moved during fine-tuning");
    return rec;
}

double evaluate(const Network& net, const Dataset& ds) { return evaluate_topk(net, ds, 1); }

double evaluate_topk(const Network& net, const Dataset& ds, int k) {
    ds.validate();
    require(k >= 1 && k <= ds.classes, "evaluate: k must lie in [1, classes]");
    const std::vector<int> sample(ds.inputs.shape.begin() + 1, ds.inputs.shape.end());
    require(sample == net.input_shape,
            "evaluate: dataset sample shape does not match the network input shape");
    const std::size_t n = ds.size();
    require(n > 0, "evaluate: empty dataset");

    std::vector<std::size_t> identity(n);
    std::iota(identity.begin(), identity.end(), std::size_t{0});

    constexpr std::size_t kEvalBatch = 256;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < n; lo += kEvalBatch) {
        const std::size_t hi = std::min(n, lo + kEvalBatch);
        const Tensor scores = forward(net, gather_batch(ds.inputs, identity, lo, hi));
        const int classes = scores.shape[1];
        for (std::size_t i = lo; i < hi; ++i) {
            const int row = static_cast<int>(i - lo);
            const int label = ds.labels[i];
            const double s_label = scores.at2(row, label);
            // Rank under the deterministic order (score desc, class index asc).
            int rank = 0;
            for (int c = 0; c < classes; ++c) {
                const double s = scores.at2(row, c);
                if (s > s_label || (s == s_label && c < label)) ++rank;
            }
            if (rank < k) ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

PipelineResult run_two_phase(const Network& init_net, const Network& reference,
                             const Dataset& train, const Dataset& test,
                             const PipelineConfig& cfg) {
    require(cfg.phase1.phase == Phase::spr, "pipeline: phase1 config must have phase=spr");
    require(cfg.phase2.phase == Phase::finetune,
            "pipeline: phase2 config must have phase=finetune");
    require(reference.param_count() == init_net.param_count(),
            "pipeline: reference network architecture does not match");

    PipelineResult res;
    res.net = init_net;
    EntityPartition part = build_filter_partition(res.net, cfg.policy);
    require(!part.entities.empty(), "pipeline: partition has no prunable entities");
    assign_bounds(part, estimate_layer_bounds(reference, cfg.policy));

    res.phase1 = train_phase1(res.net, part, train, test, cfg.phase1);
    res.acc_after_phase1 = res.phase1.final_test_acc;

    auto [mask, report] = prune_step(res.net, part, cfg.weight_tol, cfg.entity_frac,
                                     cfg.rule, cfg.degenerate_ok);
    res.acc_after_prune = evaluate(res.net, test);
    report.accuracy_before = res.acc_after_phase1;
    report.accuracy_after = res.acc_after_prune;

    res.phase2 = train_phase2(res.net, mask, train, test, cfg.phase2);
    res.acc_final = res.phase2.final_test_acc;
    res.report = std::move(report);
    return res;
}

GridOutcome grid_search(const std::vector<double>& lambdas,
                        const std::vector<double>& alphas, const Network& proto,
                        const Dataset& train, const Dataset& test,
                        const PipelineConfig& base_cfg, int threads) {
    require(!lambdas.empty() && !alphas.empty(), "grid: lambda and alpha axes must be non-empty");
    for (double l : lambdas) require(l >= 0.0 && is_finite(l), "grid: lambda must be >= 0");
    for (double a : alphas) require(a >= 0.0 && a <= 1.0, "grid: alpha must lie in [0,1]");
    base_cfg.phase1.validate();
    base_cfg.phase2.validate();
    require(threads >= 1, "grid: threads must be >= 1");

    // One shared starting point and one shared unregularized reference run:
    // it anchors the accuracy comparison and supplies the per-layer bounds M.
    Network init = proto;
    init_params(init, base_cfg.phase1.seed);
    TrainConfig ref_cfg = base_cfg.phase1;
    ref_cfg.phase = Phase::baseline;
    ref_cfg.reg = RegKind::none;
    ref_cfg.spr = SprParams{0.0, 0.0};
    ref_cfg.out_dir.clear();
    Network ref = init;
    const RunRecord ref_rec = train_baseline(ref, train, test, ref_cfg);

    GridOutcome out;
    out.baseline_acc = ref_rec.final_test_acc;
    out.cells.resize(lambdas.size() * alphas.size());

    auto run_cell = [&](std::size_t ci) {
        GridCell& cell = out.cells[ci];
        cell.lambda = lambdas[ci / alphas.size()];
        cell.alpha = alphas[ci % alphas.size()];
        cell.lr0 = base_cfg.phase1.lr0;
        try {
            PipelineConfig pc = base_cfg;
            pc.phase1.spr = SprParams{cell.lambda, cell.alpha};
            pc.phase2.spr = SprParams{cell.lambda, cell.alpha};
            pc.phase1.out_dir.clear();
            pc.phase2.out_dir.clear();
            const PipelineResult pr = run_two_phase(init, ref, train, test, pc);
            cell.ok = true;
            cell.acc_after_prune = pr.acc_after_prune;
            cell.acc_final = pr.acc_final;
            cell.pruned_params = pr.report.pruned_params;
            cell.pruned_pct = pr.report.pruned_pct;
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    };

    const std::size_t total = out.cells.size();
    if (threads <= 1 || total <= 1) {
        for (std::size_t ci = 0; ci < total; ++ci) run_cell(ci);
    } else {
        const std::size_t nthreads = std::min<std::size_t>(threads, total);
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (std::size_t t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t ci = t; ci < total; ci += nthreads) run_cell(ci);
            });
        for (auto& th : pool) th.join();
    }

    std::sort(out.cells.begin(), out.cells.end(), [](const GridCell& a, const GridCell& b) {
        if (a.ok != b.ok) return a.ok;  // failed cells sink to the bottom
        if (a.ok && a.pruned_pct != b.pruned_pct) return a.pruned_pct > b.pruned_pct;
        if (a.lambda != b.lambda) return a.lambda < b.lambda;
        return a.alpha < b.alpha;
    });
    return out;
}

std::string grid_csv(const GridOutcome& outcome) {
    std::ostringstream os;
    os.precision(17);
    os << "# schema=spr.grid.v1\n";
    os << "# baseline_accuracy=" << outcome.baseline_acc << "\n";
    os << "lr,lambda,alpha,accuracy,pruned_params,pruned_pct\n";
    for (const GridCell& c : outcome.cells) {
        os << c.lr0 << ',' << c.lambda << ',' << c.alpha << ',';
        if (c.ok)
            os << c.acc_final << ',' << c.pruned_params << ',' << c.pruned_pct;
        else
            os << "nan,nan,nan";
        os << '\n';
    }
    return os.str();
}

}  // namespace spr
