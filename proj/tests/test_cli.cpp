// Configuration layer and command-line tool, end to end: parsing, env
// overrides, resolved-config round trips, artifact production, and the
// documented exit codes. The test runner receives the tool binary's path as
// its first positional argument.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spr/checkpoint.hpp"
#include "spr/common.hpp"
#include "spr/config.hpp"
#include "spr/fsio.hpp"
#include "spr/network.hpp"
#include "spr/relax.hpp"
#include "spr/rng.hpp"

using namespace spr;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string g_spr_path;

fs::path scratch_root() {
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() /
                     ("spr_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return root;
}

/// Fresh sub-directory per call so tests never share artifacts.
fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    fs::path p = scratch_root() / (tag + "_" + std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    atomic_write_file(path.string(), text);
}

std::string slurp(const fs::path& path) { return read_file(path.string()); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

/// Runs `spr <args>` with stdout/stderr captured to files.
CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path so = scratch_root() / ("stdout_" + std::to_string(counter));
    const fs::path se = scratch_root() / ("stderr_" + std::to_string(counter));
    ++counter;
    const std::string cmd =
        g_spr_path + " " + args + " > " + so.string() + " 2> " + se.string();
    const int rc = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(so);
    r.err = slurp(se);
    return r;
}

/// Small fast task: 2-D blobs into a one-hidden-layer mlp with prunable rows.
std::string base_ini(const fs::path& out_dir, const std::string& mode = "two_phase") {
    std::ostringstream os;
    os << "[run]\n"
       << "mode = " << mode << "\n"
       << "seed = 5\n"
       << "out_dir = " << out_dir.string() << "\n"
       << "[data]\n"
       << "kind = blobs\n"
       << "train_n = 96\n"
       << "test_n = 48\n"
       << "classes = 3\n"
       << "noise = 0.2\n"
       << "normalize = true\n"
       << "[model]\n"
       << "arch = mlp\n"
       << "hidden = 6\n"
       << "[spr]\n"
       << "lambda = 0.5\n"
       << "alpha = 0.3\n"
       << "[partition]\n"
       << "dense_rows = true\n"
       << "[phase1]\n"
       << "epochs = 3\n"
       << "batch_size = 16\n"
       << "lr0 = 0.05\n"
       << "lr_milestones = 2\n"
       << "[phase2]\n"
       << "epochs = 2\n"
       << "batch_size = 16\n"
       << "lr_milestones = 1\n";
    return os.str();
}

/// setenv with automatic restore, so env-override tests cannot leak.
class EnvGuard {
  public:
    EnvGuard(const char* name, const char* value) : name_(name) {
        if (const char* old = std::getenv(name)) old_ = old;
        ::setenv(name, value, 1);
    }
    ~EnvGuard() {
        if (old_.has_value())
            ::setenv(name_.c_str(), old_->c_str(), 1);
        else
            ::unsetenv(name_.c_str());
    }
    EnvGuard(const EnvGuard&) = delete;
    EnvGuard& operator=(const EnvGuard&) = delete;

  private:
    std::string name_;
    std::optional<std::string> old_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Configuration parsing (in process)
// ---------------------------------------------------------------------------

TEST_CASE("empty config text yields the documented defaults") {
    const ToolConfig cfg = parse_config("", "empty.ini");
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.mode == "two_phase");
    CHECK(cfg.data_kind == "tiny_images");
    CHECK(cfg.train_n == 512);
    CHECK(cfg.classes == 4);
    CHECK(cfg.arch == "convnet_s");
    CHECK(cfg.lambda == 1.0);
    CHECK(cfg.alpha == 0.3);
    CHECK(cfg.weight_tol == 1e-4);
    CHECK(cfg.entity_frac == 0.99);
    CHECK(cfg.phase1_epochs == 60);
    CHECK(cfg.phase1_lr_milestones == std::vector<int>{24, 40, 46, 50});
    // The fine-tune lr sentinel resolves at parse time.
    CHECK(cfg.phase2_lr0 == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(cfg.grid_lambdas == std::vector<double>{0.1, 0.5, 2.0});
    CHECK(cfg.grid_alphas == std::vector<double>{0.1, 0.3, 0.7});
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("sections, dotted keys, comments, booleans and lists all parse") {
    const std::string text =
        "# leading comment\n"
        "[run]\n"
        "seed = 42\n"
        "threads = 2   # trailing comment\n"
        "[data]\n"
        "kind = rings ; semicolon comment\n"
        "normalize = off\n"
        "phase1.epochs = 7\n"  // dotted key ignores the ambient section
        "[phase1]\n"
        "lr_milestones = 2, 4 ,6\n"
        "[grid]\n"
        "lambdas = 0.25,1.5\n"
        "[partition]\n"
        "dense_rows = yes\n"
        "conv_filters = 0\n";
    const ToolConfig cfg = parse_config(text, "t.ini");
    CHECK(cfg.seed == 42);
    CHECK(cfg.threads == 2);
    CHECK(cfg.data_kind == "rings");
    CHECK(cfg.normalize_data == false);
    CHECK(cfg.phase1_epochs == 7);
    CHECK(cfg.phase1_lr_milestones == std::vector<int>{2, 4, 6});
    CHECK(cfg.grid_lambdas == std::vector<double>{0.25, 1.5});
    CHECK(cfg.dense_rows == true);
    CHECK(cfg.conv_filters == false);
}

TEST_CASE("parse errors name the offending key, file and line") {
    auto message_of = [](const std::string& text) {
        try {
            parse_config(text, "bad.ini");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("<no error>");
    };

    const std::string unknown = message_of("[data]\nkind = blobs\nnope = 3\n");
    CHECK(unknown.find("unknown config key 'data.nope'") != std::string::npos);
    CHECK(unknown.find("(bad.ini:3)") != std::string::npos);

    CHECK(message_of("[data\nkind = blobs\n").find("malformed section header") !=
          std::string::npos);
    CHECK(message_of("kind = blobs\n").find("outside any section") != std::string::npos);
    CHECK(message_of("[phase1]\nepochs\n").find("expected 'key = value'") !=
          std::string::npos);

    const std::string bad_int = message_of("[phase1]\nepochs = soon\n");
    CHECK(bad_int.find("cannot parse 'soon' as an integer") != std::string::npos);
    CHECK(message_of("[phase1]\nepochs = 99999999999\n").find("32-bit") !=
          std::string::npos);
    CHECK(message_of("[data]\nnoise = 0.1x\n").find("as a real number") !=
          std::string::npos);
    CHECK(message_of("[data]\nnormalize = maybe\n").find("as a boolean") !=
          std::string::npos);
}

TEST_CASE("resolved config text reparses to the identical configuration") {
    ToolConfig cfg;
    cfg.out_dir = "/tmp/some where";  // spaces survive (comments need preceding blank)
    cfg.seed = 987654321098765ULL;
    cfg.noise = 1.0 / 3.0;  // needs all 17 digits
    cfg.lambda = 1e-9;
    cfg.hidden = {12, 5, 3};
    cfg.grid_alphas = {0.1, 2.0 / 3.0};
    cfg.phase2_lr0 = 0.004;
    cfg.normalize_data = false;
    cfg.prune_rule = "max_abs_below";

    const std::string text = resolved_config_text(cfg);
    CHECK(text.find("[phase1]") != std::string::npos);
    CHECK(text.find("# ") != std::string::npos);  // help comments present

    const ToolConfig again = parse_config(text, "resolved.ini");
    CHECK(resolved_config_text(again) == text);
    CHECK(again.seed == cfg.seed);
    CHECK(again.noise == cfg.noise);  // bitwise, thanks to 17-digit rendering
    CHECK(again.lambda == cfg.lambda);
    CHECK(again.hidden == cfg.hidden);
    CHECK(again.grid_alphas == cfg.grid_alphas);
    CHECK(again.out_dir == cfg.out_dir);
    CHECK(again.prune_rule == cfg.prune_rule);
}

TEST_CASE("environment variables override parsed values by schema name") {
    ToolConfig cfg = parse_config("[phase1]\nepochs = 3\n", "env.ini");
    REQUIRE(cfg.phase1_epochs == 3);
    {
        EnvGuard e1("SPR_PHASE1_EPOCHS", "9");
        EnvGuard e2("SPR_DATA_KIND", "rings");
        EnvGuard e3("SPR_GRID_LAMBDAS", "1,2");
        apply_env_overrides(cfg);
    }
    CHECK(cfg.phase1_epochs == 9);
    CHECK(cfg.data_kind == "rings");
    CHECK(cfg.grid_lambdas == std::vector<double>{1.0, 2.0});

    ToolConfig cfg2;
    EnvGuard bad("SPR_PHASE1_EPOCHS", "banana");
    try {
        apply_env_overrides(cfg2);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("env SPR_PHASE1_EPOCHS") != std::string::npos);
    }
}

TEST_CASE("validation rejects unknown enum values and bad ranges") {
    auto reject = [](void (*mutate)(ToolConfig&)) {
        ToolConfig cfg;
        mutate(cfg);
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    };
    reject(+[](ToolConfig& c) { c.mode = "three_phase"; });
    reject(+[](ToolConfig& c) { c.data_kind = "csv"; });
    reject(+[](ToolConfig& c) { c.arch = "transformer"; });
    reject(+[](ToolConfig& c) { c.reg = "l3"; });
    reject(+[](ToolConfig& c) { c.prune_rule = "below"; });
    reject(+[](ToolConfig& c) { c.augment = "mixup"; });
    reject(+[](ToolConfig& c) { c.threads = 0; });
    reject(+[](ToolConfig& c) { c.weight_tol = 0.0; });
    reject(+[](ToolConfig& c) { c.entity_frac = 0.0; });
    reject(+[](ToolConfig& c) { c.entity_frac = 1.5; });
    reject(+[](ToolConfig& c) { c.lambda = -1.0; });
    reject(+[](ToolConfig& c) { c.alpha = 1.5; });
}

TEST_CASE("fine-tune learning rate sentinel resolves to a tenth of phase 1") {
    const ToolConfig a = parse_config("[phase1]\nlr0 = 0.2\n", "a.ini");
    CHECK(a.phase2_lr0 == doctest::Approx(0.02).epsilon(1e-12));

    const ToolConfig b = parse_config("[phase1]\nlr0 = 0.2\n[phase2]\nlr0 = 0.004\n", "b.ini");
    CHECK(b.phase2_lr0 == 0.004);

    const PipelineConfig pc = build_pipeline_config(b);
    CHECK(pc.phase2.lr0 == 0.004);
    CHECK(pc.phase1.seed == b.seed);
    CHECK(pc.phase2.seed == derive_seed(b.seed, "finetune"));
    CHECK(pc.phase2.phase == Phase::finetune);
}

TEST_CASE("dataset and model builders reject inconsistent requests") {
    ToolConfig idx;
    idx.data_kind = "idx";
    CHECK_THROWS_AS(build_datasets(idx), ConfigError);

    ToolConfig blobs;
    blobs.data_kind = "blobs";
    blobs.train_n = 32;
    blobs.test_n = 16;
    blobs.classes = 3;
    auto [ptrain, ptest] = build_datasets(blobs);
    blobs.arch = "convnet_s";
    CHECK_THROWS_AS(build_model(blobs, ptrain), ConfigError);  // points are not images
    blobs.arch = "mlp";
    CHECK(build_model(blobs, ptrain).param_count() > 0);

    ToolConfig imgs;
    imgs.data_kind = "tiny_images";
    imgs.train_n = 16;
    imgs.test_n = 8;
    auto [itrain, itest] = build_datasets(imgs);
    imgs.arch = "mlp";
    CHECK_THROWS_AS(build_model(imgs, itrain), ConfigError);  // images are not points

    ToolConfig zero;
    zero.data_kind = "blobs";
    zero.train_n = 0;
    CHECK_THROWS_AS(build_datasets(zero), ConfigError);
}

// ---------------------------------------------------------------------------
// Command-line tool (subprocess)
// ---------------------------------------------------------------------------

TEST_CASE("two-phase training writes the full artifact set") {
    const fs::path dir = fresh_dir("two_phase");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out"));

    const CliResult r = run_cli("train " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("two_phase:") != std::string::npos);

    const fs::path out = dir / "out";
    for (const char* name : {"resolved_config.ini", "baseline_final.sprc",
                             "phase1_run.json", "phase2_run.json", "report.csv",
                             "report.json", "summary.json"})
        CHECK_MESSAGE(fs::exists(out / name), name);

    const json p1 = json::parse(slurp(out / "phase1_run.json"));
    CHECK(p1.at("schema") == "spr.run_record.v1");
    CHECK(p1.at("epochs").size() == 3);
    const json p2 = json::parse(slurp(out / "phase2_run.json"));
    CHECK(p2.at("epochs").size() == 2);

    const json summary = json::parse(slurp(out / "summary.json"));
    CHECK(summary.at("schema") == "spr.summary.v1");
    for (const char* key : {"baseline_acc", "acc_after_phase1", "acc_after_prune",
                            "acc_final", "pruned_pct"}) {
        const double v = summary.at(key).get<double>();
        CHECK(v >= 0.0);
        CHECK(v <= 100.0);
    }
    CHECK(summary.at("total_prunable").get<int>() > 0);

    const auto report_lines = lines_of(slurp(out / "report.csv"));
    REQUIRE(report_lines.size() >= 2);
    CHECK(report_lines[0] == "# schema=spr.prune_report.v1");
    CHECK(report_lines[1] == "entity_id,layer,u,max_abs,frac_below,verdict");

    // The resolved config reproduces the run's effective settings.
    const ToolConfig resolved = parse_config(slurp(out / "resolved_config.ini"), "r.ini");
    CHECK(resolved.mode == "two_phase");
    CHECK(resolved.phase1_epochs == 3);
    CHECK(resolved.hidden == std::vector<int>{6});
}

TEST_CASE("baseline mode disables the penalty and says so") {
    const fs::path dir = fresh_dir("baseline");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out", "baseline"));

    const CliResult r = run_cli("train " + ini.string());
    REQUIRE(r.code == 0);
    CHECK(r.out.find("baseline:") != std::string::npos);
    CHECK(r.err.find("mode=baseline trains without the spr penalty") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "baseline_run.json"));
    const json rec = json::parse(slurp(dir / "out" / "baseline_run.json"));
    CHECK(rec.at("schema") == "spr.run_record.v1");
    CHECK(rec.at("epochs").size() == 3);
}

TEST_CASE("phase1 mode emits the entity diagnostics table") {
    const fs::path dir = fresh_dir("phase1");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out", "phase1"));

    const CliResult r = run_cli("train " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "out" / "phase1_run.json"));
    const auto diag = lines_of(slurp(dir / "out" / "entity_diag.csv"));
    REQUIRE(diag.size() >= 2 + 6);  // schema + header + one row per hidden unit
    CHECK(diag[0] == "# schema=spr.entity_diag.v1");
    CHECK(diag[1] == "entity_id,layer,ytilde,regime,z,l2,linf");
}

TEST_CASE("usage problems and bad configs exit with code 1") {
    CHECK(run_cli("").code == 1);                       // missing subcommand
    CHECK(run_cli("explode now").code == 1);            // unknown subcommand
    CHECK(run_cli("train").code == 1);                  // missing config argument
    CHECK(run_cli("inspect /nonexistent.sprc").code == 1);

    const CliResult missing = run_cli("train /nonexistent/cfg.ini");
    CHECK(missing.code == 1);
    CHECK(missing.err.find("config file not found") != std::string::npos);

    const fs::path dir = fresh_dir("badkey");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out") + "[prune]\nsharpness = 11\n");
    const CliResult bad = run_cli("train " + ini.string());
    CHECK(bad.code == 1);
    CHECK(bad.err.find("unknown config key 'prune.sharpness'") != std::string::npos);
}

TEST_CASE("divergent training exits 2 and leaves a breadcrumb checkpoint") {
    const fs::path dir = fresh_dir("diverge");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out") + "[phase1]\nlr0 = 1e9\n");

    const CliResult r = run_cli("train " + ini.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("training diverged") != std::string::npos);
    bool found_dump = false;
    for (const auto& e : fs::directory_iterator(dir / "out"))
        if (e.path().filename().string().rfind("diverged_", 0) == 0) found_dump = true;
    CHECK(found_dump);
}

TEST_CASE("pruning away every entity exits 3 unless explicitly allowed") {
    const fs::path dir = fresh_dir("degenerate");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out") + "[prune]\nweight_tol = 1000000\n");

    const CliResult r = run_cli("train " + ini.string());
    CHECK(r.code == 3);
    CHECK(r.err.find("pruning removed every") != std::string::npos);

    const fs::path dir2 = fresh_dir("degenerate_ok");
    const fs::path ini2 = dir2 / "cfg.ini";
    write_text(ini2, base_ini(dir2 / "out") +
                         "[prune]\nweight_tol = 1000000\ndegenerate_ok = true\n");
    const CliResult ok = run_cli("train " + ini2.string());
    CAPTURE(ok.err);
    REQUIRE(ok.code == 0);
    const json summary = json::parse(slurp(dir2 / "out" / "summary.json"));
    CHECK(summary.at("pruned_pct").get<double>() == 100.0);
}

TEST_CASE("SPR_ environment overrides reach the child process run") {
    const fs::path dir = fresh_dir("envrun");
    const fs::path ini = dir / "cfg.ini";
    const fs::path moved = dir / "moved_out";
    write_text(ini, base_ini(dir / "out"));

    EnvGuard e1("SPR_PHASE1_EPOCHS", "1");
    EnvGuard e2("SPR_RUN_OUT_DIR", moved.string().c_str());
    const CliResult r = run_cli("train " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);

    // Artifacts land in the overridden directory with the overridden epochs.
    CHECK(!fs::exists(dir / "out" / "summary.json"));
    const json p1 = json::parse(slurp(moved / "phase1_run.json"));
    CHECK(p1.at("epochs").size() == 1);
    const ToolConfig resolved = parse_config(slurp(moved / "resolved_config.ini"), "r.ini");
    CHECK(resolved.phase1_epochs == 1);
    CHECK(resolved.out_dir == moved.string());
}

TEST_CASE("relax batch mode writes one verified row per instance") {
    const fs::path dir = fresh_dir("relax");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini,
               "[run]\nseed = 11\nout_dir = " + (dir / "out").string() +
                   "\n[relax]\ncount = 3\ntol = 1e-6\n");

    const CliResult r = run_cli("relax " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("relax: 3 instances") != std::string::npos);

    const auto lines = lines_of(slurp(dir / "out" / "relax.csv"));
    REQUIRE(lines.size() == 2 + 3);  // schema comment + header + three rows
    CHECK(lines[0] == "# schema=spr.relax_batch.v1");
    CHECK(lines[1] == "seed,N,n,v_bigm,v_pr,v_int,gap_bigm,gap_pr,pr_tighter");
}

TEST_CASE("relax single-instance mode reproduces the hand-worked values") {
    // One weight, one group: least-squares fit of w to target 1 with lambda=1,
    // alpha=0.5, M=2. Every relaxation value is known in closed form.
    MipInstance inst;
    inst.m = 1;
    inst.n = 1;
    inst.A = {1.0};
    inst.b = {1.0};
    inst.loss = LossKind::least_squares;
    inst.groups = {{0}};
    inst.lambda = 1.0;
    inst.alpha = 0.5;
    inst.M = 2.0;

    const fs::path dir = fresh_dir("relax_one");
    const fs::path inst_path = dir / "instance.json";
    write_text(inst_path, instance_to_json(inst).dump(2));
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, "[run]\nout_dir = " + (dir / "out").string() +
                        "\n[relax]\ninstance = " + inst_path.string() + "\n");

    const CliResult r = run_cli("relax " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);

    const auto lines = lines_of(slurp(dir / "out" / "relax.csv"));
    REQUIRE(lines.size() == 3);
    // seed,N,n,v_bigm,v_pr,v_int,...
    std::istringstream row(lines[2]);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 9);
    CHECK(std::stod(fields[3]) == doctest::Approx(47.0 / 96.0).epsilon(1e-6));
    CHECK(std::stod(fields[4]) == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(std::stod(fields[5]) == doctest::Approx(5.0 / 6.0).epsilon(1e-6));
    CHECK(fields[8] == "1");  // perspective gap strictly smaller here
}

TEST_CASE("bench reports a finite per-epoch overhead ratio") {
    const fs::path dir = fresh_dir("bench");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out") + "[bench]\nepochs = 2\n");

    const CliResult r = run_cli("bench " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("bench:") != std::string::npos);

    const json bench = json::parse(slurp(dir / "out" / "bench.json"));
    CHECK(bench.at("schema") == "spr.bench.v1");
    CHECK(bench.at("epochs") == 2);
    CHECK(bench.at("plain_losses").size() == 2);
    CHECK(bench.at("spr_losses").size() == 2);
    const double ratio = bench.at("ratio").get<double>();
    CHECK(ratio > 0.0);
    CHECK(ratio < 1000.0);
}

TEST_CASE("grid mode writes ordered csv and json summaries") {
    const fs::path dir = fresh_dir("grid");
    const fs::path ini = dir / "cfg.ini";
    write_text(ini, base_ini(dir / "out") + "[grid]\nlambdas = 0.5\nalphas = 0.1,0.7\n");

    const CliResult r = run_cli("grid " + ini.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);

    const auto lines = lines_of(slurp(dir / "out" / "grid.csv"));
    REQUIRE(lines.size() >= 3);
    CHECK(lines[0] == "# schema=spr.grid.v1");
    CHECK(lines[1].rfind("# baseline_accuracy=", 0) == 0);
    CHECK(lines[2] == "lr,lambda,alpha,accuracy,pruned_params,pruned_pct");
    CHECK(lines.size() == 3 + 2);  // one row per cell

    const json grid = json::parse(slurp(dir / "out" / "grid.json"));
    CHECK(grid.at("schema") == "spr.grid.v1");
    REQUIRE(grid.at("cells").size() == 2);
    int ok_cells = 0;
    for (const json& c : grid.at("cells")) {
        if (c.at("ok").get<bool>()) ++ok_cells;
        CHECK(c.at("lambda") == 0.5);
    }
    CHECK(ok_cells >= 1);
    // Console output mirrors the csv.
    CHECK(r.out.find("# schema=spr.grid.v1") != std::string::npos);
}

TEST_CASE("inspect prints per-layer statistics for a checkpoint") {
    const fs::path dir = fresh_dir("inspect");
    Network net = make_convnet_s(1, 8, 8, 2, 2, 3);
    init_params(net, 3);
    const fs::path ckpt = dir / "net.sprc";
    save_checkpoint(ckpt.string(), net, json{{"alpha", 0.25}});

    const CliResult r = run_cli("inspect " + ckpt.string());
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("# schema=spr.inspect.v1") != std::string::npos);
    CHECK(r.out.find("layer,kind,entities,pruned_entities,prunable_params,zero_params,"
                     "zero_pct") != std::string::npos);
    CHECK(r.out.find("conv") != std::string::npos);
    CHECK(r.out.find("total,") != std::string::npos);
    // Entity diagnostics ride along, using the checkpoint's stored alpha.
    CHECK(r.out.find("# schema=spr.entity_diag.v1") != std::string::npos);
    CHECK(r.err.find("no alpha") == std::string::npos);
}

int main(int argc, char** argv) {
    std::vector<char*> pass;
    pass.push_back(argv[0]);
    for (int i = 1; i < argc; ++i) {
        if (g_spr_path.empty() && argv[i][0] != '-') {
            g_spr_path = argv[i];
            continue;
        }
        pass.push_back(argv[i]);
    }
    if (g_spr_path.empty()) {
        std::fprintf(stderr, "usage: test_cli <path-to-spr-binary> [doctest args]\n");
        return 1;
    }
    doctest::Context ctx(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}
