#include "spr/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <variant>

#include "spr/fsio.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

using BoolField = bool ToolConfig::*;
using IntField = int ToolConfig::*;
using U64Field = std::uint64_t ToolConfig::*;
using DoubleField = double ToolConfig::*;
using StringField = std::string ToolConfig::*;
using IntListField = std::vector<int> ToolConfig::*;
using DoubleListField = std::vector<double> ToolConfig::*;

using Field = std::variant<BoolField, IntField, U64Field, DoubleField, StringField,
                           IntListField, DoubleListField>;

struct KeySpec {
    const char* name;  // "section.key"
    Field field;
    const char* help;
};

/// Single source of truth for the whole schema: parsing, env overrides and
/// the resolved-config write-back all iterate this table.
const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> kSchema = {
        {"run.out_dir", &ToolConfig::out_dir,
         "directory for reports, checkpoints and the resolved config"},
        {"run.threads", &ToolConfig::threads,
         "worker threads for grid cells and relaxation batches"},
        {"run.seed", &ToolConfig::seed,
         "root seed; every random stream derives from (seed, purpose) hashes"},
        {"run.mode", &ToolConfig::mode, "train workflow: baseline | phase1 | two_phase"},

        {"data.kind", &ToolConfig::data_kind,
         "blobs | moons | rings | tiny_images | idx | sprd"},
        {"data.train_n", &ToolConfig::train_n, "synthetic training samples"},
        {"data.test_n", &ToolConfig::test_n, "synthetic test samples"},
        {"data.classes", &ToolConfig::classes, "synthetic class count (moons is 2-class)"},
        {"data.noise", &ToolConfig::noise, "synthetic noise level"},
        {"data.normalize", &ToolConfig::normalize_data,
         "standardize with train-split statistics"},
        {"data.idx_images", &ToolConfig::idx_images, "IDX train images path (kind=idx)"},
        {"data.idx_labels", &ToolConfig::idx_labels, "IDX train labels path (kind=idx)"},
        {"data.idx_test_images", &ToolConfig::idx_test_images,
         "IDX test images path (kind=idx)"},
        {"data.idx_test_labels", &ToolConfig::idx_test_labels,
         "IDX test labels path (kind=idx)"},
        {"data.sprd_train", &ToolConfig::sprd_train, "SPRD train dump path (kind=sprd)"},
        {"data.sprd_test", &ToolConfig::sprd_test, "SPRD test dump path (kind=sprd)"},
        {"data.augment", &ToolConfig::augment, "training augmentation: none | crop_flip"},
        {"data.augment_pad", &ToolConfig::augment_pad, "crop padding in pixels"},

        {"model.arch", &ToolConfig::arch, "mlp | convnet_s"},
        {"model.hidden", &ToolConfig::hidden, "mlp hidden layer widths"},
        {"model.c1", &ToolConfig::c1, "convnet_s first conv channels"},
        {"model.c2", &ToolConfig::c2, "convnet_s second conv channels"},

        {"spr.lambda", &ToolConfig::lambda, "penalty strength (0 disables the penalty)"},
        {"spr.alpha", &ToolConfig::alpha, "l2-vs-sparsity mix in [0,1]"},
        {"spr.reg", &ToolConfig::reg, "regularizer: none | spr | l2 | l1 | group_lasso"},

        {"partition.conv_filters", &ToolConfig::conv_filters,
         "treat each conv output filter as a prunable entity"},
        {"partition.dense_rows", &ToolConfig::dense_rows,
         "also partition dense layers by output row (never the final classifier)"},

        {"prune.weight_tol", &ToolConfig::weight_tol,
         "a weight counts as prunable iff |w| < this (strict)"},
        {"prune.entity_frac", &ToolConfig::entity_frac,
         "entity pruned iff prunable fraction > this (strict)"},
        {"prune.rule", &ToolConfig::prune_rule, "frac_below | max_abs_below"},
        {"prune.degenerate_ok", &ToolConfig::degenerate_ok,
         "downgrade the everything-pruned error to a warning"},

        {"phase1.epochs", &ToolConfig::phase1_epochs, "regularized training epochs"},
        {"phase1.batch_size", &ToolConfig::phase1_batch_size, "minibatch size"},
        {"phase1.lr0", &ToolConfig::phase1_lr0, "initial learning rate"},
        {"phase1.lr_milestones", &ToolConfig::phase1_lr_milestones,
         "1-based epochs at which lr is multiplied by lr_factor"},
        {"phase1.lr_factor", &ToolConfig::phase1_lr_factor, "milestone decay factor in (0,1)"},
        {"phase1.momentum", &ToolConfig::phase1_momentum, "SGD momentum in [0,1)"},

        {"phase2.epochs", &ToolConfig::phase2_epochs, "fine-tune epochs"},
        {"phase2.batch_size", &ToolConfig::phase2_batch_size, "minibatch size"},
        {"phase2.lr0", &ToolConfig::phase2_lr0,
         "fine-tune initial learning rate; negative means phase1.lr0 / 10"},
        {"phase2.lr_milestones", &ToolConfig::phase2_lr_milestones,
         "1-based fine-tune epochs at which lr decays"},
        {"phase2.lr_factor", &ToolConfig::phase2_lr_factor, "milestone decay factor in (0,1)"},
        {"phase2.momentum", &ToolConfig::phase2_momentum, "SGD momentum in [0,1)"},

        {"relax.count", &ToolConfig::relax_count, "random instances in the relaxation batch"},
        {"relax.tol", &ToolConfig::relax_tol, "sandwich-inequality tolerance"},
        {"relax.instance", &ToolConfig::relax_instance,
         "optional instance JSON; set to check one instance instead of a batch"},

        {"grid.lambdas", &ToolConfig::grid_lambdas, "lambda axis of the search grid"},
        {"grid.alphas", &ToolConfig::grid_alphas, "alpha axis of the search grid"},

        {"bench.epochs", &ToolConfig::bench_epochs,
         "epochs per timing run (with and without the penalty)"},
    };
    return kSchema;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Strips a trailing comment: '#' or ';' preceded by whitespace (or at the
/// start). Values in this schema never legitimately contain either.
std::string strip_comment(const std::string& line) {
    for (std::size_t i = 0; i < line.size(); ++i) {
        if ((line[i] == '#' || line[i] == ';') &&
            (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
            return line.substr(0, i);
    }
    return line;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& wanted, const std::string& where) {
    throw ConfigError("config key '" + key + "' " + where + ": cannot parse '" + value +
                      "' as " + wanted);
}

bool parse_bool(const std::string& key, const std::string& v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean (true/false)", where);
}

long long parse_ll(const std::string& key, const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing junk");
        return out;
    } catch (const std::exception&) {
        bad_value(key, v, "an integer", where);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const unsigned long long out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing junk");
        return out;
    } catch (const std::exception&) {
        bad_value(key, v, "an unsigned integer", where);
    }
}

double parse_double(const std::string& key, const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing junk");
        return out;
    } catch (const std::exception&) {
        bad_value(key, v, "a real number", where);
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(v);
    while (std::getline(is, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) parts.push_back(cur);
    }
    return parts;
}

void assign(ToolConfig& cfg, const KeySpec& spec, const std::string& value,
            const std::string& where) {
    const std::string key = spec.name;
    std::visit(
        [&](auto member) {
            using M = std::decay_t<decltype(member)>;
            if constexpr (std::is_same_v<M, BoolField>) {
                cfg.*member = parse_bool(key, value, where);
            } else if constexpr (std::is_same_v<M, IntField>) {
                const long long v = parse_ll(key, value, where);
                if (v < INT32_MIN || v > INT32_MAX) bad_value(key, value, "a 32-bit int", where);
                cfg.*member = static_cast<int>(v);
            } else if constexpr (std::is_same_v<M, U64Field>) {
                cfg.*member = parse_u64(key, value, where);
            } else if constexpr (std::is_same_v<M, DoubleField>) {
                cfg.*member = parse_double(key, value, where);
            } else if constexpr (std::is_same_v<M, StringField>) {
                cfg.*member = value;
            } else if constexpr (std::is_same_v<M, IntListField>) {
                std::vector<int> out;
                for (const std::string& p : split_list(value))
                    out.push_back(static_cast<int>(parse_ll(key, p, where)));
                cfg.*member = std::move(out);
            } else {
                static_assert(std::is_same_v<M, DoubleListField>);
                std::vector<double> out;
                for (const std::string& p : split_list(value))
                    out.push_back(parse_double(key, p, where));
                cfg.*member = std::move(out);
            }
        },
        spec.field);
}

std::string render_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string render(const ToolConfig& cfg, const KeySpec& spec) {
    return std::visit(
        [&](auto member) -> std::string {
            using M = std::decay_t<decltype(member)>;
            if constexpr (std::is_same_v<M, BoolField>) {
                return (cfg.*member) ? "true" : "false";
            } else if constexpr (std::is_same_v<M, IntField>) {
                return std::to_string(cfg.*member);
            } else if constexpr (std::is_same_v<M, U64Field>) {
                return std::to_string(cfg.*member);
            } else if constexpr (std::is_same_v<M, DoubleField>) {
                return render_double(cfg.*member);
            } else if constexpr (std::is_same_v<M, StringField>) {
                return cfg.*member;
            } else if constexpr (std::is_same_v<M, IntListField>) {
                std::string s;
                for (std::size_t i = 0; i < (cfg.*member).size(); ++i)
                    s += (i ? "," : "") + std::to_string((cfg.*member)[i]);
                return s;
            } else {
                std::string s;
                for (std::size_t i = 0; i < (cfg.*member).size(); ++i)
                    s += (i ? "," : "") + render_double((cfg.*member)[i]);
                return s;
            }
        },
        spec.field);
}

const KeySpec* find_key(const std::string& full) {
    for (const KeySpec& spec : schema())
        if (full == spec.name) return &spec;
    return nullptr;
}

std::string env_name(const std::string& key) {
    std::string out = "SPR_";
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(c));
    return out;
}

void check_enum(const std::string& key, const std::string& value,
                const std::set<std::string>& allowed) {
    if (allowed.count(value)) return;
    std::string opts;
    for (const std::string& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
    throw ConfigError("config key '" + key + "': '" + value + "' is not one of {" + opts + "}");
}

}  // namespace

ToolConfig parse_config(const std::string& text, const std::string& origin) {
    ToolConfig cfg;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        const std::string where = "(" + origin + ":" + std::to_string(lineno) + ")";
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("malformed section header " + where + ": '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value' " + where + ": '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key " + where);
        if (key.find('.') == std::string::npos) {
            if (section.empty())
                throw ConfigError("key '" + key + "' outside any section " + where);
            key = section + "." + key;
        }
        const KeySpec* spec = find_key(key);
        if (spec == nullptr) throw ConfigError("unknown config key '" + key + "' " + where);
        assign(cfg, *spec, value, where);
    }
    finalize_config(cfg);
    return cfg;
}

void apply_env_overrides(ToolConfig& cfg) {
    for (const KeySpec& spec : schema()) {
        const std::string var = env_name(spec.name);
        if (const char* value = std::getenv(var.c_str()))
            assign(cfg, spec, value, "(env " + var + ")");
    }
}

void finalize_config(ToolConfig& cfg) {
    if (cfg.phase2_lr0 < 0.0) cfg.phase2_lr0 = cfg.phase1_lr0 / 10.0;
}

ToolConfig load_config(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("config file not found: " + path);
    ToolConfig cfg = parse_config(read_file(path), path);
    apply_env_overrides(cfg);
    finalize_config(cfg);
    cfg.validate();
    return cfg;
}

std::string resolved_config_text(const ToolConfig& cfg) {
    std::ostringstream os;
    os << "# resolved configuration (schema spr.config.v1)\n";
    os << "# every key at its effective value; SPR_SECTION_KEY env overrides applied\n";
    std::string section;
    for (const KeySpec& spec : schema()) {
        const std::string name = spec.name;
        const auto dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            os << "\n[" << sec << "]\n";
            section = sec;
        }
        os << "# " << spec.help << "\n";
        os << name.substr(dot + 1) << " = " << render(cfg, spec) << "\n";
    }
    return os.str();
}

void ToolConfig::validate() const {
    if (threads < 1) throw ConfigError("run.threads must be >= 1");
    check_enum("run.mode", mode, {"baseline", "phase1", "two_phase"});
    check_enum("data.kind", data_kind,
               {"blobs", "moons", "rings", "tiny_images", "idx", "sprd"});
    check_enum("data.augment", augment, {"none", "crop_flip"});
    check_enum("model.arch", arch, {"mlp", "convnet_s"});
    check_enum("spr.reg", reg, {"none", "spr", "l2", "l1", "group_lasso"});
    check_enum("prune.rule", prune_rule, {"frac_below", "max_abs_below"});
    if (!(weight_tol > 0.0)) throw ConfigError("prune.weight_tol must be > 0");
    if (!(entity_frac > 0.0 && entity_frac <= 1.0))
        throw ConfigError("prune.entity_frac must lie in (0,1]");
    if (!(lambda >= 0.0)) throw ConfigError("spr.lambda must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("spr.alpha must lie in [0,1]");
}

std::pair<Dataset, Dataset> build_datasets(const ToolConfig& cfg) {
    Dataset train;
    Dataset test;
    if (cfg.data_kind == "idx") {
        if (cfg.idx_images.empty() || cfg.idx_labels.empty() || cfg.idx_test_images.empty() ||
            cfg.idx_test_labels.empty())
            throw ConfigError("data.kind=idx needs idx_images, idx_labels, idx_test_images "
                              "and idx_test_labels");
        train = load_idx(cfg.idx_images, cfg.idx_labels);
        test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
    } else if (cfg.data_kind == "sprd") {
        if (cfg.sprd_train.empty() || cfg.sprd_test.empty())
            throw ConfigError("data.kind=sprd needs sprd_train and sprd_test");
        train = load_sprd(cfg.sprd_train);
        test = load_sprd(cfg.sprd_test);
    } else {
        const SyntheticKind kind = synthetic_kind_from_name(cfg.data_kind);
        if (cfg.train_n < 1 || cfg.test_n < 1)
            throw ConfigError("data.train_n and data.test_n must be >= 1");
        // One task seed for both splits: shared class structure, disjoint
        // sample streams.
        const std::uint64_t task_seed = derive_seed(cfg.seed, "data");
        train = gen_synthetic(kind, cfg.train_n, cfg.classes, cfg.noise, task_seed,
                              Split::train);
        test = gen_synthetic(kind, cfg.test_n, cfg.classes, cfg.noise, task_seed,
                             Split::test);
    }
    train.split = Split::train;
    test.split = Split::test;
    if (train.classes != test.classes)
        throw ConfigError("train/test class counts differ (" + std::to_string(train.classes) +
                          " vs " + std::to_string(test.classes) + ")");
    if (cfg.normalize_data) {
        const NormStats stats = compute_stats(train);
        train = apply_stats(train, stats);
        test = apply_stats(test, stats);
    }
    return {std::move(train), std::move(test)};
}

Network build_model(const ToolConfig& cfg, const Dataset& train) {
    train.validate();
    if (cfg.arch == "mlp") {
        if (train.inputs.dim() != 2)
            throw ConfigError("model.arch=mlp needs 2-D point data, got " +
                              train.inputs.shape_str() + "; use convnet_s for images");
        return make_mlp(train.inputs.shape[1], cfg.hidden, train.classes);
    }
    if (train.inputs.dim() != 4)
        throw ConfigError("model.arch=convnet_s needs image data (n,C,H,W), got " +
                          train.inputs.shape_str() + "; use mlp for point clouds");
    return make_convnet_s(train.inputs.shape[1], train.inputs.shape[2],
                          train.inputs.shape[3], cfg.c1, cfg.c2, train.classes);
}

PipelineConfig build_pipeline_config(const ToolConfig& cfg) {
    PipelineConfig pc;
    pc.phase1.phase = Phase::spr;
    pc.phase1.epochs = cfg.phase1_epochs;
    pc.phase1.batch_size = cfg.phase1_batch_size;
    pc.phase1.lr0 = cfg.phase1_lr0;
    pc.phase1.lr_milestones = cfg.phase1_lr_milestones;
    pc.phase1.lr_factor = cfg.phase1_lr_factor;
    pc.phase1.momentum = cfg.phase1_momentum;
    pc.phase1.seed = cfg.seed;
    pc.phase1.reg = reg_kind_from_name(cfg.reg);
    pc.phase1.spr = SprParams{cfg.lambda, cfg.alpha};
    pc.phase1.augment = augment_policy_from_name(cfg.augment);
    pc.phase1.augment_pad = cfg.augment_pad;
    pc.phase1.out_dir = cfg.out_dir;

    pc.phase2 = pc.phase1;
    pc.phase2.phase = Phase::finetune;
    pc.phase2.epochs = cfg.phase2_epochs;
    pc.phase2.batch_size = cfg.phase2_batch_size;
    pc.phase2.lr0 = cfg.phase2_lr0 < 0.0 ? cfg.phase1_lr0 / 10.0 : cfg.phase2_lr0;
    pc.phase2.lr_milestones = cfg.phase2_lr_milestones;
    pc.phase2.lr_factor = cfg.phase2_lr_factor;
    pc.phase2.momentum = cfg.phase2_momentum;
    pc.phase2.seed = derive_seed(cfg.seed, "finetune");

    pc.weight_tol = cfg.weight_tol;
    pc.entity_frac = cfg.entity_frac;
    pc.rule = prune_rule_from_name(cfg.prune_rule);
    pc.degenerate_ok = cfg.degenerate_ok;
    pc.policy.conv_filters = cfg.conv_filters;
    pc.policy.dense_rows = cfg.dense_rows;

    pc.phase1.validate();
    pc.phase2.validate();
    return pc;
}

AugmentPolicy augment_policy_from_name(const std::string& name) {
    if (name == "none") return AugmentPolicy::none;
    if (name == "crop_flip") return AugmentPolicy::crop_flip;
    throw ConfigError("unknown augment policy '" + name + "' (none, crop_flip)");
}

PruneRule prune_rule_from_name(const std::string& name) {
    if (name == "frac_below") return PruneRule::frac_below;
    if (name == "max_abs_below") return PruneRule::max_abs_below;
    throw ConfigError("unknown prune rule '" + name + "' (frac_below, max_abs_below)");
}

}  // namespace spr
