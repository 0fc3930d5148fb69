// era: experiment harness for expandable residual approximation distillation.
//
// Subcommands:
//   era train-teacher [--config FILE] [--KEY VALUE ...]
//   era distill --teacher CKPT [--config FILE] [--KEY VALUE ...]
//   era eval --checkpoint CKPT [--mode s,t,st] [--mu LIST] [--branches SPEC]
//   era ablate --suite NAME [--config FILE] [--KEY VALUE ...]
//   era gradcheck [--seeds N] [--eps E] [--tol T] [--negative-control]
//
// Any other --KEY VALUE pair is applied as a config override using the same
// dotted keys as the config file. Outputs land in <root>/<run.id>/ where the
// root is run.output_dir, else $ERA_OUTPUT_DIR, else ./runs.
//
// Exit codes: 0 success; 2 configuration, parameter, or usage error;
// 3 numeric divergence; 4 topology or I/O error; 5 failed gradient check.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "era/checkpoint.hpp"
#include "era/config.hpp"
#include "era/data.hpp"
#include "era/errors.hpp"
#include "era/gradcheck_suite.hpp"
#include "era/inference.hpp"
#include "era/model.hpp"
#include "era/trainer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kUsage =
    "usage: era <command> [flags]\n"
    "\n"
    "commands:\n"
    "  train-teacher   train the teacher encoder and head, write teacher.ckpt\n"
    "  distill         train a student against a teacher checkpoint\n"
    "  eval            score an era checkpoint in s/t/st modes\n"
    "  ablate          run a named experiment grid, write a CSV table\n"
    "  gradcheck       finite-difference sweep over every op, block, and loss\n"
    "\n"
    "common flags:\n"
    "  --config FILE         load a key = value config file\n"
    "  --KEY VALUE           override any config key (e.g. --train.epochs 40)\n"
    "\n"
    "command flags:\n"
    "  distill    --teacher FILE     teacher checkpoint (required unless resuming)\n"
    "  eval       --checkpoint FILE  era checkpoint to score (required)\n"
    "             --mode LIST        comma list drawn from s,t,st\n"
    "             --mu LIST          comma list of blend weights\n"
    "             --branches SPEC    'all', a single j, or a sweep like 0..4\n"
    "  ablate     --suite NAME       schedule | branches | km_grid | frozen_head\n"
    "                                | branch_feed | detach\n"
    "  gradcheck  --seeds N          random draws per check (default 20)\n"
    "             --eps E            finite-difference step (default 1e-5)\n"
    "             --tol T            max relative error (default 1e-4)\n"
    "             --negative-control also run a deliberately broken backward\n";

struct CliArgs {
    std::string command;
    std::optional<std::string> config_path;
    std::optional<std::string> teacher_path;
    std::optional<std::string> checkpoint_path;
    std::optional<std::string> mode;
    std::optional<std::string> mu_list;
    std::optional<std::string> branches;
    std::optional<std::string> suite;
    std::size_t seeds = 20;
    double eps = 1e-5;
    double tol = 1e-4;
    bool negative_control = false;
    std::vector<std::pair<std::string, std::string>> overrides;
};

CliArgs parse_args(int argc, char** argv) {
    CliArgs args;
    args.command = argv[1];
    int i = 2;
    auto need_value = [&](const std::string& flag) -> std::string {
        if (i >= argc) {
            throw era::ConfigError("flag '" + flag + "' expects a value");
        }
        return argv[i++];
    };
    while (i < argc) {
        std::string token = argv[i++];
        if (token.rfind("--", 0) != 0) {
            if (args.command == "ablate" && !args.suite) {
                args.suite = token;
                continue;
            }
            throw era::ConfigError("unexpected argument '" + token + "'");
        }
        std::string flag = token.substr(2);
        if (flag == "config") {
            args.config_path = need_value(token);
        } else if (flag == "teacher") {
            args.teacher_path = need_value(token);
        } else if (flag == "checkpoint") {
            args.checkpoint_path = need_value(token);
        } else if (flag == "mode") {
            args.mode = need_value(token);
        } else if (flag == "mu") {
            args.mu_list = need_value(token);
        } else if (flag == "branches") {
            args.branches = need_value(token);
        } else if (flag == "suite") {
            args.suite = need_value(token);
        } else if (flag == "seeds") {
            args.seeds = era::detail::parse_integer<std::size_t>("--seeds", need_value(token));
        } else if (flag == "eps") {
            args.eps = era::detail::parse_real("--eps", need_value(token));
        } else if (flag == "tol") {
            args.tol = era::detail::parse_real("--tol", need_value(token));
        } else if (flag == "negative-control") {
            args.negative_control = true;
        } else {
            args.overrides.emplace_back(flag, need_value(token));
        }
    }
    return args;
}

era::RunConfig resolve_config(const CliArgs& args) {
    era::RunConfig cfg;
    if (args.config_path) {
        era::load_config_file(cfg, *args.config_path);
    }
    for (const auto& [key, value] : args.overrides) {
        era::set_config_key(cfg, key, value);
    }
    era::validate_run_config(cfg);
    return cfg;
}

fs::path run_directory(const era::RunConfig& cfg) {
    fs::path root;
    if (!cfg.run_output_dir.empty()) {
        root = cfg.run_output_dir;
    } else if (const char* env = std::getenv("ERA_OUTPUT_DIR"); env && *env) {
        root = env;
    } else {
        root = "runs";
    }
    fs::path dir = root / cfg.run_id;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw era::IoError("cannot create output directory " + dir.string() + ": " +
                           ec.message());
    }
    return dir;
}

void write_resolved_config(const era::RunConfig& cfg, const fs::path& dir) {
    fs::path path = dir / "resolved.cfg";
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw era::IoError("cannot write " + path.string());
    }
    out << era::serialize_run_config(cfg);
}

era::SyntheticData load_data(const era::RunConfig& cfg) {
    era::SyntheticData data;
    if (!cfg.data_train_csv.empty()) {
        data.train = era::load_csv(cfg.data_train_csv);
        data.test = era::load_csv(cfg.data_test_csv);
        std::size_t classes = std::max(data.train.classes, data.test.classes);
        data.train.classes = classes;
        data.test.classes = classes;
        if (classes != cfg.data_classes || data.train.input_dim != cfg.data_input_dim) {
            throw era::TopologyError(
                "csv data has " + std::to_string(classes) + " classes over " +
                std::to_string(data.train.input_dim) + " features, config declares " +
                std::to_string(cfg.data_classes) + " classes over " +
                std::to_string(cfg.data_input_dim));
        }
        return data;
    }
    return era::generate(era::make_synthetic_spec(cfg), cfg.data_seed);
}

ordered_json epoch_to_json(const era::EpochMetrics& m) {
    ordered_json line;
    line["epoch"] = m.epoch;
    line["loss_total"] = m.loss_total;
    line["loss_kd"] = m.loss_kd;
    for (std::size_t k = 0; k < m.loss_fd.size(); ++k) {
        line["loss_fd_" + std::to_string(k)] = m.loss_fd[k];
    }
    for (std::size_t k = 0; k < m.loss_cls.size(); ++k) {
        line["loss_cls_" + std::to_string(k + 1)] = m.loss_cls[k];
    }
    line["approx_error"] = m.approx_error;
    line["acc_s"] = m.acc_s;
    line["acc_t"] = m.acc_t;
    line["acc_st"] = m.acc_st;
    return line;
}

// ---------------------------------------------------------------------------
// train-teacher
// ---------------------------------------------------------------------------

int cmd_train_teacher(const CliArgs& args) {
    era::RunConfig cfg = resolve_config(args);
    era::SyntheticData data = load_data(cfg);
    era::TrainConfig tc = era::make_train_config(cfg);

    era::TeacherTrainResult result = era::train_teacher(
        cfg.model_teacher_widths, data.train.classes, data.train, data.test, tc);

    fs::path dir = run_directory(cfg);
    era::write_checkpoint((dir / "teacher.ckpt").string(),
                          era::checkpoint_from_teacher(result.model, tc.epochs, tc.seed));
    {
        fs::path path = dir / "teacher_metrics.jsonl";
        std::ofstream out(path, std::ios::trunc);
        if (!out) {
            throw era::IoError("cannot write " + path.string());
        }
        for (const era::TeacherEpoch& epoch : result.history) {
            ordered_json line;
            line["epoch"] = epoch.epoch;
            line["loss"] = epoch.loss;
            line["acc"] = epoch.accuracy;
            out << line.dump() << "\n";
        }
    }
    write_resolved_config(cfg, dir);
    std::cout << "teacher: " << result.history.size() << " epochs, test acc "
              << result.history.back().accuracy << "\n";
    std::cout << "wrote " << (dir / "teacher.ckpt").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// distill
// ---------------------------------------------------------------------------

void require_matching_teacher(const era::TeacherModel& teacher, const era::EraTopology& topo) {
    if (teacher.encoder.widths != topo.teacher_widths || teacher.head.classes() != topo.classes) {
        throw era::TopologyError("teacher checkpoint is " + era::teacher_topology_line(teacher) +
                                 ", config wants teacher=" +
                                 era::widths_to_string(topo.teacher_widths) +
                                 " classes=" + std::to_string(topo.classes));
    }
}

int cmd_distill(const CliArgs& args) {
    era::RunConfig cfg = resolve_config(args);
    era::SyntheticData data = load_data(cfg);
    era::TrainConfig tc = era::make_train_config(cfg);
    era::EraTopology topology = era::make_topology(cfg);

    era::EraModel model;
    era::SgdMomentum opt(tc.momentum, tc.weight_decay);
    std::size_t start_epoch = 0;

    if (!cfg.run_resume.empty()) {
        era::EraRestore restored = era::restore_era(era::read_checkpoint(cfg.run_resume));
        if (restored.model.topology != topology) {
            throw era::TopologyError("resume checkpoint is '" +
                                     era::to_string(restored.model.topology) +
                                     "', config wants '" + era::to_string(topology) + "'");
        }
        model = std::move(restored.model);
        opt.velocity() = std::move(restored.velocity);
        start_epoch = restored.epoch;
    } else {
        if (!args.teacher_path) {
            throw era::ConfigError("distill requires --teacher <checkpoint>");
        }
        era::TeacherRestore teacher = era::restore_teacher(era::read_checkpoint(*args.teacher_path));
        require_matching_teacher(teacher.model, topology);
        model = era::EraModel(topology);
        model.init(tc.seed);
        model.adopt_teacher(teacher.model);
    }
    model.set_head_t_trainable(!cfg.model_head_t_frozen);
    model.detach_targets = cfg.model_detach_targets;

    fs::path dir = run_directory(cfg);
    fs::path metrics_path = dir / "era_metrics.jsonl";
    std::ofstream metrics(metrics_path,
                          start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics) {
        throw era::IoError("cannot write " + metrics_path.string());
    }

    auto on_epoch = [&](const era::EpochMetrics& m) {
        metrics << epoch_to_json(m).dump() << "\n";
        metrics.flush();
        std::cout << "epoch " << m.epoch << " loss " << m.loss_total << " acc_s " << m.acc_s
                  << " acc_t " << m.acc_t << " acc_st " << m.acc_st << "\n";
    };
    std::vector<era::EpochMetrics> history =
        era::distill(model, opt, data.train, data.test, tc, start_epoch, on_epoch);

    std::size_t epoch_final = start_epoch + history.size();
    era::write_checkpoint((dir / "era.ckpt").string(),
                          era::checkpoint_from_era(model, &opt, epoch_final, tc.seed));
    write_resolved_config(cfg, dir);
    std::cout << "wrote " << (dir / "era.ckpt").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) {
            parts.push_back(text.substr(start));
            break;
        }
        parts.push_back(text.substr(start, comma - start));
        start = comma + 1;
    }
    return parts;
}

std::vector<std::size_t> resolve_branch_list(const std::string& spec, std::size_t stages) {
    if (spec == "all") {
        return {stages};
    }
    std::size_t dots = spec.find("..");
    if (dots != std::string::npos) {
        std::size_t lo = era::detail::parse_integer<std::size_t>("--branches", spec.substr(0, dots));
        std::size_t hi =
            era::detail::parse_integer<std::size_t>("--branches", spec.substr(dots + 2));
        if (lo > hi) {
            throw era::ConfigError("--branches sweep '" + spec + "' runs backwards");
        }
        std::vector<std::size_t> out;
        for (std::size_t j = lo; j <= hi; ++j) {
            out.push_back(j);
        }
        return out;
    }
    return {era::detail::parse_integer<std::size_t>("--branches", spec)};
}

int cmd_eval(const CliArgs& args) {
    era::RunConfig cfg = resolve_config(args);
    if (!args.checkpoint_path) {
        throw era::ConfigError("eval requires --checkpoint <era checkpoint>");
    }
    era::EraRestore restored = era::restore_era(era::read_checkpoint(*args.checkpoint_path));
    era::EraModel model = std::move(restored.model);
    model.set_mode(era::Mode::eval);

    era::SyntheticData data = load_data(cfg);

    std::vector<era::InferenceMode> modes;
    for (const std::string& name : split_list(args.mode.value_or(cfg.eval_mode))) {
        modes.push_back(era::parse_inference_mode(name));
    }
    std::vector<double> mus;
    if (args.mu_list) {
        for (const std::string& token : split_list(*args.mu_list)) {
            mus.push_back(era::detail::parse_real("--mu", token));
        }
    } else {
        mus.push_back(cfg.eval_mu);
    }
    std::vector<std::size_t> branch_list =
        resolve_branch_list(args.branches.value_or(cfg.eval_branches), model.stages());

    fs::path dir = run_directory(cfg);
    fs::path report_path = dir / "eval.jsonl";
    std::ofstream report(report_path, std::ios::trunc);
    if (!report) {
        throw era::IoError("cannot write " + report_path.string());
    }
    for (era::InferenceMode mode : modes) {
        for (double mu : mus) {
            for (std::size_t j : branch_list) {
                era::InferenceSpec spec;
                spec.mode = mode;
                spec.mu = mu;
                spec.active_branches = j;
                double acc = era::evaluate_accuracy(model, data.test, spec);
                ordered_json line;
                line["mode"] = era::to_string(mode);
                line["mu"] = mu;
                line["branches"] = j;
                line["accuracy"] = acc;
                report << line.dump() << "\n";
                std::cout << "mode=" << era::to_string(mode) << " mu=" << mu << " branches=" << j
                          << " acc=" << acc << "\n";
            }
        }
    }
    write_resolved_config(cfg, dir);
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateRow {
    std::string setting;
    std::size_t seed = 0;
    double acc_s = 0.0;
    double acc_t = 0.0;
    double acc_st = 0.0;
    double approx_error = 0.0;
    bool aborted = false;
};

std::string csv_value(double v) {
    return era::detail::format_real(v);
}

void write_ablate_csv(const fs::path& path, const std::vector<AblateRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw era::IoError("cannot write " + path.string());
    }
    out << "setting,seed,acc_s,acc_t,acc_st,approx_error,status\n";
    for (const AblateRow& row : rows) {
        if (row.aborted) {
            out << row.setting << "," << row.seed << ",nan,nan,nan,nan,NaN-abort\n";
        } else {
            out << row.setting << "," << row.seed << "," << csv_value(row.acc_s) << ","
                << csv_value(row.acc_t) << "," << csv_value(row.acc_st) << ","
                << csv_value(row.approx_error) << ",ok\n";
        }
    }
}

/// One grid point: a fresh student distilled under `point`, scored by its
/// final epoch. Divergence is reported, not thrown.
AblateRow distill_point(const era::RunConfig& point, era::TeacherModel& teacher,
                        const era::SyntheticData& data, const std::string& setting,
                        std::size_t seed) {
    AblateRow row;
    row.setting = setting;
    row.seed = seed;
    era::RunConfig cfg = point;
    cfg.train_seed = seed;
    era::TrainConfig tc = era::make_train_config(cfg);
    era::EraModel model(era::make_topology(cfg));
    model.init(tc.seed);
    model.adopt_teacher(teacher);
    model.set_head_t_trainable(!cfg.model_head_t_frozen);
    model.detach_targets = cfg.model_detach_targets;
    era::SgdMomentum opt(tc.momentum, tc.weight_decay);
    try {
        std::vector<era::EpochMetrics> history =
            era::distill(model, opt, data.train, data.test, tc);
        const era::EpochMetrics& last = history.back();
        row.acc_s = last.acc_s;
        row.acc_t = last.acc_t;
        row.acc_st = last.acc_st;
        row.approx_error = last.approx_error;
    } catch (const era::NumericError&) {
        row.aborted = true;
    }
    return row;
}

int cmd_ablate(const CliArgs& args) {
    era::RunConfig cfg = resolve_config(args);
    if (!args.suite) {
        throw era::ConfigError("ablate requires --suite <name>");
    }
    const std::string& suite = *args.suite;

    // Every grid point shares one reference dataset and one trained teacher.
    era::SyntheticData data = load_data(cfg);
    era::TrainConfig teacher_tc = era::make_train_config(cfg);
    era::TeacherTrainResult teacher = era::train_teacher(
        cfg.model_teacher_widths, data.train.classes, data.train, data.test, teacher_tc);
    std::cout << "suite " << suite << ": teacher test acc "
              << teacher.history.back().accuracy << "\n";

    std::vector<std::pair<std::string, era::RunConfig>> points;
    if (suite == "schedule") {
        for (const char* name : {"exp_decay", "linear_decay", "constant", "increasing_linear",
                                 "increasing_exp", "biased_first", "linear_fade"}) {
            era::RunConfig point = cfg;
            point.loss_schedule = name;
            points.emplace_back(name, point);
        }
    } else if (suite == "km_grid") {
        for (auto [m, k] : std::vector<std::pair<std::size_t, std::size_t>>{
                 {1, 1}, {1, 2}, {1, 3}, {2, 2}, {2, 3}, {2, 4}, {2, 5}, {3, 4}}) {
            era::RunConfig point = cfg;
            point.model_branch_depth = m;
            point.model_stages = k;
            points.emplace_back("m" + std::to_string(m) + "_K" + std::to_string(k), point);
        }
    } else if (suite == "frozen_head") {
        for (auto [name, frozen] :
             std::vector<std::pair<std::string, bool>>{{"frozen", true}, {"learnable", false}}) {
            era::RunConfig point = cfg;
            point.model_head_t_frozen = frozen;
            points.emplace_back(name, point);
        }
    } else if (suite == "branch_feed") {
        for (const char* name : {"cascaded", "parallel"}) {
            era::RunConfig point = cfg;
            point.model_branch_feed = name;
            points.emplace_back(name, point);
        }
    } else if (suite == "detach") {
        for (auto [name, detach] :
             std::vector<std::pair<std::string, bool>>{{"detached", true}, {"attached", false}}) {
            era::RunConfig point = cfg;
            point.model_detach_targets = detach;
            points.emplace_back(name, point);
        }
    } else if (suite != "branches") {
        throw era::ConfigError("unknown ablation suite '" + suite + "'");
    }

    std::vector<AblateRow> rows;
    if (suite == "branches") {
        // One distilled model per seed, scored under progressive truncation.
        for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
            std::size_t seed = cfg.ablate_base_seed + s;
            era::RunConfig point = cfg;
            point.train_seed = seed;
            era::TrainConfig tc = era::make_train_config(point);
            era::EraModel model(era::make_topology(point));
            model.init(tc.seed);
            model.adopt_teacher(teacher.model);
            model.set_head_t_trainable(!point.model_head_t_frozen);
            model.detach_targets = point.model_detach_targets;
            era::SgdMomentum opt(tc.momentum, tc.weight_decay);
            try {
                std::vector<era::EpochMetrics> history =
                    era::distill(model, opt, data.train, data.test, tc);
                for (std::size_t j = 0; j <= model.stages(); ++j) {
                    AblateRow row;
                    row.setting = "j" + std::to_string(j);
                    row.seed = seed;
                    era::InferenceSpec spec;
                    spec.mode = era::InferenceMode::student;
                    row.acc_s = era::evaluate_accuracy(model, data.test, spec);
                    spec.mode = era::InferenceMode::teacher_path;
                    spec.active_branches = j;
                    row.acc_t = era::evaluate_accuracy(model, data.test, spec);
                    spec.mode = era::InferenceMode::merged;
                    spec.mu = point.loss_mu;
                    row.acc_st = era::evaluate_accuracy(model, data.test, spec);
                    row.approx_error = history.back().approx_error;
                    rows.push_back(row);
                    std::cout << "branches j=" << j << " seed=" << seed << " acc_t=" << row.acc_t
                              << "\n";
                }
            } catch (const era::NumericError&) {
                AblateRow row;
                row.setting = "all";
                row.seed = seed;
                row.aborted = true;
                rows.push_back(row);
                std::cout << "branches seed=" << seed << " NaN-abort\n";
            }
        }
    } else {
        for (const auto& [setting, point] : points) {
            for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
                std::size_t seed = cfg.ablate_base_seed + s;
                AblateRow row = distill_point(point, teacher.model, data, setting, seed);
                rows.push_back(row);
                std::cout << suite << "=" << setting << " seed=" << seed
                          << (row.aborted ? " NaN-abort"
                                          : " acc_st=" + csv_value(row.acc_st))
                          << "\n";
            }
        }
    }

    fs::path dir = run_directory(cfg);
    fs::path table = dir / ("ablate_" + suite + ".csv");
    write_ablate_csv(table, rows);
    write_resolved_config(cfg, dir);
    std::cout << "wrote " << table.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(const CliArgs& args) {
    std::vector<era::CheckOutcome> outcomes =
        era::run_gradcheck_suite(args.seeds, args.eps, args.tol);
    bool all_passed = true;
    for (const era::CheckOutcome& o : outcomes) {
        std::cout << (o.passed ? "ok   " : "FAIL ") << o.name << " max_rel=" << o.max_rel_error
                  << " (seeds=" << args.seeds << ")\n";
        if (!o.passed) {
            std::cerr << "gradient check failed: " << o.name << " max relative error "
                      << o.max_rel_error << " at seed " << o.worst_seed << "\n";
            all_passed = false;
        }
    }
    if (args.negative_control) {
        era::GradCheckReport probe = era::corrupted_backward_probe(1, args.eps, args.tol);
        if (probe.passed) {
            std::cerr << "negative control was not detected; the checker is broken\n";
            return 1;
        }
        std::cout << "FAIL negative_control max_rel=" << probe.max_rel_error
                  << " (deliberately corrupted backward)\n";
        std::cerr << "gradient check failed: negative_control max relative error "
                  << probe.max_rel_error << "\n";
        all_passed = false;
    }
    std::cout << (all_passed ? "all checks passed" : "checks failed") << "\n";
    return all_passed ? 0 : 5;
}

int run(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << kUsage;
        return 2;
    }
    std::string command = argv[1];
    if (command == "--help" || command == "-h" || command == "help") {
        std::cout << kUsage;
        return 0;
    }
    CliArgs args = parse_args(argc, argv);
    if (command == "train-teacher") {
        return cmd_train_teacher(args);
    }
    if (command == "distill") {
        return cmd_distill(args);
    }
    if (command == "eval") {
        return cmd_eval(args);
    }
    if (command == "ablate") {
        return cmd_ablate(args);
    }
    if (command == "gradcheck") {
        return cmd_gradcheck(args);
    }
    std::cerr << "unknown command '" << command << "'\n" << kUsage;
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const era::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const era::TopologyError& e) {
        std::cerr << "topology error: " << e.what() << "\n";
        return 4;
    } catch (const era::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const era::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const era::ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return 2;
    } catch (const era::SpecError& e) {
        std::cerr << "spec error: " << e.what() << "\n";
        return 2;
    } catch (const era::InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const era::StateError& e) {
        std::cerr << "state error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
