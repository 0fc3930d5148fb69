#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "era/data.hpp"
#include "era/errors.hpp"
#include "era/inference.hpp"
#include "era/losses.hpp"
#include "era/model.hpp"
#include "era/trainer.hpp"

namespace era {

// ============================================================================
// Flat run configuration
// ============================================================================
//
// Every tunable of a run as a dotted key. Files hold `key = value` lines
// ('#' starts a comment); command-line `--key value` pairs override them.
// Unknown keys are rejected by name, and each run serializes its resolved
// configuration next to its outputs.

struct RunConfig {
    // data.*
    std::size_t data_classes = 10;
    std::size_t data_input_dim = 16;
    std::size_t data_samples_per_class = 400;
    double data_mean_scale = 1.5;
    double data_cluster_scale = 1.0;
    double data_label_noise = 0.0;
    std::size_t data_seed = 99;
    std::string data_train_csv;
    std::string data_test_csv;
    // model.*
    std::vector<std::size_t> model_student_widths = {16, 16, 6};
    std::vector<std::size_t> model_teacher_widths = {16, 32, 12};
    std::size_t model_stages = 5;
    std::size_t model_branch_depth = 2;
    std::size_t model_branch_hidden = 64;
    std::string model_branch_feed = "cascaded";
    bool model_head_t_frozen = true;
    bool model_detach_targets = true;
    // loss.*
    double loss_alpha = 1.0;
    double loss_beta = 2.0;
    double loss_gamma = 1.0;
    double loss_lambda = 1.0;
    double loss_temperature = 4.0;
    double loss_mu = 0.5;
    std::string loss_schedule = "exp_decay";
    // train.*
    //
    // The budget deliberately stops inside the second learning-rate plateau
    // (epochs sizes the x0.1 step points at 80 and 120; halt_after ends the
    // run at 119). Auxiliary branches then finish in a regime where heavier
    // stage weights only add gradient noise, which is the operating point the
    // reference task is calibrated for.
    std::size_t train_epochs = 160;
    std::size_t train_batch_size = 64;
    double train_learning_rate = 0.002;
    double train_momentum = 0.9;
    double train_weight_decay = 5e-4;
    std::size_t train_seed = 1;
    std::size_t train_halt_after = 119;
    // eval.*
    std::string eval_mode = "st";
    double eval_mu = 0.5;
    std::string eval_branches = "all";
    // ablate.*
    std::size_t ablate_seeds = 5;
    std::size_t ablate_base_seed = 1;
    // run.*
    std::string run_id = "run";
    std::string run_output_dir;
    std::string run_resume;
};

namespace detail {

using KeyTarget = std::variant<std::size_t*, double*, bool*, std::string*,
                               std::vector<std::size_t>*>;

struct KeyBinding {
    const char* key;
    KeyTarget target;
};

inline std::vector<KeyBinding> key_bindings(RunConfig& cfg) {
    return {
        {"data.classes", &cfg.data_classes},
        {"data.input_dim", &cfg.data_input_dim},
        {"data.samples_per_class", &cfg.data_samples_per_class},
        {"data.mean_scale", &cfg.data_mean_scale},
        {"data.cluster_scale", &cfg.data_cluster_scale},
        {"data.label_noise", &cfg.data_label_noise},
        {"data.seed", &cfg.data_seed},
        {"data.train_csv", &cfg.data_train_csv},
        {"data.test_csv", &cfg.data_test_csv},
        {"model.student_widths", &cfg.model_student_widths},
        {"model.teacher_widths", &cfg.model_teacher_widths},
        {"model.stages", &cfg.model_stages},
        {"model.branch_depth", &cfg.model_branch_depth},
        {"model.branch_hidden", &cfg.model_branch_hidden},
        {"model.branch_feed", &cfg.model_branch_feed},
        {"model.head_t_frozen", &cfg.model_head_t_frozen},
        {"model.detach_targets", &cfg.model_detach_targets},
        {"loss.alpha", &cfg.loss_alpha},
        {"loss.beta", &cfg.loss_beta},
        {"loss.gamma", &cfg.loss_gamma},
        {"loss.lambda", &cfg.loss_lambda},
        {"loss.temperature", &cfg.loss_temperature},
        {"loss.mu", &cfg.loss_mu},
        {"loss.schedule", &cfg.loss_schedule},
        {"train.epochs", &cfg.train_epochs},
        {"train.batch_size", &cfg.train_batch_size},
        {"train.learning_rate", &cfg.train_learning_rate},
        {"train.momentum", &cfg.train_momentum},
        {"train.weight_decay", &cfg.train_weight_decay},
        {"train.seed", &cfg.train_seed},
        {"train.halt_after", &cfg.train_halt_after},
        {"eval.mode", &cfg.eval_mode},
        {"eval.mu", &cfg.eval_mu},
        {"eval.branches", &cfg.eval_branches},
        {"ablate.seeds", &cfg.ablate_seeds},
        {"ablate.base_seed", &cfg.ablate_base_seed},
        {"run.id", &cfg.run_id},
        {"run.output_dir", &cfg.run_output_dir},
        {"run.resume", &cfg.run_resume},
    };
}

inline std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

template <class IntT>
IntT parse_integer(const std::string& key, const std::string& value) {
    IntT out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a valid integer");
    }
    return out;
}

inline double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last || !std::isfinite(out)) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a finite number");
    }
    return out;
}

inline bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "true") {
        return true;
    }
    if (value == "false") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

inline std::string format_real(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw ContractError("format_real: to_chars failed");
    }
    return std::string(buf, ptr);
}

inline std::string format_value(const KeyTarget& target) {
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, double>) {
                return format_real(*p);
            } else if constexpr (std::is_same_v<T, bool>) {
                return *p ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::string>) {
                return *p;
            } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                return widths_to_string(*p);
            } else {
                return std::to_string(*p);
            }
        },
        target);
}

} // namespace detail

/// Applies one dotted key. Unknown keys and malformed values are rejected
/// with the key named.
inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const detail::KeyBinding& binding : detail::key_bindings(cfg)) {
        if (key != binding.key) {
            continue;
        }
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, std::size_t>) {
                    *p = detail::parse_integer<std::size_t>(key, value);
                } else if constexpr (std::is_same_v<T, double>) {
                    *p = detail::parse_real(key, value);
                } else if constexpr (std::is_same_v<T, bool>) {
                    *p = detail::parse_flag(key, value);
                } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                    try {
                        *p = parse_widths(value);
                    } catch (const ConfigError& e) {
                        throw ConfigError("config key '" + key + "': " + e.what());
                    }
                } else {
                    *p = value;
                }
            },
            binding.target);
        return;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

/// Parses `key = value` text. `source` names the origin in errors.
inline void parse_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') {
            continue;
        }
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + stripped + "'");
        }
        std::string key = detail::trim(stripped.substr(0, eq));
        std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
        }
        set_config_key(cfg, key, value);
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file '" + path + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    parse_config_text(cfg, buffer.str(), path);
}

/// Every key in declaration order with its current value; parsing this text
/// reproduces the configuration exactly.
inline std::string serialize_run_config(const RunConfig& cfg) {
    std::string out = "# resolved configuration\n";
    RunConfig copy = cfg;
    for (const detail::KeyBinding& binding : detail::key_bindings(copy)) {
        out += binding.key;
        out += " = ";
        out += detail::format_value(binding.target);
        out += "\n";
    }
    return out;
}

// ============================================================================
// Builders and cross-field validation
// ============================================================================

inline SyntheticSpec make_synthetic_spec(const RunConfig& cfg) {
    SyntheticSpec spec;
    spec.classes = cfg.data_classes;
    spec.input_dim = cfg.data_input_dim;
    spec.samples_per_class = cfg.data_samples_per_class;
    spec.mean_scale = cfg.data_mean_scale;
    spec.cluster_scale = cfg.data_cluster_scale;
    spec.label_noise = cfg.data_label_noise;
    return spec;
}

inline EraTopology make_topology(const RunConfig& cfg) {
    EraTopology t;
    t.student_widths = cfg.model_student_widths;
    t.teacher_widths = cfg.model_teacher_widths;
    t.classes = cfg.data_classes;
    t.stages = cfg.model_stages;
    t.branch_depth = cfg.model_branch_depth;
    t.branch_hidden = cfg.model_branch_hidden;
    t.branch_feed = parse_branch_feed(cfg.model_branch_feed);
    return t;
}

inline LossWeights make_loss_weights(const RunConfig& cfg) {
    LossWeights w;
    w.alpha = cfg.loss_alpha;
    w.beta = cfg.loss_beta;
    w.gamma = cfg.loss_gamma;
    w.lambda = cfg.loss_lambda;
    w.temperature = cfg.loss_temperature;
    w.mu = cfg.loss_mu;
    w.schedule = parse_schedule(cfg.loss_schedule);
    return w;
}

inline TrainConfig make_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.train_epochs;
    t.batch_size = cfg.train_batch_size;
    t.learning_rate = cfg.train_learning_rate;
    t.momentum = cfg.train_momentum;
    t.weight_decay = cfg.train_weight_decay;
    t.seed = cfg.train_seed;
    t.halt_after = cfg.train_halt_after;
    t.weights = make_loss_weights(cfg);
    return t;
}

/// Resolves eval.* against a concrete stage count.
inline InferenceSpec make_inference_spec(const RunConfig& cfg, std::size_t stages) {
    InferenceSpec spec;
    spec.mode = parse_inference_mode(cfg.eval_mode);
    spec.mu = cfg.eval_mu;
    if (cfg.eval_branches == "all") {
        spec.active_branches = stages;
    } else {
        spec.active_branches =
            detail::parse_integer<std::size_t>("eval.branches", cfg.eval_branches);
    }
    return spec;
}

inline void validate_run_config(const RunConfig& cfg) {
    if (cfg.model_student_widths.empty() || cfg.model_teacher_widths.empty()) {
        throw ConfigError("model widths must not be empty");
    }
    if (cfg.data_train_csv.empty() != cfg.data_test_csv.empty()) {
        throw ConfigError("data.train_csv and data.test_csv must be set together");
    }
    if (cfg.data_train_csv.empty()) {
        make_synthetic_spec(cfg).validate();
        if (cfg.model_student_widths.front() != cfg.data_input_dim) {
            throw ConfigError("model.student_widths must start at data.input_dim (" +
                              std::to_string(cfg.model_student_widths.front()) + " vs " +
                              std::to_string(cfg.data_input_dim) + ")");
        }
        if (cfg.model_teacher_widths.front() != cfg.data_input_dim) {
            throw ConfigError("model.teacher_widths must start at data.input_dim");
        }
    }
    make_topology(cfg).validate();
    parse_inference_mode(cfg.eval_mode);
    if (cfg.eval_mu < 0.0 || cfg.eval_mu > 1.0) {
        throw ConfigError("eval.mu must lie in [0, 1]");
    }
    if (cfg.loss_mu < 0.0 || cfg.loss_mu > 1.0) {
        throw ConfigError("loss.mu must lie in [0, 1]");
    }
    if (!(cfg.loss_temperature > 0.0)) {
        throw ConfigError("loss.temperature must be positive");
    }
    if (cfg.loss_alpha < 0.0 || cfg.loss_beta < 0.0 || cfg.loss_gamma < 0.0 ||
        cfg.loss_lambda < 0.0) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (cfg.eval_branches != "all") {
        detail::parse_integer<std::size_t>("eval.branches", cfg.eval_branches);
    }
    if (cfg.ablate_seeds == 0) {
        throw ConfigError("ablate.seeds must be positive");
    }
    if (cfg.run_id.empty()) {
        throw ConfigError("run.id must not be empty");
    }
    make_train_config(cfg).validate();
}

} // namespace era
