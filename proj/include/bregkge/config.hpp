#pragma once
// Run configuration files: flat key = value lines under [data] / [model] /
// [loss] / [optim] / [eval] sections, plus a mandatory top-level seed.
// Unknown keys are rejected. Every run report embeds the fully resolved
// config, and the canonical serialization round-trips through the parser.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "bregkge/common.hpp"
#include "bregkge/trainer.hpp"

namespace bregkge {

struct RunConfig {
    uint64_t seed = 0;
    std::string train_path, valid_path, test_path;
    TrainConfig trainer;
    std::string eval_split = "valid";  // which split evaluate reports on

    // canonical dotted-key map, defaults included
    std::map<std::string, std::string> resolved() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: bad number for " + key + ": '" + v + "'");
    }
}

inline long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("config: bad integer for " + key + ": '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("config: bad boolean for " + key + ": '" + v + "'");
}

inline std::string fmt_double(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

inline ModelFamily parse_model_family(const std::string& v) {
    if (v == "tabular") return ModelFamily::Tabular;
    if (v == "transe") return ModelFamily::TransE;
    if (v == "distmult") return ModelFamily::DistMult;
    if (v == "complex") return ModelFamily::ComplEx;
    if (v == "rescal") return ModelFamily::Rescal;
    if (v == "rotate") return ModelFamily::RotatE;
    throw config_error("config: unknown model family '" + v + "'");
}

inline LossFamily parse_loss_family(const std::string& v) {
    if (v == "sce") return LossFamily::Sce;
    if (v == "sce-ls") return LossFamily::SceLs;
    if (v == "sce-bc") return LossFamily::SceBc;
    if (v == "ns-uni") return LossFamily::NsUni;
    if (v == "ns-freq") return LossFamily::NsFreq;
    if (v == "sans") return LossFamily::Sans;
    throw config_error("config: unknown loss family '" + v + "'");
}

inline InitScheme parse_init(const std::string& v) {
    if (v == "xavier-normal" || v == "xn") return InitScheme::XavierNormal;
    if (v == "xavier-uniform" || v == "xu") return InitScheme::XavierUniform;
    if (v == "normal" || v == "n") return InitScheme::Normal;
    if (v == "uniform" || v == "u") return InitScheme::Uniform;
    throw config_error("config: unknown init scheme '" + v + "'");
}

inline const char* to_string(InitScheme s) {
    switch (s) {
        case InitScheme::XavierNormal: return "xavier-normal";
        case InitScheme::XavierUniform: return "xavier-uniform";
        case InitScheme::Normal: return "normal";
        case InitScheme::Uniform: return "uniform";
    }
    return "?";
}

inline NoiseSource parse_noise(const std::string& v) {
    if (v == "uniform") return NoiseSource::Uniform;
    if (v == "unigram") return NoiseSource::Unigram;
    if (v == "model-self") return NoiseSource::ModelSelf;
    throw config_error("config: unknown noise source '" + v + "'");
}

inline const char* to_string(NoiseSource s) {
    switch (s) {
        case NoiseSource::Uniform: return "uniform";
        case NoiseSource::Unigram: return "unigram";
        case NoiseSource::ModelSelf: return "model-self";
    }
    return "?";
}

inline OptimKind parse_optim(const std::string& v) {
    if (v == "sgd") return OptimKind::Sgd;
    if (v == "adagrad") return OptimKind::Adagrad;
    if (v == "adam") return OptimKind::Adam;
    throw config_error("config: unknown optimizer '" + v + "'");
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw config_error("config: bad section header at line " +
                                                    std::to_string(lineno));
            section = t.substr(1, t.size() - 2);
            if (section != "data" && section != "model" && section != "loss" &&
                section != "optim" && section != "eval")
                throw config_error("config: unknown section [" + section + "]");
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("config: expected key = value at line " + std::to_string(lineno));
        std::string key = detail::trim(t.substr(0, eq));
        std::string value = detail::trim(t.substr(eq + 1));
        if (key.empty() || value.empty())
            throw config_error("config: empty key or value at line " + std::to_string(lineno));
        std::string dotted = section.empty() ? key : section + "." + key;
        if (!kv.emplace(dotted, value).second)
            throw config_error("config: duplicate key " + dotted);
    }

    RunConfig rc;
    bool have_seed = false;
    for (const auto& [key, v] : kv) {
        if (key == "seed") {
            rc.seed = static_cast<uint64_t>(detail::parse_int(key, v));
            have_seed = true;
        } else if (key == "data.train") {
            rc.train_path = v;
        } else if (key == "data.valid") {
            rc.valid_path = v;
        } else if (key == "data.test") {
            rc.test_path = v;
        } else if (key == "model.family") {
            rc.trainer.model.family = detail::parse_model_family(v);
        } else if (key == "model.dim") {
            rc.trainer.model.dim = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "model.init") {
            rc.trainer.model.init = detail::parse_init(v);
        } else if (key == "model.init-scale") {
            rc.trainer.model.init_scale = detail::parse_double(key, v);
        } else if (key == "loss.family") {
            rc.trainer.loss.family = detail::parse_loss_family(v);
        } else if (key == "loss.nu") {
            rc.trainer.loss.nu = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "loss.lambda") {
            rc.trainer.loss.lambda = detail::parse_double(key, v);
        } else if (key == "loss.alpha") {
            rc.trainer.loss.alpha = detail::parse_double(key, v);
        } else if (key == "loss.noise") {
            rc.trainer.loss.noise = detail::parse_noise(v);
        } else if (key == "loss.mode") {
            if (v == "sampled")
                rc.trainer.loss.mode = LossMode::Sampled;
            else if (v == "exact")
                rc.trainer.loss.mode = LossMode::Exact;
            else
                throw config_error("config: loss.mode must be sampled or exact");
        } else if (key == "loss.bc-clamp-min") {
            rc.trainer.loss.bc_clamp_min = detail::parse_double(key, v);
        } else if (key == "loss.bc-clamp-max") {
            rc.trainer.loss.bc_clamp_max = detail::parse_double(key, v);
        } else if (key == "loss.lambda-schedule") {
            if (v == "constant")
                rc.trainer.lambda_schedule = LambdaSchedule::Constant;
            else if (v == "linear-warmup")
                rc.trainer.lambda_schedule = LambdaSchedule::LinearWarmup;
            else
                throw config_error("config: loss.lambda-schedule must be constant or linear-warmup");
        } else if (key == "optim.optimizer") {
            rc.trainer.optim = detail::parse_optim(v);
        } else if (key == "optim.lr") {
            rc.trainer.lr = detail::parse_double(key, v);
        } else if (key == "optim.decay") {
            rc.trainer.decay = detail::parse_double(key, v);
        } else if (key == "optim.patience") {
            rc.trainer.patience = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "optim.batch-size") {
            rc.trainer.batch_size = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "optim.max-epochs") {
            rc.trainer.max_epochs = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "optim.eval-every") {
            rc.trainer.eval_every = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "optim.reg-order") {
            rc.trainer.reg_order = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "optim.reg-entity") {
            rc.trainer.reg_entity = detail::parse_double(key, v);
        } else if (key == "optim.reg-relation") {
            rc.trainer.reg_relation = detail::parse_double(key, v);
        } else if (key == "optim.dropout-entity") {
            rc.trainer.dropout_entity = detail::parse_double(key, v);
        } else if (key == "optim.dropout-relation") {
            rc.trainer.dropout_relation = detail::parse_double(key, v);
        } else if (key == "optim.backtracking") {
            rc.trainer.backtracking = detail::parse_bool(key, v);
        } else if (key == "optim.threads") {
            rc.trainer.threads = static_cast<int>(detail::parse_int(key, v));
        } else if (key == "eval.split") {
            if (v != "valid" && v != "test")
                throw config_error("config: eval.split must be valid or test");
            rc.eval_split = v;
        } else {
            throw config_error("config: unknown key " + key);
        }
    }
    if (!have_seed) throw config_error("config: seed is mandatory");
    rc.trainer.seed = rc.seed;
    rc.trainer.model.seed = rc.seed;
    return rc;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

inline std::map<std::string, std::string> RunConfig::resolved() const {
    std::map<std::string, std::string> kv;
    kv["seed"] = std::to_string(seed);
    if (!train_path.empty()) kv["data.train"] = train_path;
    if (!valid_path.empty()) kv["data.valid"] = valid_path;
    if (!test_path.empty()) kv["data.test"] = test_path;
    kv["model.family"] = to_string(trainer.model.family);
    kv["model.dim"] = std::to_string(trainer.model.dim);
    kv["model.init"] = detail::to_string(trainer.model.init);
    kv["model.init-scale"] = detail::fmt_double(trainer.model.init_scale);
    kv["loss.family"] = to_string(trainer.loss.family);
    kv["loss.nu"] = std::to_string(trainer.loss.nu);
    kv["loss.lambda"] = detail::fmt_double(trainer.loss.lambda);
    kv["loss.alpha"] = detail::fmt_double(trainer.loss.alpha);
    kv["loss.noise"] = detail::to_string(trainer.loss.noise);
    kv["loss.mode"] = trainer.loss.mode == LossMode::Sampled ? "sampled" : "exact";
    kv["loss.bc-clamp-min"] = detail::fmt_double(trainer.loss.bc_clamp_min);
    kv["loss.bc-clamp-max"] = detail::fmt_double(trainer.loss.bc_clamp_max);
    kv["loss.lambda-schedule"] =
        trainer.lambda_schedule == LambdaSchedule::Constant ? "constant" : "linear-warmup";
    kv["optim.optimizer"] = to_string(trainer.optim);
    kv["optim.lr"] = detail::fmt_double(trainer.lr);
    kv["optim.decay"] = detail::fmt_double(trainer.decay);
    kv["optim.patience"] = std::to_string(trainer.patience);
    kv["optim.batch-size"] = std::to_string(trainer.batch_size);
    kv["optim.max-epochs"] = std::to_string(trainer.max_epochs);
    kv["optim.eval-every"] = std::to_string(trainer.eval_every);
    kv["optim.reg-order"] = std::to_string(trainer.reg_order);
    kv["optim.reg-entity"] = detail::fmt_double(trainer.reg_entity);
    kv["optim.reg-relation"] = detail::fmt_double(trainer.reg_relation);
    kv["optim.dropout-entity"] = detail::fmt_double(trainer.dropout_entity);
    kv["optim.dropout-relation"] = detail::fmt_double(trainer.dropout_relation);
    kv["optim.backtracking"] = trainer.backtracking ? "true" : "false";
    kv["optim.threads"] = std::to_string(trainer.threads);
    kv["eval.split"] = eval_split;
    return kv;
}

// Canonical text form: sorted dotted keys, suitable for hashing and for
// feeding back through the parser.
inline std::string serialize_config(const RunConfig& rc) {
    std::ostringstream out;
    for (const auto& [k, v] : rc.resolved()) out << k << " = " << v << '\n';
    return out.str();
}

inline std::string config_hash(const RunConfig& rc) {
    std::string s = serialize_config(rc);
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Relative data paths resolve against BREGKGE_DATA_DIR when it is set.
inline std::string resolve_data_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty() || fs::path(path).is_absolute()) return path;
    if (fs::exists(path)) return path;
    const char* root = std::getenv("BREGKGE_DATA_DIR");
    if (root == nullptr) return path;
    return (fs::path(root) / path).string();
}

}  // namespace bregkge
