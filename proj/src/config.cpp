#include "gsd/config.hpp"

#include <cstdlib>

#include "gsd/io.hpp"

namespace gsd {

namespace {

const std::map<std::string, std::string>& default_table() {
    static const std::map<std::string, std::string> defaults = {
        {"encoder.image_size", "32"},
        {"encoder.patch_size", "4"},
        {"encoder.dim", "64"},
        {"encoder.heads", "4"},
        {"encoder.depth", "6"},
        {"encoder.mlp_ratio", "4.0"},
        // Paper-scale values (K = 16, last 4 of 24 layers) are documented
        // in the README; the toy defaults target the synthetic benchmark.
        {"gsd.num_tail_layers", "2"},
        {"gsd.k", "8"},
        {"gsd.anchor_mode", "gap"},
        {"gsd.eval_basis_mode", "per_batch"},
        {"train.lr", "0.001"},
        {"train.batch", "32"},
        {"train.epochs", "12"},
        {"train.seed", "1"},
        {"train.weight_decay", "0.01"},
        {"train.pretrain_epochs", "4"},
        {"train.pretrain_lr", "0.001"},
        {"train.frozen_init", "pretrained"},
        {"train.frozen_ckpt", ""},
        {"data.dir", ""},
        {"data.n_identities", "20"},
        {"data.samples_per_identity", "40"},
        {"data.image_size", "32"},
        {"data.semantic_strength", "1.0"},
        {"data.artifact_strength", "0.15"},
        {"data.noise_sigma", "0.05"},
        {"data.seed", "42"},
        {"out.dir", "out"},
        {"sweep.seeds", "1,2,3,4,5"},
    };
    return defaults;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(default_table()) {}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_string(read_text_file(path));
}

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig config;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (default_table().find(key) == default_table().end()) {
        throw ConfigError("unknown config key: " + key);
    }
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

void RunConfig::apply_env_overrides() {
    if (const char* env = std::getenv("GSD_SEED")) {
        set("train.seed", env);
    }
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const unsigned long long parsed = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + v + "' is not a non-negative integer");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        const double parsed = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": '" + v + "' is not a number");
    }
}

EncoderConfig RunConfig::encoder() const {
    EncoderConfig cfg;
    cfg.image_size = get_u64("encoder.image_size");
    cfg.patch_size = get_u64("encoder.patch_size");
    cfg.dim = get_u64("encoder.dim");
    cfg.heads = get_u64("encoder.heads");
    cfg.depth = get_u64("encoder.depth");
    cfg.mlp_ratio = get_double("encoder.mlp_ratio");
    cfg.validate();
    return cfg;
}

GsdConfig RunConfig::gsd() const {
    GsdConfig cfg;
    cfg.num_tail_layers = get_u64("gsd.num_tail_layers");
    cfg.requested_k = get_u64("gsd.k");
    const std::string& mode = get("gsd.anchor_mode");
    if (mode == "gap") {
        cfg.anchor_mode = AnchorMode::GAP;
    } else if (mode == "cls") {
        cfg.anchor_mode = AnchorMode::CLS;
    } else {
        throw ConfigError("gsd.anchor_mode must be gap or cls, got '" + mode + "'");
    }
    const std::string& eval_mode = get("gsd.eval_basis_mode");
    if (eval_mode == "per_batch") {
        cfg.eval_basis_mode = EvalBasisMode::PerBatch;
    } else if (eval_mode == "frozen_train_basis") {
        cfg.eval_basis_mode = EvalBasisMode::FrozenTrainBasis;
    } else {
        throw ConfigError("gsd.eval_basis_mode must be per_batch or frozen_train_basis, got '" +
                          eval_mode + "'");
    }
    if (cfg.num_tail_layers > get_u64("encoder.depth")) {
        throw ConfigError("gsd.num_tail_layers exceeds encoder.depth");
    }
    return cfg;
}

TrainParams RunConfig::train() const {
    TrainParams p;
    p.lr = get_double("train.lr");
    p.batch = get_u64("train.batch");
    p.epochs = get_u64("train.epochs");
    p.seed = get_u64("train.seed");
    p.weight_decay = get_double("train.weight_decay");
    p.pretrain_epochs = get_u64("train.pretrain_epochs");
    p.pretrain_lr = get_double("train.pretrain_lr");
    const std::string& init = get("train.frozen_init");
    if (init == "pretrained") {
        p.frozen_random_init = false;
    } else if (init == "random") {
        p.frozen_random_init = true;
    } else {
        throw ConfigError("train.frozen_init must be pretrained or random, got '" + init + "'");
    }
    p.frozen_ckpt = get("train.frozen_ckpt");
    if (p.batch == 0) throw ConfigError("train.batch must be > 0");
    return p;
}

SynthConfig RunConfig::data() const {
    SynthConfig cfg;
    cfg.n_identities = get_u64("data.n_identities");
    cfg.samples_per_identity = get_u64("data.samples_per_identity");
    cfg.image_size = get_u64("data.image_size");
    cfg.semantic_strength = get_double("data.semantic_strength");
    cfg.artifact_strength = get_double("data.artifact_strength");
    cfg.noise_sigma = get_double("data.noise_sigma");
    cfg.validate();
    return cfg;
}

std::uint64_t RunConfig::data_seed() const { return get_u64("data.seed"); }

std::string RunConfig::out_dir() const { return get("out.dir"); }

std::string RunConfig::data_dir() const {
    const std::string& d = get("data.dir");
    return d.empty() ? out_dir() : d;
}

std::vector<std::uint64_t> RunConfig::sweep_seeds() const {
    const std::string& text = get("sweep.seeds");
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = trim(text.substr(pos, comma - pos));
        if (!item.empty()) {
            try {
                seeds.push_back(std::stoull(item));
            } catch (const std::exception&) {
                throw ConfigError("sweep.seeds: '" + item + "' is not an integer");
            }
        }
        pos = comma + 1;
    }
    if (seeds.empty()) throw ConfigError("sweep.seeds is empty");
    return seeds;
}

}  // namespace gsd
