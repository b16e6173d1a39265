#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gsd/encoder.hpp"
#include "gsd/projection.hpp"
#include "gsd/synthgen.hpp"

namespace gsd {

// Training hyperparameters resolved from a RunConfig.
struct TrainParams {
    double lr = 1e-3;
    std::size_t batch = 32;
    std::size_t epochs = 12;
    std::uint64_t seed = 1;
    double weight_decay = 0.01;
    std::size_t pretrain_epochs = 4;
    double pretrain_lr = 1e-3;
    bool frozen_random_init = false;  // ablation: skip identity pretraining
    std::string frozen_ckpt;          // when set, load the frozen stream instead
};

// Flat key/value experiment description. Every key has a documented
// default; unknown keys are rejected. `key = value` per line, `#` starts a
// comment.
class RunConfig {
  public:
    RunConfig();  // all defaults

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);

    // Throws ConfigError for keys outside the default table.
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    // Applies GSD_SEED to train.seed when the variable is set.
    void apply_env_overrides();

    // Fully-resolved `key = value` lines, sorted; echoed to
    // out.dir/config.resolved by every command.
    std::string resolved_text() const;

    EncoderConfig encoder() const;
    GsdConfig gsd() const;
    TrainParams train() const;
    // Synthetic data parameters; domain and per-split seed are filled by
    // the caller from data.seed.
    SynthConfig data() const;
    std::uint64_t data_seed() const;
    std::string out_dir() const;
    // Directory train/eval read datasets from; data.dir, or out.dir when
    // data.dir is empty.
    std::string data_dir() const;
    std::vector<std::uint64_t> sweep_seeds() const;

    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace gsd
