#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "tiae/data_io.hpp"
#include "tiae/losses.hpp"
#include "tiae/model.hpp"
#include "tiae/transforms.hpp"

namespace tiae {

enum class TrainMode { Ordinary, Invariant, Regressor };

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
    double learning_rate = 1.0e-3;
    std::size_t batch_size = 50;
    std::size_t total_updates = 100000;
    LossWeights weights;
    std::uint64_t seed = 0;
    TransformGrid grid = paper_grid();
    /// 0 writes only the final checkpoint.
    std::size_t checkpoint_every = 0;
    /// 0 disables loss logging.
    std::size_t log_every = 100;
    TrainMode mode = TrainMode::Invariant;
    /// Ordinary mode: replace each sampled image by a uniformly drawn grid
    /// shift of itself. Regressor mode: train on grid-shifted inputs.
    bool augment = true;
    /// Regressor mode: fraction of the data held out for the final error report.
    double holdout_fraction = 0.1;
    /// Autoencoder modes: also train the shift regressor on every batch,
    /// with targets from the current (frozen per update) autoencoder.
    bool co_train = false;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct SyntheticDataConfig {
    std::size_t canvas = 16;
    std::size_t motif_size = 8;
    std::size_t count_per_motif = 100;
    std::size_t test_count_per_motif = 20;
    std::size_t placement_stride = 2;
};

/// Everything one run needs: data source settings, architectures and the two
/// training schedules (autoencoder, shift regressor).
struct ExperimentConfig {
    std::string profile = "desk";
    std::uint64_t seed = 0;
    SyntheticDataConfig synthetic;
    /// Square extent IDX images are zero-padded to on load (0 = no padding).
    std::size_t pad_to = 32;
    ModelSpec encoder;
    ModelSpec decoder;
    ModelSpec regressor;
    TrainConfig training;
    TrainConfig regressor_training;

    void validate() const;
};

/// Scaled-down profile: 16x16 canvas, {-4..4 step 2}^2 grid, 5000 updates,
/// batch 10, learning rate 3e-3, lambda_inv 0.07.
ExperimentConfig desk_profile();
/// MNIST architecture and schedule: 32x32 input, {-8..8 step 2}^2, 100000 updates.
ExperimentConfig paper_profile();

nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json to_json(const TransformGrid& grid);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// `field` is the dotted path used in error messages.
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& field);
TransformGrid grid_from_json(const nlohmann::json& j, const std::string& field);

/// Parses a config document. Keys that are absent keep the values of
/// desk_profile(), or of paper_profile() when "profile" is "paper". Parse
/// errors carry line and column; schema errors name the field.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Synthetic motif data for `cfg`: the training split is seeded with cfg.seed,
/// the test split with cfg.seed + 1 and test_count_per_motif items per motif.
Dataset make_synthetic(const ExperimentConfig& cfg, bool test_split);

/// FNV-1a digest of the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

} // namespace tiae
