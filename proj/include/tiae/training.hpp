#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tiae/config.hpp"
#include "tiae/data_io.hpp"
#include "tiae/errors.hpp"
#include "tiae/model.hpp"
#include "tiae/rng.hpp"

namespace tiae {

/// A non-finite value stopped training. `step` is the 1-based update that
/// failed; `component` names the cost term or stage that produced it.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(std::size_t step, std::string component, const std::string& detail);

    std::size_t step() const noexcept { return step_; }
    const std::string& component() const noexcept { return component_; }

private:
    std::size_t step_;
    std::string component_;
};

/// Loss values of one update. Ordinary mode reports its reconstruction cost
/// as c_res with c_inv = c_spa = 0; regressor mode reports C_par as total.
struct LossLogRow {
    std::size_t step = 0;
    double c_inv = 0.0;
    double c_res = 0.0;
    double c_spa = 0.0;
    double total = 0.0;

    bool operator==(const LossLogRow&) const = default;
};

/// Everything besides the parameters needed to continue a run exactly.
struct TrainState {
    std::size_t step = 0;
    Rng::State rng_state{};
};

/// Stream seed for batch sampling, kept apart from the initialization stream.
Rng training_rng(std::uint64_t seed);

/// Called after update `state.step` whenever it is a multiple of
/// checkpoint_every, and once after the final update.
using AutoencoderCheckpointFn =
    std::function<void(const Model& enc, const Model& dec, const TrainState& state)>;
using RegressorCheckpointFn = std::function<void(const Model& reg, const TrainState& state)>;

struct AutoencoderRun {
    Model encoder;
    Model decoder;
    std::vector<LossLogRow> log;
    TrainState state;
    /// Present when a regressor was co-trained.
    std::optional<Model> regressor;
};

/// SGD on cost_total (invariant mode) or cost_ordinary (ordinary mode). Each
/// update samples batch_size items uniformly with replacement. In ordinary
/// mode with augment set, each sampled image is replaced by a uniformly drawn
/// grid shift of itself (no draw is made when the grid has one element).
/// With a co-trained regressor, every update also takes one C_par step on
/// the same batch, with targets from the autoencoder before its update.
AutoencoderRun train_autoencoder(Model enc, Model dec, const Dataset& data, const TrainConfig& cfg,
                                 std::optional<TrainState> resume = std::nullopt,
                                 const AutoencoderCheckpointFn& on_checkpoint = {},
                                 std::optional<Model> co_regressor = std::nullopt);

struct RegressorRun {
    Model regressor;
    std::vector<LossLogRow> log;
    TrainState state;
    /// Mean absolute (dx, dy) error in pixels, averaged over both axes, on the
    /// held-out tail of `data` (every grid shift of it when augment is set).
    double holdout_mae = 0.0;
};

/// SGD on C_par with the autoencoder frozen. Trains on all but the trailing
/// holdout_fraction of `data`. With augment set, each sampled input is a
/// uniformly drawn grid shift of the item.
RegressorRun train_regressor(Model reg, const Model& enc, const Model& dec, const Dataset& data,
                             const TrainConfig& cfg, std::optional<TrainState> resume = std::nullopt,
                             const RegressorCheckpointFn& on_checkpoint = {});

/// Rows of the loss log CSV: step, c_inv, c_res, c_spa, total.
CsvTable loss_log_table(const std::vector<LossLogRow>& log);
/// Regressor log CSV: step, c_par.
CsvTable regressor_log_table(const std::vector<LossLogRow>& log);

/// Gathers items by index into a [k x item_shape...] batch, shifting item j
/// by shifts[j] when given.
Tensor gather_batch(const Dataset& data, std::span<const std::size_t> indices,
                    std::span<const ShiftParam> shifts = {});

} // namespace tiae
