#include "tiae/training.hpp"

#include <cmath>
#include <cstring>

#include "tiae/losses.hpp"
#include "tiae/transforms.hpp"

namespace tiae {

TrainingAborted::TrainingAborted(std::size_t step, std::string component, const std::string& detail)
    : NumericError("training aborted at step " + std::to_string(step) + " in " + component + ": " +
                   detail),
      step_(step),
      component_(std::move(component)) {}

Rng training_rng(std::uint64_t seed) { return Rng(seed ^ 0xA5A5A5A55A5A5A5AULL); }

Tensor gather_batch(const Dataset& data, std::span<const std::size_t> indices,
                    std::span<const ShiftParam> shifts) {
    if (!shifts.empty() && shifts.size() != indices.size()) {
        throw ShapeError("gather_batch: one shift per index required");
    }
    const Shape& item_shape = data.item_shape();
    const std::size_t item_size = shape_numel(item_shape);
    Shape shape{indices.size()};
    shape.insert(shape.end(), item_shape.begin(), item_shape.end());
    std::vector<double> values(indices.size() * item_size);
    const auto src = data.images().data();
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] >= data.size()) {
            throw std::out_of_range("gather_batch: index out of range");
        }
        const double* from = src.data() + indices[j] * item_size;
        double* to = values.data() + j * item_size;
        if (shifts.empty() || shifts[j] == ShiftParam{}) {
            std::memcpy(to, from, item_size * sizeof(double));
        } else {
            const Tensor shifted = apply_shift(Tensor(item_shape, std::vector<double>(from, from + item_size)), shifts[j]);
            std::memcpy(to, shifted.data().data(), item_size * sizeof(double));
        }
    }
    return Tensor(std::move(shape), std::move(values));
}

namespace {

void check_inputs(const Model& enc, const Model& dec, const Dataset& data) {
    if (data.is_empty()) {
        throw std::invalid_argument("training needs a non-empty dataset");
    }
    if (data.item_shape() != enc.input_shape()) {
        throw ShapeError("dataset items " + shape_to_string(data.item_shape()) +
                         " do not match encoder input " + shape_to_string(enc.input_shape()));
    }
    if (dec.input_shape() != enc.output_shape() || dec.output_shape() != enc.input_shape()) {
        throw ShapeError("decoder does not invert the encoder's shapes");
    }
}

bool all_finite(const std::vector<Tensor>& tensors) {
    for (const Tensor& t : tensors) {
        if (!t.all_finite()) {
            return false;
        }
    }
    return true;
}

// Re-evaluates the pieces of a failed update one at a time to find the first
// that produces a non-finite value.
std::string locate_failure(const Model& enc, const Model& dec, const Tensor& batch,
                           const TrainConfig& cfg) {
    if (!all_finite(enc.parameters())) {
        return "encoder parameters";
    }
    if (!all_finite(dec.parameters())) {
        return "decoder parameters";
    }
    auto fails = [&](auto&& fn) {
        try {
            ad::Graph g;
            const auto be = enc.bind(g, false);
            const auto bd = dec.bind(g, false);
            fn(be, bd, g.constant(batch));
            return false;
        } catch (const NumericError&) {
            return true;
        }
    };
    if (fails([](auto& be, auto&, ad::Var x) { be.forward(x); })) {
        return "encoder";
    }
    if (fails([](auto& be, auto& bd, ad::Var x) { bd.forward(be.forward(x)); })) {
        return "decoder";
    }
    if (cfg.mode == TrainMode::Ordinary) {
        return "c_ord";
    }
    if (fails([&](auto& be, auto& bd, ad::Var x) { cost_invariance(be, bd, x, cfg.grid); })) {
        return "c_inv";
    }
    if (fails([&](auto& be, auto& bd, ad::Var x) { cost_restoration(be, bd, x, cfg.grid); })) {
        return "c_res";
    }
    if (fails([&](auto& be, auto&, ad::Var x) { cost_sparsity(be.forward(x)); })) {
        return "c_spa";
    }
    return "total";
}

struct Sampler {
    const Dataset* data;
    const TrainConfig* cfg;
    bool shift_inputs;
    Rng rng;

    // Draws every index first, then one grid index per item when shifting.
    std::pair<std::vector<std::size_t>, std::vector<ShiftParam>> draw() {
        std::vector<std::size_t> indices(cfg->batch_size);
        for (auto& i : indices) {
            i = static_cast<std::size_t>(rng.uniform_index(data->size()));
        }
        std::vector<ShiftParam> shifts;
        if (shift_inputs) {
            shifts.reserve(indices.size());
            for (std::size_t j = 0; j < indices.size(); ++j) {
                const std::size_t g = cfg->grid.size() == 1
                                          ? 0
                                          : static_cast<std::size_t>(rng.uniform_index(cfg->grid.size()));
                shifts.push_back(cfg->grid[g]);
            }
        }
        return {std::move(indices), std::move(shifts)};
    }
};

Sampler make_sampler(const Dataset& data, const TrainConfig& cfg, bool shift_inputs,
                     const std::optional<TrainState>& resume) {
    return Sampler{&data, &cfg, shift_inputs,
                   resume ? Rng::from_state(resume->rng_state) : training_rng(cfg.seed)};
}

bool is_checkpoint_step(std::size_t step, const TrainConfig& cfg) {
    return step == cfg.total_updates || (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0);
}

bool is_log_step(std::size_t step, const TrainConfig& cfg) {
    return cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.total_updates);
}

double regressor_step(Model& reg, const Tensor& batch, const Tensor& targets, double lr,
                      std::size_t step) {
    ad::Graph g;
    const auto br = reg.bind(g);
    ad::Var loss;
    try {
        loss = cost_param_inference(br, g.constant(batch), targets);
    } catch (const NumericError& e) {
        throw TrainingAborted(step, all_finite(reg.parameters()) ? "c_par" : "regressor parameters",
                              e.what());
    }
    g.backward(loss);
    auto grads = br.gradients();
    if (!all_finite(grads)) {
        throw TrainingAborted(step, "regressor gradient", "non-finite gradient");
    }
    reg.sgd_step(grads, lr);
    return loss.value().item();
}

} // namespace

AutoencoderRun train_autoencoder(Model enc, Model dec, const Dataset& data, const TrainConfig& cfg,
                                 std::optional<TrainState> resume,
                                 const AutoencoderCheckpointFn& on_checkpoint,
                                 std::optional<Model> co_regressor) {
    if (cfg.mode == TrainMode::Regressor) {
        throw ConfigError("train_autoencoder: mode must be ordinary or invariant");
    }
    cfg.validate();
    check_inputs(enc, dec, data);
    if (resume && resume->step > cfg.total_updates) {
        throw ConfigError("resume step lies beyond total_updates");
    }
    if (co_regressor && co_regressor->input_shape() != enc.input_shape()) {
        throw ShapeError("co-trained regressor input does not match the encoder input");
    }

    const bool augment = cfg.mode == TrainMode::Ordinary && cfg.augment;
    Sampler sampler = make_sampler(data, cfg, augment, resume);
    AutoencoderRun run{std::move(enc), std::move(dec), {}, {}, std::move(co_regressor)};
    std::size_t step = resume ? resume->step : 0;

    while (step < cfg.total_updates) {
        ++step;
        const auto [indices, shifts] = sampler.draw();
        const Tensor batch = gather_batch(data, indices, shifts);

        std::optional<Tensor> reg_targets;
        if (run.regressor) {
            reg_targets = shift_targets(run.encoder, run.decoder, batch, cfg.grid);
        }

        ad::Graph g;
        const auto be = run.encoder.bind(g);
        const auto bd = run.decoder.bind(g);
        LossLogRow row{step};
        ad::Var total;
        try {
            const ad::Var x = g.constant(batch);
            if (cfg.mode == TrainMode::Invariant) {
                TotalCost cost = cost_total(be, bd, x, cfg.grid, cfg.weights);
                total = cost.total;
                row.c_inv = cost.breakdown.c_inv;
                row.c_res = cost.breakdown.c_res;
                row.c_spa = cost.breakdown.c_spa;
                row.total = cost.breakdown.total;
            } else {
                total = cost_ordinary(be, bd, x);
                row.c_res = total.value().item();
                row.total = row.c_res;
            }
        } catch (const NumericError& e) {
            throw TrainingAborted(step, locate_failure(run.encoder, run.decoder, batch, cfg), e.what());
        }
        g.backward(total);
        auto grad_enc = be.gradients();
        auto grad_dec = bd.gradients();
        if (!all_finite(grad_enc)) {
            throw TrainingAborted(step, "encoder gradient", "non-finite gradient");
        }
        if (!all_finite(grad_dec)) {
            throw TrainingAborted(step, "decoder gradient", "non-finite gradient");
        }
        run.encoder.sgd_step(grad_enc, cfg.learning_rate);
        run.decoder.sgd_step(grad_dec, cfg.learning_rate);
        if (run.regressor) {
            regressor_step(*run.regressor, batch, *reg_targets, cfg.learning_rate, step);
        }

        if (is_log_step(step, cfg)) {
            run.log.push_back(row);
        }
        if (on_checkpoint && is_checkpoint_step(step, cfg)) {
            on_checkpoint(run.encoder, run.decoder, TrainState{step, sampler.rng.state()});
        }
    }
    run.state = TrainState{step, sampler.rng.state()};
    return run;
}

RegressorRun train_regressor(Model reg, const Model& enc, const Model& dec, const Dataset& data,
                             const TrainConfig& cfg, std::optional<TrainState> resume,
                             const RegressorCheckpointFn& on_checkpoint) {
    cfg.validate();
    check_inputs(enc, dec, data);
    if (reg.input_shape() != enc.input_shape() || reg.spec().output_size() != 2) {
        throw ShapeError("regressor must map " + shape_to_string(enc.input_shape()) + " to 2 outputs");
    }
    if (data.size() < 2) {
        throw std::invalid_argument("train_regressor needs at least 2 items for a held-out split");
    }
    if (resume && resume->step > cfg.total_updates) {
        throw ConfigError("resume step lies beyond total_updates");
    }

    auto [train_set, holdout] = data.split_tail(cfg.holdout_fraction);
    Sampler sampler = make_sampler(train_set, cfg, cfg.augment, resume);
    RegressorRun run{std::move(reg), {}, {}, 0.0};
    std::size_t step = resume ? resume->step : 0;

    while (step < cfg.total_updates) {
        ++step;
        const auto [indices, shifts] = sampler.draw();
        const Tensor batch = gather_batch(train_set, indices, shifts);
        const Tensor targets = shift_targets(enc, dec, batch, cfg.grid);
        const double loss = regressor_step(run.regressor, batch, targets, cfg.learning_rate, step);
        if (is_log_step(step, cfg)) {
            run.log.push_back(LossLogRow{step, 0.0, 0.0, 0.0, loss});
        }
        if (on_checkpoint && is_checkpoint_step(step, cfg)) {
            on_checkpoint(run.regressor, TrainState{step, sampler.rng.state()});
        }
    }
    run.state = TrainState{step, sampler.rng.state()};

    std::vector<std::size_t> all(holdout.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        all[i] = i;
    }
    const std::vector<ShiftParam> shift_set =
        cfg.augment ? cfg.grid.params() : std::vector<ShiftParam>{ShiftParam{}};
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (const ShiftParam& p : shift_set) {
        const std::vector<ShiftParam> shifts(all.size(), p);
        const Tensor batch = gather_batch(holdout, all, shifts);
        const Tensor targets = shift_targets(enc, dec, batch, cfg.grid);
        const Tensor pred = run.regressor.predict(batch);
        for (std::size_t k = 0; k < targets.numel(); ++k) {
            abs_sum += std::abs(pred[k] - targets[k]);
        }
        count += targets.numel();
    }
    run.holdout_mae = abs_sum / static_cast<double>(count);
    return run;
}

CsvTable loss_log_table(const std::vector<LossLogRow>& log) {
    CsvTable table{{"step", "c_inv", "c_res", "c_spa", "total"}, {}};
    for (const LossLogRow& r : log) {
        table.rows.push_back({std::to_string(r.step), format_double(r.c_inv), format_double(r.c_res),
                              format_double(r.c_spa), format_double(r.total)});
    }
    return table;
}

CsvTable regressor_log_table(const std::vector<LossLogRow>& log) {
    CsvTable table{{"step", "c_par"}, {}};
    for (const LossLogRow& r : log) {
        table.rows.push_back({std::to_string(r.step), format_double(r.total)});
    }
    return table;
}

} // namespace tiae
