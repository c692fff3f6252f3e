#include "tiae/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tiae/errors.hpp"

namespace tiae {

void LossWeights::validate() const {
    if (!(lambda_inv >= 0.0) || !(lambda_res >= 0.0) || !(lambda_spa >= 0.0)) {
        throw ConfigError("loss weights must be non-negative");
    }
    if (lambda_inv == 0.0 && lambda_res == 0.0) {
        throw ConfigError("at least one of lambda_inv, lambda_res must be positive");
    }
}

namespace {

void require_same_shape(const ad::Var& restored, const ad::Var& batch) {
    if (restored.shape() != batch.shape()) {
        throw ShapeError("decoder output " + shape_to_string(restored.shape()) +
                         " does not match input " + shape_to_string(batch.shape()));
    }
}

ad::Var zero_scalar(ad::Graph& g) { return g.constant(Tensor::scalar(0.0)); }

ad::Var invariance_from(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                        ad::Var restored, const TransformGrid& grid) {
    std::vector<ShiftParam> shifts;
    for (const auto& p : grid.params()) {
        if (p != ShiftParam{0, 0}) {
            shifts.push_back(p);
        }
    }
    if (shifts.empty()) {
        return zero_scalar(batch.graph());
    }
    const std::size_t rows = batch.shape()[0];
    std::vector<ShiftParam> tiled;
    tiled.reserve(rows * shifts.size());
    for (std::size_t r = 0; r < rows; ++r) {
        tiled.insert(tiled.end(), shifts.begin(), shifts.end());
    }
    ad::Var shifted = ad::shift(ad::repeat_rows(batch, shifts.size()), std::move(tiled));
    ad::Var restored_shifted = dec.forward(enc.forward(shifted));
    return ad::sq_l2(ad::sub(ad::repeat_rows(restored, shifts.size()), restored_shifted));
}

RestorationTerm restoration_from(ad::Var batch, ad::Var restored, const TransformGrid& grid) {
    const Tensor& images = batch.value();
    const Tensor& out = restored.value();
    const std::size_t rows = images.dim(0);
    RestorationTerm term;
    std::vector<ShiftParam> chosen;
    chosen.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const Tensor image = images.row(r);
        const Tensor recon = out.row(r);
        std::size_t best = 0;
        double best_residual = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double residual =
                squared_distance(apply_shift(image, grid[i]).data(), recon.data());
            if (i == 0 || residual < best_residual) {
                best = i;
                best_residual = residual;
            }
        }
        term.argmin_indices.push_back(best);
        chosen.push_back(grid[best]);
    }
    term.value = ad::sq_l2(ad::sub(ad::shift(batch, std::move(chosen)), restored));
    return term;
}

} // namespace

ad::Var cost_ordinary(const BoundModel& enc, const BoundModel& dec, ad::Var batch) {
    ad::Var restored = dec.forward(enc.forward(batch));
    require_same_shape(restored, batch);
    return ad::sq_l2(ad::sub(batch, restored));
}

ad::Var cost_invariance(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                        const TransformGrid& grid) {
    ad::Var restored = dec.forward(enc.forward(batch));
    require_same_shape(restored, batch);
    return invariance_from(enc, dec, batch, restored, grid);
}

RestorationTerm cost_restoration(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                                 const TransformGrid& grid) {
    ad::Var restored = dec.forward(enc.forward(batch));
    require_same_shape(restored, batch);
    return restoration_from(batch, restored, grid);
}

ad::Var cost_sparsity(ad::Var descriptors) {
    ad::Var d = ad::flatten_rows(descriptors);
    ad::Var l2 = ad::row_l2_norm(d);
    for (std::size_t r = 0; r < l2.value().numel(); ++r) {
        if (l2.value()[r] <= ad::kNormEpsilon) {
            throw DegenerateError("descriptor " + std::to_string(r) + " has near-zero l2 norm");
        }
    }
    ad::Var ratio = ad::div(ad::row_l1_norm(d), l2);
    return ad::sum(ad::mul(ratio, ratio));
}

TotalCost cost_total(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                     const TransformGrid& grid, const LossWeights& weights) {
    ad::Var descriptors = enc.forward(batch);
    ad::Var restored = dec.forward(descriptors);
    require_same_shape(restored, batch);

    ad::Var c_inv = invariance_from(enc, dec, batch, restored, grid);
    RestorationTerm c_res = restoration_from(batch, restored, grid);
    ad::Var c_spa = cost_sparsity(descriptors);

    ad::Var total = ad::add(ad::add(ad::scale(c_inv, weights.lambda_inv),
                                    ad::scale(c_res.value, weights.lambda_res)),
                            ad::scale(c_spa, weights.lambda_spa));
    TotalCost out{total, {}};
    out.breakdown.c_inv = c_inv.value().item();
    out.breakdown.c_res = c_res.value.value().item();
    out.breakdown.c_spa = c_spa.value().item();
    out.breakdown.total = total.value().item();
    out.breakdown.argmin_indices = std::move(c_res.argmin_indices);
    return out;
}

Tensor shift_targets(const Model& enc, const Model& dec, const Tensor& batch,
                     const TransformGrid& grid) {
    const Tensor restored = dec.predict(enc.predict(batch));
    if (restored.shape() != batch.shape()) {
        throw ShapeError("decoder output " + shape_to_string(restored.shape()) +
                         " does not match input " + shape_to_string(batch.shape()));
    }
    const std::size_t rows = batch.dim(0);
    Tensor targets({rows, 2});
    for (std::size_t r = 0; r < rows; ++r) {
        const BestShift best = best_shift(batch.row(r), restored.row(r), grid);
        targets[2 * r] = best.param.dx;
        targets[2 * r + 1] = best.param.dy;
    }
    return targets;
}

ad::Var cost_param_inference(const BoundModel& reg, ad::Var batch, const Tensor& targets) {
    ad::Var predicted = reg.forward(batch);
    if (predicted.shape() != targets.shape()) {
        throw ShapeError("regressor output " + shape_to_string(predicted.shape()) +
                         " does not match targets " + shape_to_string(targets.shape()));
    }
    return ad::sq_l2(ad::sub(predicted, batch.graph().constant(targets)));
}

ParamInferenceTerm cost_param_inference(const BoundModel& reg, const Model& enc, const Model& dec,
                                        ad::Var batch, const TransformGrid& grid) {
    Tensor targets = shift_targets(enc, dec, batch.value(), grid);
    ad::Var value = cost_param_inference(reg, batch, targets);
    return ParamInferenceTerm{value, std::move(targets)};
}

LossBreakdown evaluate_total(const Model& enc, const Model& dec, const Tensor& batch,
                             const TransformGrid& grid, const LossWeights& weights) {
    ad::Graph g;
    const BoundModel e = enc.bind(g, false);
    const BoundModel d = dec.bind(g, false);
    return cost_total(e, d, g.constant(batch), grid, weights).breakdown;
}

} // namespace tiae
