#pragma once

#include <cstddef>
#include <vector>

#include "tiae/autodiff.hpp"
#include "tiae/model.hpp"
#include "tiae/transforms.hpp"

namespace tiae {

struct LossWeights {
    double lambda_inv = 1.0;
    double lambda_res = 1.0;
    double lambda_spa = 0.01;

    /// Throws ConfigError unless all weights are non-negative and at least
    /// one of lambda_inv, lambda_res is positive.
    void validate() const;
};

struct LossBreakdown {
    double c_inv = 0.0;
    double c_res = 0.0;
    double c_spa = 0.0;
    double total = 0.0;
    /// Grid index chosen by the restoration term for each sample.
    std::vector<std::size_t> argmin_indices;
};

// All costs are sums over the batch (not means). Batches are
// [batch x input_shape...] graph nodes; images may carry gradients.

/// sum_I ||I - D(E(I))||^2.
ad::Var cost_ordinary(const BoundModel& enc, const BoundModel& dec, ad::Var batch);

/// sum_I sum_i ||D(E(I)) - D(E(T_i(I)))||^2. Identity grid elements contribute
/// exactly zero and are skipped.
ad::Var cost_invariance(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                        const TransformGrid& grid);

struct RestorationTerm {
    ad::Var value;
    std::vector<std::size_t> argmin_indices;
};

/// sum_I min_i ||T_i(I) - D(E(I))||^2. The argmin is fixed during the forward
/// pass (earliest index on ties) and only that branch carries gradient.
RestorationTerm cost_restoration(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                                 const TransformGrid& grid);

/// sum over rows of (||e||_1 / ||e||_2)^2 for descriptors [batch x d]. Throws
/// DegenerateError when a row has norm <= ad::kNormEpsilon.
ad::Var cost_sparsity(ad::Var descriptors);

struct TotalCost {
    ad::Var total;
    LossBreakdown breakdown;
};

/// lambda_inv C_inv + lambda_res C_res + lambda_spa C_spa, sharing one
/// encoding of the batch between the terms.
TotalCost cost_total(const BoundModel& enc, const BoundModel& dec, ad::Var batch,
                     const TransformGrid& grid, const LossWeights& weights);

struct ParamInferenceTerm {
    ad::Var value;
    /// [batch x 2] brute-force (dx, dy) targets.
    Tensor targets;
};

/// Target shifts theta* = argmin_theta ||I - T_theta(D(E(I)))||^2 for each row
/// of `batch`, computed with the autoencoder frozen. Shape [batch x 2].
Tensor shift_targets(const Model& enc, const Model& dec, const Tensor& batch,
                     const TransformGrid& grid);

/// sum_I ||R(I) - theta*(I)||^2. Only the regressor receives gradient; the
/// encoder and decoder are evaluated outside the graph.
ParamInferenceTerm cost_param_inference(const BoundModel& reg, const Model& enc, const Model& dec,
                                        ad::Var batch, const TransformGrid& grid);
/// Same cost against precomputed targets [batch x 2].
ad::Var cost_param_inference(const BoundModel& reg, ad::Var batch, const Tensor& targets);

/// Value-only evaluation of cost_total (no gradients kept).
LossBreakdown evaluate_total(const Model& enc, const Model& dec, const Tensor& batch,
                             const TransformGrid& grid, const LossWeights& weights);

} // namespace tiae
