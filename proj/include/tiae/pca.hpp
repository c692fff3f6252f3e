#pragma once

#include <cstddef>
#include <vector>

#include "tiae/tensor.hpp"

namespace tiae {

/// Linear baseline encoder/decoder: z = basis (x - mean), x = basis^T z + mean.
struct PcaModel {
    Tensor mean;  // [d_in]
    Tensor basis; // [k x d_in], orthonormal rows, ordered by decreasing variance
    /// Fraction of total variance captured by each kept component.
    std::vector<double> explained_variance_ratio;

    std::size_t k() const { return basis.dim(0); }
    std::size_t input_dim() const { return mean.numel(); }
    double cumulative_explained_variance() const;
};

/// Fits the top-k principal directions of `samples` (n x ..., rows flattened).
/// Requires n >= 2 and k <= min(n, d). Components with (numerically) zero
/// variance are dropped, so the returned k may be smaller than requested.
/// Each basis vector is signed so that its largest-magnitude entry is positive.
PcaModel pca_fit(const Tensor& samples, std::size_t k);

/// [n x ...] -> [n x k].
Tensor pca_encode(const PcaModel& model, const Tensor& samples);
/// [n x k] -> [n x d_in].
Tensor pca_decode(const PcaModel& model, const Tensor& codes);

} // namespace tiae
