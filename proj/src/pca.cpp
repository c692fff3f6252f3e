#include "tiae/pca.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "tiae/errors.hpp"

namespace tiae {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;

double PcaModel::cumulative_explained_variance() const {
    return std::accumulate(explained_variance_ratio.begin(), explained_variance_ratio.end(), 0.0);
}

PcaModel pca_fit(const Tensor& samples, std::size_t k) {
    const std::size_t n = samples.dim(0);
    const std::size_t d = samples.numel() / n;
    if (n < 2) {
        throw ShapeError("pca_fit: need at least 2 samples");
    }
    if (k == 0 || k > std::min(n, d)) {
        throw ShapeError("pca_fit: k = " + std::to_string(k) + " must be in [1, min(n, d) = " +
                         std::to_string(std::min(n, d)) + "]");
    }
    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(d);
    ConstMatMap x(samples.data().data(), rows, cols);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(n - 1);

    // Eigenvalues come back in increasing order.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw NumericError("pca_fit: eigendecomposition failed");
    }
    const Eigen::VectorXd& values = solver.eigenvalues();
    const Eigen::MatrixXd& vectors = solver.eigenvectors();
    const double total = std::max(values.sum(), 0.0);
    const double floor = 1e-12 * std::max(values(cols - 1), 0.0);

    std::size_t kept = 0;
    for (std::size_t i = 0; i < k; ++i) {
        if (values(cols - 1 - static_cast<Eigen::Index>(i)) > floor && values(cols - 1) > 0.0) {
            ++kept;
        } else {
            break;
        }
    }
    if (kept == 0) {
        throw NumericError("pca_fit: samples have zero variance");
    }

    PcaModel model;
    model.mean = Tensor({d});
    MatMap(model.mean.data().data(), 1, cols) = mean;
    model.basis = Tensor({kept, d});
    MatMap basis(model.basis.data().data(), static_cast<Eigen::Index>(kept), cols);
    for (std::size_t i = 0; i < kept; ++i) {
        const Eigen::Index src = cols - 1 - static_cast<Eigen::Index>(i);
        Eigen::VectorXd v = vectors.col(src);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) {
            v = -v;
        }
        basis.row(static_cast<Eigen::Index>(i)) = v.transpose();
        model.explained_variance_ratio.push_back(total > 0.0 ? values(src) / total : 0.0);
    }
    return model;
}

Tensor pca_encode(const PcaModel& model, const Tensor& samples) {
    const std::size_t n = samples.dim(0);
    const std::size_t d = samples.numel() / n;
    if (d != model.input_dim()) {
        throw ShapeError("pca_encode: sample width " + std::to_string(d) + " vs model " +
                         std::to_string(model.input_dim()));
    }
    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(d);
    const auto k = static_cast<Eigen::Index>(model.k());
    ConstMatMap x(samples.data().data(), rows, cols);
    ConstMatMap basis(model.basis.data().data(), k, cols);
    const Eigen::Map<const Eigen::RowVectorXd> mean(model.mean.data().data(), cols);
    Tensor codes({n, model.k()});
    MatMap(codes.data().data(), rows, k).noalias() = (x.rowwise() - mean) * basis.transpose();
    return codes;
}

Tensor pca_decode(const PcaModel& model, const Tensor& codes) {
    if (codes.rank() != 2 || codes.dim(1) != model.k()) {
        throw ShapeError("pca_decode: codes " + shape_to_string(codes.shape()) + " vs k = " +
                         std::to_string(model.k()));
    }
    const auto rows = static_cast<Eigen::Index>(codes.dim(0));
    const auto cols = static_cast<Eigen::Index>(model.input_dim());
    const auto k = static_cast<Eigen::Index>(model.k());
    Tensor out({codes.dim(0), model.input_dim()});
    MatMap y(out.data().data(), rows, cols);
    y.noalias() = ConstMatMap(codes.data().data(), rows, k) *
                  ConstMatMap(model.basis.data().data(), k, cols);
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(model.mean.data().data(), cols);
    return out;
}

} // namespace tiae
