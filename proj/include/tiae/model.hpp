#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tiae/autodiff.hpp"
#include "tiae/rng.hpp"
#include "tiae/tensor.hpp"

namespace tiae {

enum class LayerKind { Conv2d, MaxPool, Dense, Tanh, Reshape };

const char* layer_kind_name(LayerKind kind);

/// One stage of a sequential model. Only the fields relevant to `kind` are read:
/// Conv2d uses out/kernel/stride/padding, MaxPool uses window/stride, Dense
/// uses out, Reshape uses shape (per-sample extents).
struct LayerSpec {
    LayerKind kind = LayerKind::Tanh;
    std::size_t out = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t window = 2;
    Shape shape;

    static LayerSpec conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0);
    static LayerSpec maxpool(std::size_t window, std::size_t stride);
    static LayerSpec dense(std::size_t out);
    static LayerSpec tanh();
    static LayerSpec reshape(Shape shape);

    bool operator==(const LayerSpec&) const = default;
};

/// A sequential architecture. Dense layers flatten their input.
struct ModelSpec {
    std::string name;
    Shape input_shape; // per sample, without the batch axis
    std::vector<LayerSpec> layers;

    /// Per-sample output extents. Throws ShapeError when adjacent layers are
    /// incompatible.
    Shape output_shape() const;
    std::size_t output_size() const { return shape_numel(output_shape()); }

    bool operator==(const ModelSpec&) const = default;
};

class Model;

/// A model whose parameters are leaves of one graph.
class BoundModel {
public:
    BoundModel(const Model& model, ad::Graph& graph, bool trainable);

    /// x has shape [batch x input_shape...].
    ad::Var forward(ad::Var x) const;

    const std::vector<ad::Var>& params() const noexcept { return params_; }
    /// Gradients after Graph::backward, in Model::parameters() order.
    std::vector<Tensor> gradients() const;

private:
    const Model* model_;
    ad::Graph* graph_;
    std::vector<ad::Var> params_;
};

class Model {
public:
    /// Glorot-initialized parameters drawn from `rng` in layer order.
    Model(ModelSpec spec, Rng& rng);
    /// Takes ownership of `params`; they must match the spec's shapes.
    Model(ModelSpec spec, std::vector<Tensor> params);

    const ModelSpec& spec() const noexcept { return spec_; }
    const Shape& input_shape() const noexcept { return spec_.input_shape; }
    Shape output_shape() const { return spec_.output_shape(); }

    std::vector<Tensor>& parameters() noexcept { return params_; }
    const std::vector<Tensor>& parameters() const noexcept { return params_; }
    /// Names such as "layer0.kernel", aligned with parameters().
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const;

    /// Expected parameter shapes for `spec`, in order.
    static std::vector<Shape> parameter_shapes(const ModelSpec& spec);

    BoundModel bind(ad::Graph& graph, bool trainable = true) const {
        return BoundModel(*this, graph, trainable);
    }

    /// Forward pass without gradient tracking.
    Tensor predict(const Tensor& batch) const;

    /// params -= learning_rate * grads.
    void sgd_step(const std::vector<Tensor>& grads, double learning_rate);

    bool operator==(const Model&) const = default;

private:
    ModelSpec spec_;
    std::vector<Tensor> params_;
};

/// Generic fully connected stack: dense(widths[0]) tanh dense(widths[1]) ...,
/// tanh between layers, linear last layer, optional reshape of the output.
ModelSpec mlp_spec(std::string name, Shape input_shape, const std::vector<std::size_t>& widths,
                   Shape output_reshape = {});

/// conv(1->16, 9x9) tanh maxpool(2,2) dense 1500 tanh dense 150 tanh dense 30, on 1x32x32.
ModelSpec mnist_encoder_spec();
/// dense 150 tanh dense 1500 tanh dense 1024, reshaped to 1x32x32.
ModelSpec mnist_decoder_spec();
/// 1024 -> 256 -> 64 -> 2 with tanh between layers; outputs (dx, dy).
ModelSpec shift_regressor_spec(Shape input_shape = {1, 32, 32},
                               std::vector<std::size_t> hidden = {256, 64});

/// Scaled-down counterparts on 1x16x16 canvases.
ModelSpec desk_encoder_spec();
ModelSpec desk_decoder_spec();
ModelSpec desk_regressor_spec();

} // namespace tiae
