#include "tiae/model.hpp"

#include "tiae/errors.hpp"
#include "tiae/layers.hpp"

namespace tiae {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv2d:
        return "conv2d";
    case LayerKind::MaxPool:
        return "maxpool";
    case LayerKind::Dense:
        return "dense";
    case LayerKind::Tanh:
        return "tanh";
    case LayerKind::Reshape:
        return "reshape";
    }
    return "unknown";
}

LayerSpec LayerSpec::conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.out = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.window = window;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::tanh() { return LayerSpec{}; }

LayerSpec LayerSpec::reshape(Shape shape) {
    LayerSpec s;
    s.kind = LayerKind::Reshape;
    s.shape = std::move(shape);
    return s;
}

namespace {

std::string where(const ModelSpec& spec, std::size_t index) {
    return spec.name + " layer " + std::to_string(index) + " (" +
           layer_kind_name(spec.layers[index].kind) + ")";
}

} // namespace

Shape ModelSpec::output_shape() const {
    if (input_shape.empty() || shape_numel(input_shape) == 0) {
        throw ShapeError(name + ": input shape must be non-empty with positive extents");
    }
    Shape shape = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
        case LayerKind::Conv2d:
            if (shape.size() != 3) {
                throw ShapeError(where(*this, i) + ": expects [ch x h x w] input, got " +
                                 shape_to_string(shape));
            }
            if (l.out == 0 || l.kernel == 0) {
                throw ShapeError(where(*this, i) + ": channels and kernel must be positive");
            }
            shape = {l.out, conv_output_extent(shape[1], l.kernel, l.stride, l.padding),
                     conv_output_extent(shape[2], l.kernel, l.stride, l.padding)};
            break;
        case LayerKind::MaxPool:
            if (shape.size() != 3) {
                throw ShapeError(where(*this, i) + ": expects [ch x h x w] input, got " +
                                 shape_to_string(shape));
            }
            shape = {shape[0], pool_output_extent(shape[1], l.window, l.stride),
                     pool_output_extent(shape[2], l.window, l.stride)};
            break;
        case LayerKind::Dense:
            if (l.out == 0) {
                throw ShapeError(where(*this, i) + ": width must be positive");
            }
            shape = {l.out};
            break;
        case LayerKind::Tanh:
            break;
        case LayerKind::Reshape:
            if (l.shape.empty() || shape_numel(l.shape) != shape_numel(shape)) {
                throw ShapeError(where(*this, i) + ": cannot reshape " + shape_to_string(shape) +
                                 " to " + shape_to_string(l.shape));
            }
            shape = l.shape;
            break;
        }
    }
    return shape;
}

std::vector<Shape> Model::parameter_shapes(const ModelSpec& spec) {
    std::vector<Shape> shapes;
    Shape shape = spec.input_shape;
    for (const LayerSpec& l : spec.layers) {
        if (l.kind == LayerKind::Conv2d) {
            shapes.push_back({l.out, shape.at(0), l.kernel, l.kernel});
            shapes.push_back({l.out});
        } else if (l.kind == LayerKind::Dense) {
            shapes.push_back({l.out, shape_numel(shape)});
            shapes.push_back({l.out});
        }
        ModelSpec prefix{spec.name, shape, {l}};
        shape = prefix.output_shape();
    }
    return shapes;
}

Model::Model(ModelSpec spec, Rng& rng) : spec_(std::move(spec)) {
    spec_.output_shape();
    Shape shape = spec_.input_shape;
    for (const LayerSpec& l : spec_.layers) {
        if (l.kind == LayerKind::Conv2d) {
            Conv2dLayer conv = make_conv2d(shape.at(0), l.out, l.kernel, rng, l.stride, l.padding);
            params_.push_back(std::move(conv.kernel));
            params_.push_back(std::move(conv.bias));
        } else if (l.kind == LayerKind::Dense) {
            DenseLayer dense = make_dense(shape_numel(shape), l.out, rng);
            params_.push_back(std::move(dense.weight));
            params_.push_back(std::move(dense.bias));
        }
        shape = ModelSpec{spec_.name, shape, {l}}.output_shape();
    }
}

Model::Model(ModelSpec spec, std::vector<Tensor> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
    const auto shapes = parameter_shapes(spec_);
    if (shapes.size() != params_.size()) {
        throw ShapeError(spec_.name + ": expected " + std::to_string(shapes.size()) +
                         " parameter tensors, got " + std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i] != params_[i].shape()) {
            throw ShapeError(spec_.name + ": parameter " + std::to_string(i) + " has shape " +
                             shape_to_string(params_[i].shape()) + ", expected " +
                             shape_to_string(shapes[i]));
        }
    }
}

std::vector<std::string> Model::parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const std::string prefix = "layer" + std::to_string(i) + ".";
        if (spec_.layers[i].kind == LayerKind::Conv2d) {
            names.push_back(prefix + "kernel");
            names.push_back(prefix + "bias");
        } else if (spec_.layers[i].kind == LayerKind::Dense) {
            names.push_back(prefix + "weight");
            names.push_back(prefix + "bias");
        }
    }
    return names;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.numel();
    }
    return n;
}

Tensor Model::predict(const Tensor& batch) const {
    ad::Graph g;
    const BoundModel bound = bind(g, false);
    return bound.forward(g.constant(batch)).value();
}

void Model::sgd_step(const std::vector<Tensor>& grads, double learning_rate) {
    if (grads.size() != params_.size()) {
        throw ShapeError("sgd_step: gradient count mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (grads[i].shape() != params_[i].shape()) {
            throw ShapeError("sgd_step: gradient shape mismatch for parameter " + std::to_string(i));
        }
        auto p = params_[i].data();
        auto g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] -= learning_rate * g[j];
        }
    }
}

BoundModel::BoundModel(const Model& model, ad::Graph& graph, bool trainable)
    : model_(&model), graph_(&graph) {
    for (const Tensor& p : model.parameters()) {
        params_.push_back(graph.leaf(p, trainable));
    }
}

ad::Var BoundModel::forward(ad::Var x) const {
    const ModelSpec& spec = model_->spec();
    const Shape& xs = x.shape();
    if (xs.size() != spec.input_shape.size() + 1 ||
        !std::equal(spec.input_shape.begin(), spec.input_shape.end(), xs.begin() + 1)) {
        throw ShapeError(spec.name + ": input " + shape_to_string(xs) +
                         " does not match [batch x " + shape_to_string(spec.input_shape) + "]");
    }
    const std::size_t batch = xs[0];
    std::size_t p = 0;
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
        case LayerKind::Conv2d:
            x = ad::conv2d(x, params_[p], params_[p + 1], l.stride, l.padding);
            p += 2;
            break;
        case LayerKind::MaxPool:
            x = ad::maxpool2d(x, l.window, l.stride);
            break;
        case LayerKind::Dense:
            x = ad::linear(ad::flatten_rows(x), params_[p], params_[p + 1]);
            p += 2;
            break;
        case LayerKind::Tanh:
            x = ad::tanh(x);
            break;
        case LayerKind::Reshape: {
            Shape target{batch};
            target.insert(target.end(), l.shape.begin(), l.shape.end());
            x = ad::reshape(x, std::move(target));
            break;
        }
        }
    }
    return x;
}

std::vector<Tensor> BoundModel::gradients() const {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (const ad::Var& v : params_) {
        grads.push_back(graph_->grad(v));
    }
    return grads;
}

ModelSpec mlp_spec(std::string name, Shape input_shape, const std::vector<std::size_t>& widths,
                   Shape output_reshape) {
    ModelSpec spec{std::move(name), std::move(input_shape), {}};
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i != 0) {
            spec.layers.push_back(LayerSpec::tanh());
        }
        spec.layers.push_back(LayerSpec::dense(widths[i]));
    }
    if (!output_reshape.empty()) {
        spec.layers.push_back(LayerSpec::reshape(std::move(output_reshape)));
    }
    spec.output_shape();
    return spec;
}

ModelSpec mnist_encoder_spec() {
    ModelSpec spec{"mnist-encoder",
                   {1, 32, 32},
                   {LayerSpec::conv2d(16, 9), LayerSpec::tanh(), LayerSpec::maxpool(2, 2),
                    LayerSpec::dense(1500), LayerSpec::tanh(), LayerSpec::dense(150),
                    LayerSpec::tanh(), LayerSpec::dense(30)}};
    spec.output_shape();
    return spec;
}

ModelSpec mnist_decoder_spec() { return mlp_spec("mnist-decoder", {30}, {150, 1500, 1024}, {1, 32, 32}); }

ModelSpec shift_regressor_spec(Shape input_shape, std::vector<std::size_t> hidden) {
    hidden.push_back(2);
    return mlp_spec("shift-regressor", std::move(input_shape), hidden);
}

ModelSpec desk_encoder_spec() {
    ModelSpec spec{"desk-encoder",
                   {1, 16, 16},
                   {LayerSpec::conv2d(4, 5), LayerSpec::tanh(), LayerSpec::maxpool(2, 2),
                    LayerSpec::dense(64), LayerSpec::tanh(), LayerSpec::dense(32), LayerSpec::tanh(),
                    LayerSpec::dense(8)}};
    spec.output_shape();
    return spec;
}

ModelSpec desk_decoder_spec() { return mlp_spec("desk-decoder", {8}, {32, 64, 256}, {1, 16, 16}); }

ModelSpec desk_regressor_spec() { return shift_regressor_spec({1, 16, 16}, {64, 32}); }

} // namespace tiae
