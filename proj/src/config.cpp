#include "tiae/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "tiae/data_io.hpp"
#include "tiae/errors.hpp"

namespace tiae {

using nlohmann::json;

const char* train_mode_name(TrainMode mode) {
    switch (mode) {
    case TrainMode::Ordinary:
        return "ordinary";
    case TrainMode::Invariant:
        return "invariant";
    case TrainMode::Regressor:
        return "regressor";
    }
    return "unknown";
}

TrainMode parse_train_mode(const std::string& name) {
    if (name == "ordinary") {
        return TrainMode::Ordinary;
    }
    if (name == "invariant") {
        return TrainMode::Invariant;
    }
    if (name == "regressor") {
        return TrainMode::Regressor;
    }
    throw ConfigError("unknown training mode '" + name + "' (expected ordinary|invariant|regressor)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning_rate: must be positive");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size: must be positive");
    }
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout_fraction: must lie in (0, 1)");
    }
    if (mode != TrainMode::Regressor) {
        try {
            weights.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("weights: ") + e.what());
        }
    }
}

void ExperimentConfig::validate() const {
    try {
        training.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("training.") + e.what());
    }
    try {
        regressor_training.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("regressor_training.") + e.what());
    }
    try {
        encoder.output_shape();
        regressor.output_shape();
        if (decoder.input_shape != encoder.output_shape()) {
            throw ConfigError("decoder.input_shape " + shape_to_string(decoder.input_shape) +
                              " does not match encoder output " +
                              shape_to_string(encoder.output_shape()));
        }
        if (decoder.output_shape() != encoder.input_shape) {
            throw ConfigError("decoder output " + shape_to_string(decoder.output_shape()) +
                              " does not match encoder.input_shape " +
                              shape_to_string(encoder.input_shape));
        }
        if (regressor.input_shape != encoder.input_shape || regressor.output_size() != 2) {
            throw ConfigError("regressor must map the encoder input shape to 2 outputs");
        }
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (synthetic.motif_size > synthetic.canvas || synthetic.placement_stride == 0 ||
        synthetic.count_per_motif == 0 || synthetic.test_count_per_motif == 0) {
        throw ConfigError("synthetic: motif must fit the canvas and counts/stride must be positive");
    }
}

ExperimentConfig desk_profile() {
    ExperimentConfig cfg;
    cfg.profile = "desk";
    cfg.seed = 20170101;
    cfg.pad_to = 16;
    cfg.encoder = desk_encoder_spec();
    cfg.decoder = desk_decoder_spec();
    cfg.regressor = desk_regressor_spec();

    cfg.training.learning_rate = 3.0e-3;
    cfg.training.batch_size = 10;
    cfg.training.total_updates = 5000;
    cfg.training.weights.lambda_inv = 0.07;
    cfg.training.grid = desk_grid();
    cfg.training.log_every = 1;
    cfg.training.checkpoint_every = 0;
    cfg.training.seed = cfg.seed;

    cfg.regressor_training = cfg.training;
    cfg.regressor_training.mode = TrainMode::Regressor;
    cfg.regressor_training.total_updates = 5000;
    return cfg;
}

ExperimentConfig paper_profile() {
    ExperimentConfig cfg;
    cfg.profile = "paper";
    cfg.seed = 20170101;
    cfg.pad_to = 32;
    cfg.synthetic.canvas = 32;
    cfg.synthetic.motif_size = 16;
    cfg.encoder = mnist_encoder_spec();
    cfg.decoder = mnist_decoder_spec();
    cfg.regressor = shift_regressor_spec();

    cfg.training.learning_rate = 1.0e-3;
    cfg.training.batch_size = 50;
    cfg.training.total_updates = 100000;
    cfg.training.grid = paper_grid();
    cfg.training.log_every = 100;
    cfg.training.checkpoint_every = 10000;
    cfg.training.seed = cfg.seed;

    cfg.regressor_training = cfg.training;
    cfg.regressor_training.mode = TrainMode::Regressor;
    return cfg;
}

json to_json(const ModelSpec& spec) {
    json layers = json::array();
    for (const LayerSpec& l : spec.layers) {
        json j{{"type", layer_kind_name(l.kind)}};
        switch (l.kind) {
        case LayerKind::Conv2d:
            j["out_channels"] = l.out;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::MaxPool:
            j["window"] = l.window;
            j["stride"] = l.stride;
            break;
        case LayerKind::Dense:
            j["out"] = l.out;
            break;
        case LayerKind::Tanh:
            break;
        case LayerKind::Reshape:
            j["shape"] = l.shape;
            break;
        }
        layers.push_back(std::move(j));
    }
    return json{{"name", spec.name}, {"input_shape", spec.input_shape}, {"layers", layers}};
}

json to_json(const TransformGrid& grid) {
    json shifts = json::array();
    for (const auto& p : grid.params()) {
        shifts.push_back(json::array({p.dx, p.dy}));
    }
    return json{{"shifts", shifts}};
}

json to_json(const TrainConfig& cfg) {
    return json{{"mode", train_mode_name(cfg.mode)},
                {"learning_rate", cfg.learning_rate},
                {"batch_size", cfg.batch_size},
                {"total_updates", cfg.total_updates},
                {"lambda_inv", cfg.weights.lambda_inv},
                {"lambda_res", cfg.weights.lambda_res},
                {"lambda_spa", cfg.weights.lambda_spa},
                {"seed", cfg.seed},
                {"grid", to_json(cfg.grid)},
                {"checkpoint_every", cfg.checkpoint_every},
                {"log_every", cfg.log_every},
                {"augment", cfg.augment},
                {"holdout_fraction", cfg.holdout_fraction},
                {"co_train", cfg.co_train}};
}

json to_json(const ExperimentConfig& cfg) {
    return json{{"profile", cfg.profile},
                {"seed", cfg.seed},
                {"pad_to", cfg.pad_to},
                {"synthetic",
                 {{"canvas", cfg.synthetic.canvas},
                  {"motif_size", cfg.synthetic.motif_size},
                  {"count_per_motif", cfg.synthetic.count_per_motif},
                  {"test_count_per_motif", cfg.synthetic.test_count_per_motif},
                  {"placement_stride", cfg.synthetic.placement_stride}}},
                {"encoder", to_json(cfg.encoder)},
                {"decoder", to_json(cfg.decoder)},
                {"regressor", to_json(cfg.regressor)},
                {"training", to_json(cfg.training)},
                {"regressor_training", to_json(cfg.regressor_training)}};
}

namespace {

std::string join(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

void require_object(const json& j, const std::string& field) {
    if (!j.is_object()) {
        throw ConfigError(field + ": expected an object");
    }
}

void reject_unknown(const json& j, const std::string& field, std::set<std::string> allowed) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(join(field, key) + ": unknown field");
        }
    }
}

template <typename T>
T read_as(const json& j, const std::string& field) {
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!j.is_number()) {
                throw ConfigError(field + ": expected a number");
            }
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) {
                throw ConfigError(field + ": expected true or false");
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!j.is_string()) {
                throw ConfigError(field + ": expected a string");
            }
        } else if constexpr (std::is_integral_v<T>) {
            if (!j.is_number_integer() || (std::is_unsigned_v<T> && j.is_number_integer() &&
                                           !j.is_number_unsigned())) {
                throw ConfigError(field + std::string(": expected a ") +
                                  (std::is_unsigned_v<T> ? "non-negative " : "") + "integer");
            }
        }
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

template <typename T>
void read_opt(const json& j, const std::string& parent, const char* key, T& out) {
    if (j.contains(key)) {
        out = read_as<T>(j.at(key), join(parent, key));
    }
}

Shape read_shape(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) {
        throw ConfigError(field + ": expected a non-empty array of positive integers");
    }
    Shape shape;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto v = read_as<std::size_t>(j[i], field + "[" + std::to_string(i) + "]");
        if (v == 0) {
            throw ConfigError(field + "[" + std::to_string(i) + "]: must be positive");
        }
        shape.push_back(v);
    }
    return shape;
}

TrainConfig read_train_config(const json& j, const std::string& field, TrainConfig cfg) {
    require_object(j, field);
    reject_unknown(j, field,
                   {"mode", "learning_rate", "batch_size", "total_updates", "lambda_inv",
                    "lambda_res", "lambda_spa", "seed", "grid", "checkpoint_every", "log_every",
                    "augment", "holdout_fraction", "co_train"});
    if (j.contains("mode")) {
        try {
            cfg.mode = parse_train_mode(read_as<std::string>(j.at("mode"), join(field, "mode")));
        } catch (const ConfigError& e) {
            throw ConfigError(join(field, "mode") + ": " + e.what());
        }
    }
    read_opt(j, field, "learning_rate", cfg.learning_rate);
    read_opt(j, field, "batch_size", cfg.batch_size);
    read_opt(j, field, "total_updates", cfg.total_updates);
    read_opt(j, field, "lambda_inv", cfg.weights.lambda_inv);
    read_opt(j, field, "lambda_res", cfg.weights.lambda_res);
    read_opt(j, field, "lambda_spa", cfg.weights.lambda_spa);
    read_opt(j, field, "seed", cfg.seed);
    read_opt(j, field, "checkpoint_every", cfg.checkpoint_every);
    read_opt(j, field, "log_every", cfg.log_every);
    read_opt(j, field, "augment", cfg.augment);
    read_opt(j, field, "holdout_fraction", cfg.holdout_fraction);
    read_opt(j, field, "co_train", cfg.co_train);
    if (j.contains("grid")) {
        cfg.grid = grid_from_json(j.at("grid"), join(field, "grid"));
    }
    return cfg;
}

} // namespace

TransformGrid grid_from_json(const json& j, const std::string& field) {
    require_object(j, field);
    reject_unknown(j, field, {"values", "shifts"});
    if (j.contains("values") == j.contains("shifts")) {
        throw ConfigError(field + ": give exactly one of 'values' or 'shifts'");
    }
    try {
        if (j.contains("values")) {
            const json& values = j.at("values");
            if (!values.is_array() || values.empty()) {
                throw ConfigError(join(field, "values") + ": expected a non-empty integer array");
            }
            std::vector<int> v;
            for (std::size_t i = 0; i < values.size(); ++i) {
                v.push_back(read_as<int>(values[i], join(field, "values") + "[" + std::to_string(i) + "]"));
            }
            return TransformGrid::square(v);
        }
        const json& shifts = j.at("shifts");
        if (!shifts.is_array() || shifts.empty()) {
            throw ConfigError(join(field, "shifts") + ": expected a non-empty array of [dx, dy]");
        }
        std::vector<ShiftParam> params;
        for (std::size_t i = 0; i < shifts.size(); ++i) {
            const std::string f = join(field, "shifts") + "[" + std::to_string(i) + "]";
            if (!shifts[i].is_array() || shifts[i].size() != 2) {
                throw ConfigError(f + ": expected [dx, dy]");
            }
            params.push_back({read_as<int>(shifts[i][0], f + "[0]"), read_as<int>(shifts[i][1], f + "[1]")});
        }
        return TransformGrid(std::move(params));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

ModelSpec model_spec_from_json(const json& j, const std::string& field) {
    require_object(j, field);
    reject_unknown(j, field, {"name", "input_shape", "layers"});
    ModelSpec spec;
    spec.name = j.contains("name") ? read_as<std::string>(j.at("name"), join(field, "name")) : field;
    if (!j.contains("input_shape")) {
        throw ConfigError(join(field, "input_shape") + ": missing");
    }
    spec.input_shape = read_shape(j.at("input_shape"), join(field, "input_shape"));
    if (!j.contains("layers") || !j.at("layers").is_array()) {
        throw ConfigError(join(field, "layers") + ": expected an array");
    }
    const json& layers = j.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string f = join(field, "layers") + "[" + std::to_string(i) + "]";
        const json& l = layers[i];
        require_object(l, f);
        if (!l.contains("type")) {
            throw ConfigError(f + ".type: missing");
        }
        const auto type = read_as<std::string>(l.at("type"), f + ".type");
        LayerSpec s;
        if (type == "conv2d") {
            reject_unknown(l, f, {"type", "out_channels", "kernel", "stride", "padding"});
            s = LayerSpec::conv2d(0, 0);
            read_opt(l, f, "out_channels", s.out);
            read_opt(l, f, "kernel", s.kernel);
            read_opt(l, f, "stride", s.stride);
            read_opt(l, f, "padding", s.padding);
        } else if (type == "maxpool") {
            reject_unknown(l, f, {"type", "window", "stride"});
            s = LayerSpec::maxpool(2, 2);
            read_opt(l, f, "window", s.window);
            read_opt(l, f, "stride", s.stride);
        } else if (type == "dense") {
            reject_unknown(l, f, {"type", "out"});
            s = LayerSpec::dense(0);
            read_opt(l, f, "out", s.out);
        } else if (type == "tanh") {
            reject_unknown(l, f, {"type"});
            s = LayerSpec::tanh();
        } else if (type == "reshape") {
            reject_unknown(l, f, {"type", "shape"});
            if (!l.contains("shape")) {
                throw ConfigError(f + ".shape: missing");
            }
            s = LayerSpec::reshape(read_shape(l.at("shape"), f + ".shape"));
        } else {
            throw ConfigError(f + ".type: unknown layer type '" + type + "'");
        }
        spec.layers.push_back(std::move(s));
    }
    try {
        spec.output_shape();
    } catch (const ShapeError& e) {
        throw ConfigError(field + ": " + e.what());
    }
    return spec;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1;
        std::size_t column = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ConfigError("JSON parse error at line " + std::to_string(line) + ", column " +
                          std::to_string(column) + ": " + e.what());
    }
    require_object(j, "<root>");
    reject_unknown(j, "", {"profile", "seed", "pad_to", "synthetic", "encoder", "decoder",
                           "regressor", "training", "regressor_training"});

    ExperimentConfig cfg = desk_profile();
    if (j.contains("profile")) {
        const auto profile = read_as<std::string>(j.at("profile"), "profile");
        if (profile == "paper") {
            cfg = paper_profile();
        } else if (profile != "desk") {
            cfg.profile = profile;
        }
    }
    if (j.contains("seed")) {
        cfg.seed = read_as<std::uint64_t>(j.at("seed"), "seed");
        cfg.training.seed = cfg.seed;
        cfg.regressor_training.seed = cfg.seed;
    }
    read_opt(j, "", "pad_to", cfg.pad_to);
    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        require_object(s, "synthetic");
        reject_unknown(s, "synthetic",
                       {"canvas", "motif_size", "count_per_motif", "test_count_per_motif",
                        "placement_stride"});
        read_opt(s, "synthetic", "canvas", cfg.synthetic.canvas);
        read_opt(s, "synthetic", "motif_size", cfg.synthetic.motif_size);
        read_opt(s, "synthetic", "count_per_motif", cfg.synthetic.count_per_motif);
        read_opt(s, "synthetic", "test_count_per_motif", cfg.synthetic.test_count_per_motif);
        read_opt(s, "synthetic", "placement_stride", cfg.synthetic.placement_stride);
    }
    if (j.contains("encoder")) {
        cfg.encoder = model_spec_from_json(j.at("encoder"), "encoder");
    }
    if (j.contains("decoder")) {
        cfg.decoder = model_spec_from_json(j.at("decoder"), "decoder");
    }
    if (j.contains("regressor")) {
        cfg.regressor = model_spec_from_json(j.at("regressor"), "regressor");
    }
    if (j.contains("training")) {
        cfg.training = read_train_config(j.at("training"), "training", cfg.training);
    }
    if (j.contains("regressor_training")) {
        cfg.regressor_training =
            read_train_config(j.at("regressor_training"), "regressor_training", cfg.regressor_training);
    }
    cfg.regressor_training.mode = TrainMode::Regressor;
    if (cfg.training.mode == TrainMode::Regressor) {
        throw ConfigError("training.mode: must be ordinary or invariant");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_experiment_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

Dataset make_synthetic(const ExperimentConfig& cfg, bool test_split) {
    SyntheticSpec spec;
    spec.canvas_h = cfg.synthetic.canvas;
    spec.canvas_w = cfg.synthetic.canvas;
    spec.motifs = default_motifs(cfg.synthetic.motif_size);
    spec.count_per_motif = test_split ? cfg.synthetic.test_count_per_motif : cfg.synthetic.count_per_motif;
    spec.placement_stride = cfg.synthetic.placement_stride;
    spec.seed = test_split ? cfg.seed + 1 : cfg.seed;
    return gen_synthetic(spec);
}

namespace {

std::string hash_json(const json& j) {
    const std::string s = j.dump();
    return fnv1a64_hex(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

} // namespace

std::string config_hash(const ExperimentConfig& cfg) { return hash_json(to_json(cfg)); }
std::string config_hash(const TrainConfig& cfg) { return hash_json(to_json(cfg)); }

} // namespace tiae
