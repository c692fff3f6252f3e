#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tiae/checkpoint.hpp"
#include "tiae/config.hpp"
#include "tiae/data_io.hpp"
#include "tiae/errors.hpp"
#include "tiae/evaluation.hpp"
#include "tiae/pca.hpp"
#include "tiae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tiae;

namespace {

constexpr const char* kVersion = TIAE_VERSION;

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t thread_budget() {
    const char* raw = std::getenv("TIAE_THREADS");
    if (raw == nullptr || *raw == '\0') {
        return 1;
    }
    char* end = nullptr;
    const long v = std::strtol(raw, &end, 10);
    if (*end != '\0' || v < 1) {
        throw UsageError(std::string("TIAE_THREADS must be a positive integer, got '") + raw + "'");
    }
    return static_cast<std::size_t>(v);
}

void prepare_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw UsageError(dir.string() + " exists and is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir);
}

void prepare_file(const fs::path& file, bool force) {
    if (fs::exists(file) && !force) {
        throw UsageError(file.string() + " exists (use --force to overwrite)");
    }
    if (file.has_parent_path()) {
        fs::create_directories(file.parent_path());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

ExperimentConfig resolve_config(const std::string& config_path, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = config_path.empty() ? desk_profile() : load_experiment_config(config_path);
    if (seed) {
        cfg.seed = *seed;
        cfg.training.seed = *seed;
        cfg.regressor_training.seed = *seed;
    }
    return cfg;
}

struct LoadedData {
    Dataset data;
    json provenance;
};

/// "synthetic" selects the generated training split (or the test split).
LoadedData load_data(const std::string& source, const std::string& labels, const ExperimentConfig& cfg,
                     bool test_split) {
    if (source == "synthetic") {
        Dataset d = make_synthetic(cfg, test_split);
        json prov{{"source", "synthetic"},
                  {"split", test_split ? "test" : "train"},
                  {"digest", tensor_digest(d.images())}};
        return {std::move(d), prov};
    }
    std::optional<fs::path> label_path;
    if (!labels.empty()) {
        label_path = labels;
    }
    std::optional<std::size_t> pad;
    if (cfg.pad_to > 0) {
        pad = cfg.pad_to;
    }
    Dataset d = load_idx(source, label_path, pad);
    json prov{{"source", "idx"}, {"path", fs::absolute(source).string()}, {"digest", file_digest(source)}};
    if (label_path) {
        prov["labels_path"] = fs::absolute(*label_path).string();
        prov["labels_digest"] = file_digest(*label_path);
    }
    return {std::move(d), prov};
}

struct ModelDir {
    ExperimentConfig cfg;
    Model encoder;
    Model decoder;
};

ExperimentConfig read_dir_config(const fs::path& dir) {
    const fs::path config = dir / "config.json";
    if (!fs::exists(config)) {
        throw UsageError("model directory " + dir.string() + " has no config.json");
    }
    return load_experiment_config(config);
}

ModelDir load_model_dir(const fs::path& dir) {
    ExperimentConfig cfg = read_dir_config(dir);
    for (const char* name : {"encoder.ckpt", "decoder.ckpt"}) {
        if (!fs::exists(dir / name)) {
            throw UsageError("model directory " + dir.string() + " has no " + name);
        }
    }
    return {std::move(cfg), load_checkpoint(dir / "encoder.ckpt").model,
            load_checkpoint(dir / "decoder.ckpt").model};
}

Model load_regressor_dir(const fs::path& dir) {
    const fs::path path = dir / "regressor.ckpt";
    if (!fs::exists(path)) {
        throw UsageError("regressor directory " + dir.string() + " has no regressor.ckpt");
    }
    return load_checkpoint(path).model;
}

json manifest(const std::string& command, const ExperimentConfig& cfg, const json& data,
              const json& outputs, std::size_t threads) {
    return json{{"tool", "tiae"},
                {"version", kVersion},
                {"command", command},
                {"seed", cfg.seed},
                {"config", to_json(cfg)},
                {"config_hash", config_hash(cfg)},
                {"data", data},
                {"outputs", outputs},
                {"threads_requested", threads},
                {"threads_used", 1}};
}

json report_json(const InvarianceReport& r) {
    return json{{"mean_within_shift_variance", r.mean_within_shift_variance},
                {"between_class_variance", r.between_class_variance},
                {"ratio", r.ratio},
                {"mean_restored_pairwise_l2", r.mean_restored_pairwise_l2},
                {"max_restored_pairwise_l2", r.max_restored_pairwise_l2},
                {"classes", r.classes}};
}

json accuracy_json(const ShiftAccuracy& a) {
    return json{{"count", a.records.size()},
                {"mae", a.mae},
                {"raw_mae", a.raw_mae},
                {"fraction_within_2px", a.fraction_within_2px}};
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
};

int run_gen_data(const GenDataOptions& o) {
    const ExperimentConfig cfg = resolve_config(o.config, o.seed);
    prepare_dir(o.out, o.force);
    const fs::path out(o.out);
    json files = json::array();
    for (bool test : {false, true}) {
        const Dataset d = make_synthetic(cfg, test);
        const std::string prefix = test ? "test" : "train";
        const fs::path images = out / (prefix + "-images-idx3-ubyte");
        const fs::path labels = out / (prefix + "-labels-idx1-ubyte");
        write_idx(d, images, labels);
        files.push_back({{"images", images.string()}, {"labels", labels.string()}, {"count", d.size()},
                         {"digest", file_digest(images)}});
    }
    write_json(out / "manifest.json", manifest("gen-data", cfg, json{{"source", "synthetic"}}, files, 1));
    std::cout << "wrote synthetic train/test IDX files to " << out.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    std::string mode = "invariant";
    std::string config;
    std::string data = "synthetic";
    std::string labels;
    std::string out;
    std::string model;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

void save_ae(const fs::path& dir, const Model& enc, const Model& dec, const TrainState& state,
             const std::string& hash) {
    fs::create_directories(dir);
    const CheckpointMeta meta{state.step, hash, state.rng_state};
    save_checkpoint(dir / "encoder.ckpt", enc, meta);
    save_checkpoint(dir / "decoder.ckpt", dec, meta);
}

std::string step_dir(std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%08zu", step);
    return buf;
}

int run_train(const TrainOptions& o, std::size_t threads) {
    const TrainMode mode = parse_train_mode(o.mode);
    ExperimentConfig cfg = resolve_config(o.config, o.seed);
    if (mode != TrainMode::Regressor) {
        cfg.training.mode = mode;
    }
    cfg.validate();

    std::optional<ModelDir> frozen;
    if (mode == TrainMode::Regressor) {
        if (o.model.empty()) {
            throw UsageError("--mode regressor needs --model DIR with a trained autoencoder");
        }
        frozen = load_model_dir(o.model);
        cfg.encoder = frozen->encoder.spec();
        cfg.decoder = frozen->decoder.spec();
    }
    LoadedData loaded = load_data(o.data, o.labels, cfg, false);

    prepare_dir(o.out, o.force);
    const fs::path out(o.out);
    const std::string hash = config_hash(cfg);
    json outputs = json::array({(out / "config.json").string(), (out / "loss.csv").string()});
    if (mode == TrainMode::Regressor) {
        outputs.push_back((out / "regressor.ckpt").string());
        outputs.push_back((out / "summary.json").string());
    } else {
        outputs.push_back((out / "encoder.ckpt").string());
        outputs.push_back((out / "decoder.ckpt").string());
        if (cfg.training.co_train) {
            outputs.push_back((out / "regressor.ckpt").string());
        }
    }
    json data_prov = loaded.provenance;
    if (frozen) {
        data_prov["autoencoder"] = fs::absolute(o.model).string();
    }
    write_json(out / "manifest.json",
               manifest(std::string("train --mode ") + train_mode_name(mode), cfg, data_prov, outputs, threads));
    write_json(out / "config.json", to_json(cfg));

    if (mode == TrainMode::Regressor) {
        Rng init(cfg.seed);
        Model reg(cfg.regressor, init);
        const TrainConfig& rcfg = cfg.regressor_training;
        auto on_ckpt = [&](const Model& r, const TrainState& s) {
            if (s.step != rcfg.total_updates) {
                const fs::path dir = out / "checkpoints" / step_dir(s.step);
                fs::create_directories(dir);
                save_checkpoint(dir / "regressor.ckpt", r, {s.step, hash, s.rng_state});
            }
        };
        RegressorRun run = train_regressor(std::move(reg), frozen->encoder, frozen->decoder, loaded.data,
                                           rcfg, std::nullopt, on_ckpt);
        save_checkpoint(out / "regressor.ckpt", run.regressor, {run.state.step, hash, run.state.rng_state});
        export_csv(regressor_log_table(run.log), out / "loss.csv");
        write_json(out / "summary.json", json{{"steps", run.state.step}, {"holdout_mae", run.holdout_mae}});
        std::cout << "regressor trained for " << run.state.step << " updates; held-out MAE "
                  << format_double(run.holdout_mae) << " px\n";
        return kOk;
    }

    Rng init(cfg.seed);
    Model enc(cfg.encoder, init);
    Model dec(cfg.decoder, init);
    std::optional<Model> reg;
    if (cfg.training.co_train) {
        reg.emplace(cfg.regressor, init);
    }
    const TrainConfig& tcfg = cfg.training;
    auto on_ckpt = [&](const Model& e, const Model& d, const TrainState& s) {
        if (s.step != tcfg.total_updates) {
            save_ae(out / "checkpoints" / step_dir(s.step), e, d, s, hash);
        }
    };
    AutoencoderRun run = train_autoencoder(std::move(enc), std::move(dec), loaded.data, tcfg, std::nullopt,
                                           on_ckpt, std::move(reg));
    save_ae(out, run.encoder, run.decoder, run.state, hash);
    if (run.regressor) {
        save_checkpoint(out / "regressor.ckpt", *run.regressor, {run.state.step, hash, run.state.rng_state});
    }
    export_csv(loss_log_table(run.log), out / "loss.csv");
    std::cout << train_mode_name(mode) << " autoencoder trained for " << run.state.step << " updates";
    if (!run.log.empty()) {
        std::cout << "; last logged total " << format_double(run.log.back().total);
    }
    std::cout << "\n";
    return kOk;
}

// ---------------------------------------------------------------- encode / decode

struct EncodeOptions {
    std::string model;
    std::string data;
    std::string labels;
    std::string out;
    bool force = false;
};

int run_encode(const EncodeOptions& o) {
    ModelDir m = load_model_dir(o.model);
    LoadedData loaded = load_data(o.data, o.labels, m.cfg, true);
    if (loaded.data.item_shape() != m.encoder.input_shape()) {
        throw UsageError("data items " + shape_to_string(loaded.data.item_shape()) +
                         " do not match the encoder input " + shape_to_string(m.encoder.input_shape()));
    }
    prepare_file(o.out, o.force);
    const std::size_t d = m.encoder.spec().output_size();
    CsvTable table;
    table.header.push_back("id");
    for (std::size_t k = 0; k < d; ++k) {
        table.header.push_back("d" + std::to_string(k));
    }
    if (!loaded.data.is_empty()) {
        const Tensor codes = m.encoder.predict(loaded.data.images());
        for (std::size_t i = 0; i < loaded.data.size(); ++i) {
            std::vector<std::string> row{std::to_string(i)};
            for (std::size_t k = 0; k < d; ++k) {
                row.push_back(format_double(codes[i * d + k]));
            }
            table.rows.push_back(std::move(row));
        }
    }
    export_csv(table, o.out);
    std::cout << "encoded " << loaded.data.size() << " items into " << o.out << "\n";
    return kOk;
}

struct DecodeOptions {
    std::string model;
    std::string descriptors;
    std::string out;
    bool force = false;
};

double parse_number(const std::string& text, std::size_t row, std::size_t col) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        throw FormatError("row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                          ": not a number: '" + text + "'");
    }
    return v;
}

int run_decode(const DecodeOptions& o) {
    ModelDir m = load_model_dir(o.model);
    const CsvTable table = read_csv(o.descriptors);
    const std::size_t d = m.decoder.input_shape().empty() ? 0 : shape_numel(m.decoder.input_shape());
    if (table.header.size() != d + 1) {
        throw UsageError("descriptor CSV has " + std::to_string(table.header.size() - 1) +
                         " value columns but the checkpoint expects " + std::to_string(d));
    }
    prepare_dir(o.out, o.force);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        std::vector<double> values;
        for (std::size_t k = 1; k < row.size(); ++k) {
            values.push_back(parse_number(row[k], r + 2, k));
        }
        Shape shape{1};
        shape.insert(shape.end(), m.decoder.input_shape().begin(), m.decoder.input_shape().end());
        const Tensor image = m.decoder.predict(Tensor(shape, std::move(values))).row(0);
        export_pgm(image, fs::path(o.out) / ("item_" + row[0] + ".pgm"));
    }
    std::cout << "decoded " << table.rows.size() << " descriptors into " << o.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
    std::string model;
    std::string baseline;
    std::string data = "synthetic";
    std::string labels;
    std::string pca_data = "synthetic";
    std::string regressor;
    std::string out;
    std::size_t gallery_item = 0;
    bool force = false;
};

double per_item_restoration(const Codec& codec, const Dataset& items, const TransformGrid& grid) {
    const Tensor restored = codec.decode(codec.encode(items.images()));
    double sum = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        sum += best_shift(items.item(i), restored.row(i), grid).residual;
    }
    return sum / static_cast<double>(items.size());
}

double per_item_ordinary(const Codec& codec, const Dataset& items) {
    const Tensor restored = codec.decode(codec.encode(items.images()));
    return squared_distance(items.images().data(), restored.data()) / static_cast<double>(items.size());
}

void write_projection(const Codec& codec, const Dataset& items, const TransformGrid& grid,
                      const fs::path& path, json& summary) {
    const auto& labels = *items.labels();
    std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
    const Tensor plain = codec.encode(items.images());
    const std::size_t d = plain.numel() / items.size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& [sum, count] = sums[labels[i]];
        sum.resize(d, 0.0);
        for (std::size_t k = 0; k < d; ++k) {
            sum[k] += plain[i * d + k];
        }
        ++count;
    }
    if (sums.size() < 3) {
        summary["projection"] = "skipped: fewer than 3 classes";
        return;
    }
    std::vector<Tensor> means;
    std::vector<int> classes;
    for (auto& [label, entry] : sums) {
        if (means.size() == 3) {
            break;
        }
        for (double& v : entry.first) {
            v /= static_cast<double>(entry.second);
        }
        means.emplace_back(Shape{d}, entry.first);
        classes.push_back(label);
    }
    const ProjectionPlane plane = projection_plane(means[0], means[1], means[2]);
    CsvTable table{{"item", "label", "dx", "dy", "u", "v"}, {}};
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Tensor item = items.item(i);
        std::vector<Tensor> shifted;
        for (const ShiftParam& p : grid.params()) {
            shifted.push_back(apply_shift(item, p));
        }
        const Tensor codes = codec.encode(stack(shifted));
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto uv = plane.project(codes.row(g));
            table.rows.push_back({std::to_string(i), std::to_string(labels[i]), std::to_string(grid[g].dx),
                                  std::to_string(grid[g].dy), format_double(uv[0]), format_double(uv[1])});
        }
    }
    export_csv(table, path);
    summary["projection"] = json{{"file", path.filename().string()}, {"classes", classes}};
}

json evaluate_codec(const std::string& name, const Codec& codec, const Dataset& items,
                    const TransformGrid& grid, const fs::path& out) {
    const InvarianceReport report = invariance_report(codec, items, grid);
    json j = report_json(report);
    j["restoration_cost_per_item"] = per_item_restoration(codec, items, grid);
    j["ordinary_cost_per_item"] = per_item_ordinary(codec, items);
    CsvTable table{{"item", "label", "within_shift_variance", "restored_pairwise_l2"}, {}};
    for (std::size_t i = 0; i < items.size(); ++i) {
        table.rows.push_back({std::to_string(i), std::to_string((*items.labels())[i]),
                              format_double(report.within_shift_variance[i]),
                              format_double(report.restored_pairwise_l2[i])});
    }
    export_csv(table, out / (name + "_invariance.csv"));
    write_projection(codec, items, grid, out / (name + "_projection.csv"), j);
    return j;
}

int run_eval(const EvalOptions& o) {
    ModelDir m = load_model_dir(o.model);
    LoadedData loaded = load_data(o.data, o.labels, m.cfg, true);
    if (!loaded.data.labels()) {
        throw UsageError("eval needs labels for between-class statistics (pass --labels)");
    }
    if (loaded.data.is_empty()) {
        throw UsageError("eval needs a non-empty dataset");
    }
    const TransformGrid& grid = m.cfg.training.grid;
    prepare_dir(o.out, o.force);
    const fs::path out(o.out);

    json summary{{"data", loaded.provenance}, {"grid_size", grid.size()}};
    const Codec codec = model_codec(m.encoder, m.decoder);
    summary["model"] = evaluate_codec("model", codec, loaded.data, grid, out);

    std::optional<ModelDir> base;
    std::optional<PcaModel> pca;
    std::optional<Codec> base_codec;
    if (o.baseline == "pca") {
        LoadedData fit = load_data(o.pca_data, "", m.cfg, false);
        pca = pca_fit(fit.data.images(), m.encoder.spec().output_size());
        base_codec = pca_codec(*pca, loaded.data.item_shape());
        summary["baseline_kind"] = "pca";
        summary["pca_components"] = pca->k();
        summary["pca_explained_variance"] = pca->cumulative_explained_variance();
    } else if (!o.baseline.empty()) {
        base = load_model_dir(o.baseline);
        base_codec = model_codec(base->encoder, base->decoder);
        summary["baseline_kind"] = "model";
    }
    if (base_codec) {
        json b = evaluate_codec("baseline", *base_codec, loaded.data, grid, out);
        summary["baseline"] = b;
        summary["ratio_vs_baseline"] = summary["model"]["ratio"].get<double>() / b["ratio"].get<double>();
        summary["restored_l2_vs_baseline"] = summary["model"]["mean_restored_pairwise_l2"].get<double>() /
                                             b["mean_restored_pairwise_l2"].get<double>();
    }

    std::optional<Model> reg;
    ShiftPredictor predictor;
    if (!o.regressor.empty()) {
        reg = load_regressor_dir(o.regressor);
        predictor = model_predictor(*reg);
        const ShiftAccuracy acc = shift_inference_accuracy(predictor, codec, loaded.data, grid);
        summary["shift_inference"] = accuracy_json(acc);
    }
    if (o.gallery_item >= loaded.data.size()) {
        throw UsageError("--gallery-item out of range");
    }
    restoration_gallery(codec, loaded.data.item(o.gallery_item), grid, out / "gallery", predictor);
    summary["gallery"] = json{{"dir", "gallery"}, {"item", o.gallery_item}, {"files", 3 * grid.size()}};

    write_json(out / "summary.json", summary);
    std::cout << "model ratio " << format_double(summary["model"]["ratio"].get<double>());
    if (summary.contains("ratio_vs_baseline")) {
        std::cout << ", vs baseline " << format_double(summary["ratio_vs_baseline"].get<double>());
    }
    std::cout << "\nwrote " << (out / "summary.json").string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- infer-shift

struct InferOptions {
    std::string model;
    std::string regressor;
    std::string data = "synthetic";
    std::string labels;
    std::string out;
    bool force = false;
};

int run_infer_shift(const InferOptions& o) {
    ModelDir m = load_model_dir(o.model);
    const Model reg = load_regressor_dir(o.regressor);
    LoadedData loaded = load_data(o.data, o.labels, m.cfg, true);
    prepare_file(o.out, o.force);
    const TransformGrid& grid = m.cfg.training.grid;
    const ShiftAccuracy acc =
        shift_inference_accuracy(model_predictor(reg), model_codec(m.encoder, m.decoder), loaded.data, grid);
    CsvTable table{{"item", "dx", "dy", "target_dx", "target_dy", "raw_dx", "raw_dy", "inferred_dx", "inferred_dy"},
                   {}};
    for (const ShiftRecord& r : acc.records) {
        table.rows.push_back({std::to_string(r.item), std::to_string(grid[r.grid_index].dx),
                              std::to_string(grid[r.grid_index].dy), std::to_string(r.target.dx),
                              std::to_string(r.target.dy), format_double(r.raw_dx), format_double(r.raw_dy),
                              std::to_string(r.snapped.dx), std::to_string(r.snapped.dy)});
    }
    export_csv(table, o.out);
    fs::path summary_path(o.out);
    summary_path.replace_extension(".summary.json");
    write_json(summary_path, accuracy_json(acc));
    std::cout << "fraction_within_2px " << format_double(acc.fraction_within_2px) << ", mae "
              << format_double(acc.mae) << " px\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transform-invariant autoencoder toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenDataOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write the synthetic train/test splits as IDX files");
    gen_cmd->add_option("--config", gen.config, "Experiment config (JSON); default: desk profile");
    gen_cmd->add_option("--seed", gen.seed, "Override the config seed");
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    gen_cmd->add_flag("--force", gen.force, "Overwrite existing outputs");

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train an autoencoder or a shift regressor");
    train_cmd->add_option("--mode", train.mode, "ordinary | invariant | regressor")
        ->check(CLI::IsMember({"ordinary", "invariant", "regressor"}));
    train_cmd->add_option("--config", train.config, "Experiment config (JSON); default: desk profile");
    train_cmd->add_option("--data", train.data, "IDX image file or 'synthetic'");
    train_cmd->add_option("--labels", train.labels, "IDX label file (recorded, never used for training)");
    train_cmd->add_option("--model", train.model, "Trained autoencoder directory (regressor mode)");
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->add_option("--seed", train.seed, "Override the config seed");
    train_cmd->add_flag("--force", train.force, "Overwrite existing outputs");

    EncodeOptions enc;
    auto* enc_cmd = app.add_subcommand("encode", "Write one descriptor row per item");
    enc_cmd->add_option("--model", enc.model, "Autoencoder directory")->required();
    enc_cmd->add_option("--data", enc.data, "IDX image file or 'synthetic' (test split)")->required();
    enc_cmd->add_option("--labels", enc.labels, "IDX label file");
    enc_cmd->add_option("--out", enc.out, "Output CSV")->required();
    enc_cmd->add_flag("--force", enc.force, "Overwrite existing outputs");

    DecodeOptions dec;
    auto* dec_cmd = app.add_subcommand("decode", "Write one PGM per descriptor row");
    dec_cmd->add_option("--model", dec.model, "Autoencoder directory")->required();
    dec_cmd->add_option("--descriptors", dec.descriptors, "Descriptor CSV from encode")->required();
    dec_cmd->add_option("--out", dec.out, "Output directory")->required();
    dec_cmd->add_flag("--force", dec.force, "Overwrite existing outputs");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Invariance report, projection, gallery and shift accuracy");
    eval_cmd->add_option("--model", ev.model, "Autoencoder directory")->required();
    eval_cmd->add_option("--baseline", ev.baseline, "Baseline autoencoder directory, or 'pca'");
    eval_cmd->add_option("--pca-data", ev.pca_data, "Data the PCA baseline is fitted on (default: synthetic train split)");
    eval_cmd->add_option("--data", ev.data, "IDX image file or 'synthetic' (test split)");
    eval_cmd->add_option("--labels", ev.labels, "IDX label file");
    eval_cmd->add_option("--regressor", ev.regressor, "Shift regressor directory");
    eval_cmd->add_option("--gallery-item", ev.gallery_item, "Item rendered in the restoration gallery");
    eval_cmd->add_option("--out", ev.out, "Output directory")->required();
    eval_cmd->add_flag("--force", ev.force, "Overwrite existing outputs");

    InferOptions inf;
    auto* inf_cmd = app.add_subcommand("infer-shift", "Compare inferred shifts with brute-force targets");
    inf_cmd->add_option("--model", inf.model, "Autoencoder directory")->required();
    inf_cmd->add_option("--regressor", inf.regressor, "Shift regressor directory")->required();
    inf_cmd->add_option("--data", inf.data, "IDX image file or 'synthetic' (test split)");
    inf_cmd->add_option("--labels", inf.labels, "IDX label file");
    inf_cmd->add_option("--out", inf.out, "Output CSV")->required();
    inf_cmd->add_flag("--force", inf.force, "Overwrite existing outputs");

    std::string profile = "desk";
    std::string config_in;
    auto* cfg_cmd = app.add_subcommand("config", "Print the fully resolved experiment config as JSON");
    cfg_cmd->add_option("--profile", profile, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
    cfg_cmd->add_option("--config", config_in, "Resolve this config file instead of a profile");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const std::size_t threads = thread_budget();
        if (*cfg_cmd) {
            const ExperimentConfig cfg = !config_in.empty() ? load_experiment_config(config_in)
                                         : profile == "paper" ? paper_profile()
                                                              : desk_profile();
            std::cout << to_json(cfg).dump(2) << "\n";
            return kOk;
        }
        if (*gen_cmd) {
            return run_gen_data(gen);
        }
        if (*train_cmd) {
            return run_train(train, threads);
        }
        if (*enc_cmd) {
            return run_encode(enc);
        }
        if (*dec_cmd) {
            return run_decode(dec);
        }
        if (*eval_cmd) {
            return run_eval(ev);
        }
        if (*inf_cmd) {
            return run_infer_shift(inf);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const TrainingAborted& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
