#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tiae/checkpoint.hpp"
#include "tiae/config.hpp"
#include "tiae/data_io.hpp"
#include "toy_models.hpp"

using namespace tiae;
using namespace tiae::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("tiae_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result run(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli_output.txt";
    const std::string cmd = std::string(TIAE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_text(log)};
}

// Desk architecture with a short schedule and a small dataset.
fs::path small_config(const fs::path& dir) {
    const fs::path path = dir / "small.json";
    std::ofstream(path) << R"({
        "synthetic": {"count_per_motif": 10, "test_count_per_motif": 2},
        "training": {"total_updates": 30, "log_every": 1},
        "regressor_training": {"total_updates": 30, "log_every": 1}
    })";
    return path;
}

json read_json(const fs::path& path) { return json::parse(read_text(path)); }

// Autoencoder directory whose decoder exactly inverts its encoder on 16x16 inputs.
void write_identity_model(const fs::path& dir) {
    fs::create_directories(dir);
    ExperimentConfig cfg = desk_profile();
    cfg.encoder = mlp_spec("identity-encoder", {1, 16, 16}, {256});
    cfg.decoder = mlp_spec("identity-decoder", {256}, {256}, {1, 16, 16});
    cfg.regressor = mlp_spec("zero-regressor", {1, 16, 16}, {2});
    std::ofstream(dir / "config.json") << to_json(cfg).dump(2);
    save_checkpoint(dir / "encoder.ckpt", Model(cfg.encoder, {identity_matrix(256), Tensor({256}, 0.0)}), {});
    save_checkpoint(dir / "decoder.ckpt", Model(cfg.decoder, {identity_matrix(256), Tensor({256}, 0.0)}), {});
    save_checkpoint(dir / "regressor.ckpt", Model(cfg.regressor, {Tensor({2, 256}, 0.0), Tensor({2}, 0.0)}), {});
}

} // namespace

TEST(Cli, VersionAndUsage) {
    const fs::path dir = temp_dir("usage");
    const Result v = run("--version", dir);
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.output.find('.'), std::string::npos);
    EXPECT_NE(run("", dir).code, 0);
    EXPECT_NE(run("train --mode sideways --out " + (dir / "x").string(), dir).code, 0);
}

TEST(Cli, ConfigPrintsResolvedProfile) {
    const fs::path dir = temp_dir("config");
    const Result r = run("config --profile paper", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(json::parse(r.output), to_json(paper_profile()));
}

TEST(Cli, MissingConfigNamesThePath) {
    const fs::path dir = temp_dir("missing");
    const Result r = run("train --mode invariant --config /no/such/config.json --out " + (dir / "run").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("/no/such/config.json"), std::string::npos) << r.output;
}

TEST(Cli, InvalidThreadBudgetRejected) {
    const fs::path dir = temp_dir("threads");
    const std::string cmd = "TIAE_THREADS=zero " + std::string(TIAE_CLI_PATH) + " config > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    EXPECT_EQ(WEXITSTATUS(status), 2);
}

TEST(Cli, TrainIsReproducibleAndRefusesOverwrite) {
    const fs::path dir = temp_dir("train");
    const fs::path cfg = small_config(dir);
    const std::string base = "train --mode invariant --data synthetic --config " + cfg.string() + " --out ";
    const Result a = run(base + (dir / "a").string(), dir);
    ASSERT_EQ(a.code, 0) << a.output;
    for (const char* f : {"manifest.json", "config.json", "loss.csv", "encoder.ckpt", "decoder.ckpt"}) {
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    }
    EXPECT_EQ(read_csv(dir / "a" / "loss.csv").rows.size(), 30u);
    const Result b = run(base + (dir / "b").string(), dir);
    ASSERT_EQ(b.code, 0) << b.output;
    EXPECT_EQ(read_text(dir / "a" / "loss.csv"), read_text(dir / "b" / "loss.csv"));
    EXPECT_EQ(read_text(dir / "a" / "encoder.ckpt"), read_text(dir / "b" / "encoder.ckpt"));
    EXPECT_EQ(read_text(dir / "a" / "decoder.ckpt"), read_text(dir / "b" / "decoder.ckpt"));

    const json manifest = read_json(dir / "a" / "manifest.json");
    EXPECT_EQ(manifest["seed"], desk_profile().seed);
    EXPECT_EQ(manifest["config_hash"], config_hash(load_experiment_config(dir / "a" / "config.json")));

    EXPECT_EQ(run(base + (dir / "a").string(), dir).code, 2);
    EXPECT_EQ(run(base + (dir / "a").string() + " --force", dir).code, 0);
}

TEST(Cli, EncodeDecodeMatchesLibrary) {
    const fs::path dir = temp_dir("codec");
    const fs::path cfg = small_config(dir);
    ASSERT_EQ(run("train --mode ordinary --data synthetic --config " + cfg.string() + " --out " +
                      (dir / "m").string(),
                  dir)
                  .code,
              0);
    const Result enc = run("encode --model " + (dir / "m").string() + " --data synthetic --out " +
                               (dir / "codes.csv").string(),
                           dir);
    ASSERT_EQ(enc.code, 0) << enc.output;

    const ExperimentConfig exp = load_experiment_config(dir / "m" / "config.json");
    const Model encoder = load_checkpoint(dir / "m" / "encoder.ckpt").model;
    const Model decoder = load_checkpoint(dir / "m" / "decoder.ckpt").model;
    const Dataset test = make_synthetic(exp, true);
    const Tensor codes = encoder.predict(test.images());
    const CsvTable table = read_csv(dir / "codes.csv");
    ASSERT_EQ(table.rows.size(), test.size());
    ASSERT_EQ(table.header.size(), 1 + exp.encoder.output_size());
    EXPECT_EQ(table.header[1], "d0");
    const std::size_t d = exp.encoder.output_size();
    for (std::size_t i = 0; i < test.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            ASSERT_EQ(std::stod(table.rows[i][k + 1]), codes[i * d + k]);
        }
    }

    const Result dec = run("decode --model " + (dir / "m").string() + " --descriptors " +
                               (dir / "codes.csv").string() + " --out " + (dir / "images").string(),
                           dir);
    ASSERT_EQ(dec.code, 0) << dec.output;
    const Tensor restored = decoder.predict(codes);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Tensor img = read_pgm(dir / "images" / ("item_" + std::to_string(i) + ".pgm"));
        const Tensor expected = restored.row(i);
        for (std::size_t k = 0; k < img.numel(); ++k) {
            const double clamped = std::min(1.0, std::max(0.0, expected[k]));
            ASSERT_EQ(img[k], std::round(255.0 * clamped) / 255.0);
        }
    }

    // Malformed descriptor files name the row and column, or the dimension mismatch.
    std::ofstream(dir / "bad.csv") << table.header[0] << ",d0\n0,1.5\n";
    Result bad = run("decode --model " + (dir / "m").string() + " --descriptors " + (dir / "bad.csv").string() +
                         " --out " + (dir / "bad").string(),
                     dir);
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.output.find("columns"), std::string::npos) << bad.output;

    std::string text = read_text(dir / "codes.csv");
    const std::size_t second_row = text.find('\n', text.find('\n') + 1) + 1;
    const std::size_t cell = text.find(',', second_row) + 1;
    text.replace(cell, text.find(',', cell) - cell, "abc");
    std::ofstream(dir / "nan.csv") << text;
    bad = run("decode --model " + (dir / "m").string() + " --descriptors " + (dir / "nan.csv").string() +
                  " --out " + (dir / "nan").string(),
              dir);
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.output.find("row 3, column 2"), std::string::npos) << bad.output;
}

TEST(Cli, EncodeEmptyDatasetWritesHeaderOnly) {
    const fs::path dir = temp_dir("empty");
    write_identity_model(dir / "m");
    std::ofstream(dir / "empty-idx", std::ios::binary)
        .write("\x00\x00\x08\x03\x00\x00\x00\x00\x00\x00\x00\x10\x00\x00\x00\x10", 16);
    const Result r = run("encode --model " + (dir / "m").string() + " --data " + (dir / "empty-idx").string() +
                             " --out " + (dir / "codes.csv").string(),
                         dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const CsvTable table = read_csv(dir / "codes.csv");
    EXPECT_EQ(table.header.size(), 257u);
    EXPECT_TRUE(table.rows.empty());
}

TEST(Cli, EvalWritesRatioSummary) {
    const fs::path dir = temp_dir("eval");
    const fs::path cfg = small_config(dir);
    const std::string train = "train --data synthetic --config " + cfg.string();
    ASSERT_EQ(run(train + " --mode invariant --out " + (dir / "inv").string(), dir).code, 0);
    ASSERT_EQ(run(train + " --mode ordinary --out " + (dir / "ord").string(), dir).code, 0);
    ASSERT_EQ(run(train + " --mode regressor --model " + (dir / "inv").string() + " --out " +
                      (dir / "reg").string(),
                  dir)
                  .code,
              0);
    EXPECT_TRUE(read_json(dir / "reg" / "summary.json").contains("holdout_mae"));

    const Result r = run("eval --model " + (dir / "inv").string() + " --baseline " + (dir / "ord").string() +
                             " --regressor " + (dir / "reg").string() + " --out " + (dir / "report").string(),
                         dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const json s = read_json(dir / "report" / "summary.json");
    EXPECT_TRUE(s["model"].contains("ratio"));
    EXPECT_TRUE(s["baseline"].contains("ratio"));
    EXPECT_NEAR(s["ratio_vs_baseline"].get<double>(),
                s["model"]["ratio"].get<double>() / s["baseline"]["ratio"].get<double>(), 1e-12);
    EXPECT_TRUE(s.contains("shift_inference"));
    EXPECT_EQ(s["gallery"]["files"], 75);
    EXPECT_TRUE(fs::exists(dir / "report" / "gallery" / "gallery.csv"));
    EXPECT_TRUE(fs::exists(dir / "report" / "model_invariance.csv"));

    const Result pca = run("eval --model " + (dir / "inv").string() + " --baseline pca --out " +
                               (dir / "pca").string(),
                           dir);
    ASSERT_EQ(pca.code, 0) << pca.output;
    EXPECT_EQ(read_json(dir / "pca" / "summary.json")["baseline_kind"], "pca");
}

TEST(Cli, InferShiftPerfectFixture) {
    const fs::path dir = temp_dir("infer");
    write_identity_model(dir / "m");
    const Result r = run("infer-shift --model " + (dir / "m").string() + " --regressor " + (dir / "m").string() +
                             " --out " + (dir / "shifts.csv").string(),
                         dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const json s = read_json(dir / "shifts.summary.json");
    EXPECT_EQ(s["mae"], 0.0);
    EXPECT_EQ(s["fraction_within_2px"], 1.0);
    EXPECT_EQ(s["count"], 3 * 20 * 25);
    EXPECT_EQ(read_csv(dir / "shifts.csv").rows.size(), 3u * 20u * 25u);
}

TEST(Cli, NanAbortExitsWithNumericCode) {
    const fs::path dir = temp_dir("nan");
    const fs::path path = dir / "diverge.json";
    std::ofstream(path) << R"({"synthetic": {"count_per_motif": 10}, "training": {"learning_rate": 1e6,
                             "total_updates": 50, "mode": "ordinary"}})";
    const Result r = run("train --mode ordinary --data synthetic --config " + path.string() + " --out " +
                             (dir / "run").string(),
                         dir);
    EXPECT_EQ(r.code, 3) << r.output;
    EXPECT_NE(r.output.find("step"), std::string::npos) << r.output;
}
