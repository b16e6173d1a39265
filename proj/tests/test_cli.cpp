#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gsd/cli.hpp"
#include "gsd/io.hpp"
#include "gsd/pipeline.hpp"
#include "gsd/rng.hpp"

using namespace gsd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gsd_cli_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& name) const { return (path / name).string(); }
};

const char* kMicroConfig =
    "encoder.image_size = 8\n"
    "encoder.patch_size = 4\n"
    "encoder.dim = 16\n"
    "encoder.heads = 2\n"
    "encoder.depth = 2\n"
    "encoder.mlp_ratio = 2.0\n"
    "gsd.num_tail_layers = 1\n"
    "gsd.k = 2\n"
    "data.n_identities = 3\n"
    "data.samples_per_identity = 4\n"
    "data.image_size = 8\n"
    "data.artifact_strength = 0.4\n"
    "train.epochs = 2\n"
    "train.batch = 4\n"
    "train.pretrain_epochs = 1\n"
    "sweep.seeds = 1\n";

std::string write_config(const TempDir& tmp, const std::string& extra = "") {
    const std::string path = tmp.str("run.conf");
    write_text_file(path, std::string(kMicroConfig) + extra);
    return path;
}

int run(std::vector<std::string> args) { return run_cli(args); }

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run({}) == 1);
    CHECK(run({"explode"}) == 1);
    CHECK(run({"train"}) == 1);                              // --config missing
    CHECK(run({"train", "--config"}) == 1);                  // value missing
    CHECK(run({"train", "--config", "x", "--bogus", "y"}) == 1);
    CHECK(run({"sweep", "--config", "x"}) == 1);             // --axis missing
}

TEST_CASE("generate: contract, determinism, error paths") {
    TempDir tmp;
    const std::string config = write_config(tmp);
    const std::string out = tmp.str("data");

    CHECK(run({"generate", "--config", config, "--out", out}) == 0);
    for (const char* f : {"train_a.gsdd", "test_a.gsdd", "test_b.gsdd", "train_a.manifest.csv",
                          "test_a.manifest.csv", "test_b.manifest.csv", "config.resolved"}) {
        CHECK(fs::exists(fs::path(out) / f));
    }

    // deterministic bytes on rerun
    const std::string first = read_text_file(out + "/train_a.gsdd");
    CHECK(run({"generate", "--config", config, "--out", out}) == 0);
    CHECK(read_text_file(out + "/train_a.gsdd") == first);

    // manifest rows = samples + header
    const Dataset train = read_dataset(out + "/train_a.gsdd");
    CHECK(count_lines(read_text_file(out + "/train_a.manifest.csv")) == train.samples.size() + 1);

    // missing parent of out dir
    CHECK(run({"generate", "--config", config, "--out", tmp.str("no/such/dir")}) == 2);
    // unreadable config
    CHECK(run({"generate", "--config", tmp.str("absent.conf")}) == 2);
}

TEST_CASE("train/eval/analyze/sweep end to end at micro scale") {
    TempDir tmp;
    const std::string data_dir = tmp.str("data");
    const std::string config =
        write_config(tmp, "data.dir = " + data_dir + "\nout.dir = " + tmp.str("run") + "\n");
    REQUIRE(run({"generate", "--config", config, "--out", data_dir}) == 0);

    // --- train ---
    REQUIRE(run({"train", "--config", config}) == 0);
    const std::string run_dir = tmp.str("run");
    for (const char* f : {"detector.ckpt", "frozen.ckpt", "trace.csv", "config.resolved"}) {
        CHECK(fs::exists(fs::path(run_dir) / f));
    }
    const std::string trace = read_text_file(run_dir + "/trace.csv");
    CHECK(count_lines(trace) == 2 * 3 + 1);  // epochs x splits + header

    // determinism: rerun into another dir gives identical trace bytes
    REQUIRE(run({"train", "--config", config, "--out", tmp.str("run2")}) == 0);
    CHECK(read_text_file(tmp.str("run2") + "/trace.csv") == trace);
    CHECK(read_text_file(tmp.str("run2") + "/detector.ckpt") ==
          read_text_file(run_dir + "/detector.ckpt"));

    // GSD_SEED overrides the seed and changes the run
    setenv("GSD_SEED", "77", 1);
    REQUIRE(run({"train", "--config", config, "--out", tmp.str("run_seed")}) == 0);
    unsetenv("GSD_SEED");
    CHECK(read_text_file(tmp.str("run_seed") + "/trace.csv") != trace);

    // --- eval ---
    REQUIRE(run({"eval", "--config", config, "--ckpt", run_dir + "/detector.ckpt", "--data",
                 data_dir + "/test_b.gsdd", "--out", tmp.str("eval")}) == 0);
    const std::string report = read_text_file(tmp.str("eval") + "/report.csv");
    CHECK(report.find("per_batch/auc_frame,test_b,") != std::string::npos);
    CHECK(report.find("frozen_train_basis/auc_frame,test_b,") != std::string::npos);
    CHECK(report.find("per_batch/auc_group,test_b,") != std::string::npos);
    CHECK(report.find("per_batch/acc,test_b,") != std::string::npos);

    // shape-incompatible checkpoint: checkpoint trained for another config
    const std::string bad_config = tmp.str("bad.conf");
    write_text_file(bad_config, std::string(kMicroConfig) + "encoder.dim = 32\ndata.dir = " +
                                    data_dir + "\nout.dir = " + tmp.str("bad_out") + "\n");
    CHECK(run({"eval", "--config", bad_config, "--ckpt", run_dir + "/detector.ckpt", "--data",
               data_dir + "/test_b.gsdd"}) == 2);

    // singleton groups: group AUC equals frame AUC row for row
    {
        Dataset singleton = read_dataset(data_dir + "/test_b.gsdd");
        for (std::size_t i = 0; i < singleton.samples.size(); ++i)
            singleton.samples[i].group_id = static_cast<std::uint32_t>(i);
        write_dataset(tmp.str("singleton.gsdd"), singleton);
        REQUIRE(run({"eval", "--config", config, "--ckpt", run_dir + "/detector.ckpt", "--data",
                     tmp.str("singleton.gsdd"), "--out", tmp.str("eval_s")}) == 0);
        const std::string rep = read_text_file(tmp.str("eval_s") + "/report.csv");
        auto value_of = [&](const std::string& key) {
            const auto pos = rep.find(key);
            REQUIRE(pos != std::string::npos);
            const auto start = pos + key.size();
            return rep.substr(start, rep.find('\n', start) - start);
        };
        CHECK(value_of("per_batch/auc_frame,singleton,") ==
              value_of("per_batch/auc_group,singleton,"));
    }

    // --- analyze ---
    REQUIRE(run({"analyze", "--config", config, "--ckpt", run_dir + "/detector.ckpt", "--data",
                 data_dir + "/test_b.gsdd", "--out", tmp.str("ana")}) == 0);
    const std::string hist = read_text_file(tmp.str("ana") + "/cosine_hist.csv");
    std::size_t total = 0;
    std::size_t pos = hist.find('\n') + 1;
    while (pos < hist.size()) {
        const auto eol = hist.find('\n', pos);
        const auto last_comma = hist.rfind(',', eol);
        total += std::stoul(hist.substr(last_comma + 1, eol - last_comma - 1));
        pos = eol + 1;
    }
    const Dataset test_b = read_dataset(data_dir + "/test_b.gsdd");
    CHECK(total == test_b.samples.size());

    const std::string summary = read_text_file(tmp.str("ana") + "/summary.csv");
    CHECK(summary.find("residual_ortho_max,") != std::string::npos);
    double residual = -1.0, row_norm = -1.0;
    {
        const auto rpos = summary.find("residual_ortho_max,") + 19;
        residual = std::stod(summary.substr(rpos));
        const auto npos = summary.find("max_row_norm,") + 13;
        row_norm = std::stod(summary.substr(npos));
    }
    CHECK(residual <= 1e-8 * row_norm);

    const std::string sil = read_text_file(tmp.str("ana") + "/silhouette.csv");
    CHECK(sil.find("by_label,all,") != std::string::npos);
    CHECK(sil.find("by_identity,all,") != std::string::npos);
    CHECK(sil.find("by_identity,fake,") != std::string::npos);
    CHECK(fs::exists(tmp.str("ana") + "/attn_000.csv"));

    // --- sweep ---
    CHECK(run({"sweep", "--config", config, "--axis", "nothing", "--values", "1", "--out",
               tmp.str("sw_bad")}) == 2);

    REQUIRE(run({"sweep", "--config", config, "--axis", "depth", "--values", "0,1", "--out",
                 tmp.str("sw")}) == 0);
    const std::string sweep = read_text_file(tmp.str("sw") + "/sweep.csv");
    CHECK(count_lines(sweep) == 1 + 2);  // header + 2 values x 1 seed
    CHECK(sweep.find("depth,0,1,") != std::string::npos);
    CHECK(sweep.find("depth,1,1,") != std::string::npos);

    // depth-0 sweep run is bit-identical to the plain baseline run
    const std::string baseline_conf = tmp.str("baseline.conf");
    write_text_file(baseline_conf, std::string(kMicroConfig) + "data.dir = " + data_dir +
                                       "\ngsd.num_tail_layers = 0\n");
    REQUIRE(run({"train", "--config", baseline_conf, "--out", tmp.str("base")}) == 0);
    CHECK(read_text_file(tmp.str("sw") + "/seed_1/depth_0/trace.csv") ==
          read_text_file(tmp.str("base") + "/trace.csv"));
    CHECK(read_text_file(tmp.str("sw") + "/seed_1/depth_0/detector.ckpt") ==
          read_text_file(tmp.str("base") + "/detector.ckpt"));
}

TEST_CASE("the installed binary runs") {
    // smoke check that the real executable wires up to the same CLI
    const std::string exe = GSD_CLI_PATH;
    REQUIRE(fs::exists(exe));
    CHECK(std::system((exe + " >/dev/null 2>&1").c_str()) != 0);
    CHECK(std::system((exe + " generate --config /nonexistent.conf >/dev/null 2>&1").c_str()) !=
          0);
}
