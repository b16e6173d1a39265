#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gsd/config.hpp"
#include "gsd/io.hpp"
#include "gsd/rng.hpp"

using namespace gsd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gsd_test_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("dataset round-trips through the binary format") {
    TempDir tmp;
    SynthConfig cfg;
    cfg.n_identities = 3;
    cfg.samples_per_identity = 4;
    cfg.image_size = 16;
    cfg.seed = 11;
    cfg.domain = Domain::B;
    const Dataset original = generate_split(cfg);

    const std::string path = tmp.file("data.gsdd");
    write_dataset(path, original);
    const Dataset loaded = read_dataset(path);

    REQUIRE(loaded.samples.size() == original.samples.size());
    CHECK(loaded.image_size == original.image_size);
    for (std::size_t i = 0; i < original.samples.size(); ++i) {
        CHECK(loaded.samples[i].pixels == original.samples[i].pixels);
        CHECK(loaded.samples[i].label == original.samples[i].label);
        CHECK(loaded.samples[i].identity_id == original.samples[i].identity_id);
        CHECK(loaded.samples[i].group_id == original.samples[i].group_id);
        CHECK(loaded.samples[i].domain == original.samples[i].domain);
    }

    // byte-identical on rewrite
    write_dataset(tmp.file("again.gsdd"), loaded);
    CHECK(read_text_file(path) == read_text_file(tmp.file("again.gsdd")));

    CHECK_THROWS_AS(read_dataset(tmp.file("missing.gsdd")), IoError);
}

TEST_CASE("checkpoint round-trips byte-exactly") {
    TempDir tmp;
    EncoderConfig cfg;
    cfg.image_size = 8;
    cfg.patch_size = 4;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.depth = 2;
    const EncoderModel model = init_encoder(cfg, 21);

    DenseMatrix guide(cfg.dim, 5);
    Rng rng(22);
    for (double& v : guide.data) v = rng.normal();
    SemanticBasis basis = build_semantic_basis(guide, 3);
    basis.anchor.assign(cfg.dim, 0.25);

    const std::string path = tmp.file("model.ckpt");
    save_model(path, model, &basis);

    const LoadedModel loaded = load_model(path);
    CHECK(params_equal(loaded.model, model));
    REQUIRE(loaded.has_basis);
    CHECK(loaded.train_basis.u.data == basis.u.data);
    CHECK(loaded.train_basis.anchor == basis.anchor);

    save_model(tmp.file("model2.ckpt"), loaded.model,
               loaded.has_basis ? &loaded.train_basis : nullptr);
    CHECK(read_text_file(path) == read_text_file(tmp.file("model2.ckpt")));

    // a model without a basis record loads with has_basis = false
    save_model(tmp.file("plain.ckpt"), model);
    CHECK(!load_model(tmp.file("plain.ckpt")).has_basis);
}

TEST_CASE("checkpoint rejects malformed files") {
    TempDir tmp;
    write_text_file(tmp.file("bad.ckpt"), "GSDCKPT9 nonsense");
    CHECK_THROWS_AS(read_checkpoint(tmp.file("bad.ckpt")), IoError);
    write_text_file(tmp.file("trunc.ckpt"), std::string("GSDCKPT1") + "\x04\x00");
    CHECK_THROWS_AS(read_checkpoint(tmp.file("trunc.ckpt")), IoError);
}

TEST_CASE("run config defaults, parsing and echo") {
    const RunConfig defaults;
    CHECK(defaults.get("encoder.dim") == "64");
    CHECK(defaults.get("gsd.k") == "8");
    CHECK(defaults.get("train.seed") == "1");
    CHECK(defaults.out_dir() == "out");
    CHECK(defaults.data_dir() == "out");  // empty data.dir falls back

    const RunConfig parsed = RunConfig::from_string(
        "# comment line\n"
        "train.seed = 9\n"
        "gsd.k = 16   # trailing comment\n"
        "\n"
        "data.dir = /tmp/somewhere\n");
    CHECK(parsed.get("train.seed") == "9");
    CHECK(parsed.gsd().requested_k == 16);
    CHECK(parsed.data_dir() == "/tmp/somewhere");

    CHECK_THROWS_AS(RunConfig::from_string("no.such.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_string("garbage line\n"), ConfigError);

    // resolved echo contains every key exactly once, sorted
    const std::string echo = parsed.resolved_text();
    CHECK(echo.find("train.seed = 9\n") != std::string::npos);
    CHECK(echo.find("encoder.dim = 64\n") != std::string::npos);
    std::size_t lines = 0;
    for (char c : echo)
        if (c == '\n') ++lines;
    CHECK(lines == 29);

    // echo re-parses to the same resolved state
    CHECK(RunConfig::from_string(echo).resolved_text() == echo);
}

TEST_CASE("typed config views validate") {
    RunConfig config;
    config.set("encoder.dim", "65");
    CHECK_THROWS_AS(config.encoder(), ConfigError);

    config = RunConfig{};
    config.set("gsd.anchor_mode", "mean");
    CHECK_THROWS_AS(config.gsd(), ConfigError);

    config = RunConfig{};
    config.set("train.lr", "fast");
    CHECK_THROWS_AS(config.train(), ConfigError);

    config = RunConfig{};
    config.set("gsd.num_tail_layers", "7");  // depth defaults to 6
    CHECK_THROWS_AS(config.gsd(), ConfigError);

    config = RunConfig{};
    config.set("sweep.seeds", "3, 5, 8");
    CHECK(config.sweep_seeds() == std::vector<std::uint64_t>{3, 5, 8});
}

TEST_CASE("GSD_SEED overrides train.seed") {
    RunConfig config;
    setenv("GSD_SEED", "4242", 1);
    config.apply_env_overrides();
    unsetenv("GSD_SEED");
    CHECK(config.train().seed == 4242);
}

TEST_CASE("format_double is deterministic") {
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(1.0 / 3.0) == format_double(1.0 / 3.0));
    CHECK(format_double(0.0) == "0");
}
