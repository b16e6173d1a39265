#include "gsd/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>

#include "gsd/io.hpp"
#include "gsd/metrics.hpp"
#include "gsd/pipeline.hpp"
#include "gsd/rng.hpp"

namespace gsd {

namespace fs = std::filesystem;

namespace {

constexpr const char* kUsage =
    "usage: gsd <generate|train|eval|analyze|sweep> --config PATH [--out DIR]\n"
    "           [--ckpt PATH] [--data PATH] [--axis NAME --values CSV]\n";

struct CliArgs {
    std::string command;
    std::map<std::string, std::string> flags;
};

// Split-seed tags: the three dataset files of one experiment.
constexpr std::uint64_t kTagTrainA = 1;
constexpr std::uint64_t kTagTestA = 2;
constexpr std::uint64_t kTagTestB = 3;

int usage_error(const std::string& message) {
    std::fprintf(stderr, "gsd: %s\n%s", message.c_str(), kUsage);
    return 1;
}

// Creates dir if missing; its parent must already exist.
void ensure_out_dir(const fs::path& dir) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
        return;
    }
    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    if (!fs::exists(parent)) {
        throw IoError("parent directory of " + dir.string() + " does not exist");
    }
    std::error_code ec;
    fs::create_directory(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void echo_config(const RunConfig& config, const fs::path& out_dir) {
    write_text_file((out_dir / "config.resolved").string(), config.resolved_text());
}

SynthConfig split_config(const RunConfig& config, Domain domain, std::uint64_t tag) {
    SynthConfig synth = config.data();
    synth.domain = domain;
    synth.seed = derive_seed(config.data_seed(), tag);
    return synth;
}

int cmd_generate(const RunConfig& config) {
    const fs::path out_dir = config.out_dir();
    ensure_out_dir(out_dir);
    echo_config(config, out_dir);

    const struct {
        const char* file;
        Domain domain;
        std::uint64_t tag;
    } splits[] = {
        {kTrainAFile, Domain::A, kTagTrainA},
        {kTestAFile, Domain::A, kTagTestA},
        {kTestBFile, Domain::B, kTagTestB},
    };
    for (const auto& s : splits) {
        const Dataset ds = generate_split(split_config(config, s.domain, s.tag));
        const fs::path path = out_dir / s.file;
        write_dataset(path.string(), ds);
        fs::path manifest = path;
        manifest.replace_extension(".manifest.csv");
        write_text_file(manifest.string(), manifest_csv(ds));
        std::printf("wrote %s (%zu samples)\n", path.string().c_str(), ds.samples.size());
    }
    return 0;
}

// Runs the training protocol and writes frozen.ckpt, detector.ckpt and
// trace.csv into dir. Shared by train and sweep.
TrainResult run_training_to_dir(const RunConfig& config, const fs::path& dir) {
    ensure_out_dir(dir);
    echo_config(config, dir);
    TrainResult result = train_loop(config);
    save_model((dir / "frozen.ckpt").string(), result.frozen);
    save_model((dir / "detector.ckpt").string(), result.detector,
               result.last_train_basis.empty() ? nullptr : &result.last_train_basis);
    write_text_file((dir / "trace.csv").string(), trace_csv(result.trace));
    return result;
}

int cmd_train(const RunConfig& config) {
    const fs::path out_dir = config.out_dir();
    const TrainResult result = run_training_to_dir(config, out_dir);
    const EpochRow& last = result.trace.back();
    std::printf("trained %zu epochs; final %s: loss %s auc_frame %s auc_group %s acc %s\n",
                result.trace.size() / 3, last.split.c_str(), format_double(last.loss).c_str(),
                format_double(last.auc_frame).c_str(), format_double(last.auc_group).c_str(),
                format_double(last.acc).c_str());
    return 0;
}

Dataset load_eval_dataset(const RunConfig& config, const std::string& path) {
    Dataset ds = read_dataset(path);
    if (ds.image_size != config.encoder().image_size) {
        throw ConfigError("dataset " + path + " image size " + std::to_string(ds.image_size) +
                          " does not match encoder.image_size");
    }
    return ds;
}

LoadedModel load_detector_checked(const RunConfig& config, const std::string& ckpt) {
    LoadedModel loaded = load_model(ckpt);
    if (!(loaded.model.config == config.encoder())) {
        throw ConfigError("checkpoint " + ckpt + " does not match the configured encoder");
    }
    return loaded;
}

// Frozen stream stored next to the detector checkpoint.
std::string sibling_frozen_path(const std::string& ckpt) {
    return (fs::path(ckpt).parent_path() / "frozen.ckpt").string();
}

int cmd_eval(const RunConfig& config, const std::string& ckpt, const std::string& data_path) {
    const fs::path out_dir = config.out_dir();
    ensure_out_dir(out_dir);
    echo_config(config, out_dir);

    const LoadedModel loaded = load_detector_checked(config, ckpt);
    const Dataset ds = load_eval_dataset(config, data_path);
    const GsdConfig gsd = config.gsd();
    const std::size_t batch = config.train().batch;
    const std::string split = fs::path(data_path).stem().string();

    Vector labels(ds.samples.size());
    std::vector<std::uint32_t> groups(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        labels[i] = ds.samples[i].label;
        groups[i] = ds.samples[i].group_id;
    }

    std::string report = "metric,split,value\n";
    auto add_rows = [&](const char* mode, const Vector& logits) {
        const EpochRow row = metrics_row(0, split, ds, logits);
        report += std::string(mode) + "/loss," + split + "," + format_double(row.loss) + "\n";
        report += std::string(mode) + "/auc_frame," + split + "," +
                  format_double(row.auc_frame) + "\n";
        report += std::string(mode) + "/auc_group," + split + "," +
                  format_double(row.auc_group) + "\n";
        report += std::string(mode) + "/acc," + split + "," + format_double(row.acc) + "\n";
    };

    // Transductive: basis re-estimated from each evaluation batch.
    {
        DenseMatrix globals;
        const DenseMatrix* cache = nullptr;
        if (gsd.active()) {
            const LoadedModel frozen = load_detector_checked(config, sibling_frozen_path(ckpt));
            globals = dataset_frozen_globals(frozen.model, ds, gsd.anchor_mode);
            cache = &globals;
        }
        add_rows("per_batch", score_dataset(loaded.model, ds, gsd, cache, nullptr, batch).logits);
    }
    // Deployment-style: the basis stored at the end of training.
    {
        const SemanticBasis* fixed = loaded.has_basis ? &loaded.train_basis : nullptr;
        SemanticBasis empty;
        if (gsd.active() && fixed == nullptr) fixed = &empty;  // trained without GSD
        add_rows("frozen_train_basis",
                 score_dataset(loaded.model, ds, gsd, nullptr, fixed, batch).logits);
    }

    write_text_file((out_dir / "report.csv").string(), report);
    std::fputs(report.c_str(), stdout);
    return 0;
}

int cmd_analyze(const RunConfig& config, const std::string& ckpt, const std::string& data_path) {
    const fs::path out_dir = config.out_dir();
    ensure_out_dir(out_dir);
    echo_config(config, out_dir);

    const LoadedModel loaded = load_detector_checked(config, ckpt);
    const LoadedModel frozen = load_detector_checked(config, sibling_frozen_path(ckpt));
    const Dataset ds = load_eval_dataset(config, data_path);
    const GsdConfig gsd = config.gsd();
    const std::size_t batch = config.train().batch;
    const std::size_t n = ds.samples.size();

    // Cosine of every frozen global feature to the dataset-wide anchor.
    const DenseMatrix globals = dataset_frozen_globals(frozen.model, ds, gsd.anchor_mode);
    const Vector anchor = compute_anchor(globals);
    constexpr std::size_t kBins = 40;
    std::vector<std::size_t> histogram(kBins, 0);
    std::size_t zero_vectors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Vector g(globals.row_ptr(i), globals.row_ptr(i) + globals.cols);
        if (norm2(g) == 0.0) ++zero_vectors;
        const double c = cosine_to_anchor(g, anchor);
        const auto bin = std::min<std::size_t>(
            kBins - 1, static_cast<std::size_t>(std::max(0.0, (c + 1.0) / 2.0 * kBins)));
        histogram[bin]++;
    }
    std::string hist_csv = "bin_low,bin_high,count\n";
    for (std::size_t b = 0; b < kBins; ++b) {
        const double lo = -1.0 + 2.0 * static_cast<double>(b) / kBins;
        const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / kBins;
        hist_csv += format_double(lo) + "," + format_double(hi) + "," +
                    std::to_string(histogram[b]) + "\n";
    }
    write_text_file((out_dir / "cosine_hist.csv").string(), hist_csv);

    // Instrumented scoring pass: features, residual orthogonality and the
    // first few attention maps.
    const bool active = gsd.active();
    const GsdConfig* gsd_ptr = active ? &gsd : nullptr;
    const bool use_fixed = active && gsd.eval_basis_mode == EvalBasisMode::FrozenTrainBasis;
    SemanticBasis fixed;
    if (use_fixed && loaded.has_basis) fixed = loaded.train_basis;

    std::vector<Vector> features(n);
    double residual_max = 0.0, row_norm_max = 0.0;
    const std::size_t first_equipped =
        active ? loaded.model.config.depth - gsd.num_tail_layers : loaded.model.config.depth;
    const std::size_t n_attention = std::min<std::size_t>(8, n);

    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t bsz = std::min(batch, n - start);
        SemanticBasis per_batch;
        const SemanticBasis* basis = nullptr;
        if (active) {
            if (use_fixed) {
                basis = &fixed;
            } else {
                DenseMatrix batch_globals(bsz, globals.cols);
                for (std::size_t i = 0; i < bsz; ++i) {
                    const double* src = globals.row_ptr(start + i);
                    std::copy(src, src + globals.cols, batch_globals.row_ptr(i));
                }
                per_batch = estimate_semantic_basis(batch_globals, gsd.requested_k);
                basis = &per_batch;
            }
        }
        for (std::size_t i = start; i < start + bsz; ++i) {
            const bool want_trace = active || i < n_attention;
            const ForwardTrace t =
                forward(loaded.model, ds.image(i), gsd_ptr, basis, want_trace, nullptr);
            features[i] = t.penultimate;
            if (i < n_attention) {
                std::string attn_csv;
                for (std::size_t h = 0; h < t.cls_attention.rows; ++h) {
                    for (std::size_t j = 0; j < t.cls_attention.cols; ++j) {
                        if (j > 0) attn_csv += ",";
                        attn_csv += format_double(t.cls_attention(h, j));
                    }
                    attn_csv += "\n";
                }
                char name[32];
                std::snprintf(name, sizeof(name), "attn_%03zu.csv", i);
                write_text_file((out_dir / name).string(), attn_csv);
            }
            if (active && basis != nullptr && !basis->empty()) {
                for (std::size_t l = first_equipped; l < loaded.model.config.depth; ++l) {
                    const DenseMatrix& x = t.layer_inputs[l];
                    DenseMatrix patch_rows(x.rows - 1, x.cols);
                    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(x.cols),
                              x.data.end(), patch_rows.data.begin());
                    residual_max =
                        std::max(residual_max, residual_orthogonality(patch_rows, *basis));
                    for (std::size_t r = 0; r < patch_rows.rows; ++r) {
                        double nrm = 0.0;
                        for (std::size_t c2 = 0; c2 < patch_rows.cols; ++c2)
                            nrm += patch_rows(r, c2) * patch_rows(r, c2);
                        row_norm_max = std::max(row_norm_max, std::sqrt(nrm));
                    }
                }
            }
        }
    }

    std::string summary = "metric,value\n";
    summary += "residual_ortho_max," + format_double(residual_max) + "\n";
    summary += "max_row_norm," + format_double(row_norm_max) + "\n";
    summary += "zero_vector_samples," + std::to_string(zero_vectors) + "\n";
    write_text_file((out_dir / "summary.csv").string(), summary);

    // Cluster separability of the penultimate features.
    DenseMatrix feature_matrix(n, loaded.model.config.dim);
    Vector labels(n);
    std::vector<std::uint32_t> by_label(n), by_identity(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(features[i].begin(), features[i].end(), feature_matrix.row_ptr(i));
        labels[i] = ds.samples[i].label;
        by_label[i] = ds.samples[i].label;
        by_identity[i] = ds.samples[i].identity_id;
    }
    auto subset_silhouette = [&](std::uint8_t wanted_label) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i)
            if (ds.samples[i].label == wanted_label) idx.push_back(i);
        DenseMatrix sub(idx.size(), feature_matrix.cols);
        std::vector<std::uint32_t> ids(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double* src = feature_matrix.row_ptr(idx[i]);
            std::copy(src, src + feature_matrix.cols, sub.row_ptr(i));
            ids[i] = ds.samples[idx[i]].identity_id;
        }
        return silhouette(sub, ids);
    };
    std::string sil_csv = "coloring,subset,value\n";
    sil_csv += "by_label,all," + format_double(silhouette(feature_matrix, by_label)) + "\n";
    sil_csv += "by_identity,all," + format_double(silhouette(feature_matrix, by_identity)) + "\n";
    sil_csv += "by_identity,fake," + format_double(subset_silhouette(1)) + "\n";
    sil_csv += "by_identity,real," + format_double(subset_silhouette(0)) + "\n";
    write_text_file((out_dir / "silhouette.csv").string(), sil_csv);

    std::printf("analyze: wrote cosine_hist.csv, summary.csv, silhouette.csv and %zu attention maps to %s\n",
                n_attention, out_dir.string().c_str());
    return 0;
}

int cmd_sweep(const RunConfig& base, const std::string& axis, const std::string& values_csv) {
    if (axis != "k" && axis != "depth" && axis != "anchor_mode") {
        throw ConfigError("sweep axis must be k, depth or anchor_mode, got '" + axis + "'");
    }
    std::vector<std::string> values;
    std::size_t pos = 0;
    while (pos <= values_csv.size()) {
        auto comma = values_csv.find(',', pos);
        if (comma == std::string::npos) comma = values_csv.size();
        const std::string item = values_csv.substr(pos, comma - pos);
        if (!item.empty()) values.push_back(item);
        pos = comma + 1;
    }
    if (values.empty()) throw ConfigError("sweep: --values is empty");

    const fs::path out_dir = base.out_dir();
    ensure_out_dir(out_dir);
    echo_config(base, out_dir);

    std::string sweep_csv = "axis,value,seed,auc_frame_A,auc_frame_B,auc_group_B,acc_B\n";
    for (const std::uint64_t seed : base.sweep_seeds()) {
        const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
        ensure_out_dir(seed_dir);

        // One frozen stream per seed, shared across the axis values.
        const std::string frozen_path = (seed_dir / "frozen.ckpt").string();
        if (!fs::exists(frozen_path)) {
            RunConfig pre = base;
            pre.set("train.seed", std::to_string(seed));
            const TrainParams params = pre.train();
            const EncoderConfig enc_cfg = pre.encoder();
            EncoderModel frozen;
            if (!params.frozen_ckpt.empty()) {
                frozen = load_model(params.frozen_ckpt).model;
            } else if (params.frozen_random_init) {
                frozen = init_encoder(enc_cfg, derive_seed(params.seed, 0x66726f7a));
            } else {
                const Dataset train_ds =
                    read_dataset((fs::path(pre.data_dir()) / kTrainAFile).string());
                frozen = pretrain_identity_encoder(enc_cfg, train_ds, params);
            }
            save_model(frozen_path, frozen);
        }

        for (const std::string& value : values) {
            RunConfig run = base;
            run.set("train.seed", std::to_string(seed));
            run.set("train.frozen_ckpt", frozen_path);
            if (axis == "k") {
                run.set("gsd.k", value);
            } else if (axis == "depth") {
                run.set("gsd.num_tail_layers", value);
            } else {
                run.set("gsd.anchor_mode", value);
            }
            const fs::path run_dir = seed_dir / (axis + "_" + value);
            run.set("out.dir", run_dir.string());
            const TrainResult result = run_training_to_dir(run, run_dir);

            const EpochRow* last_a = nullptr;
            const EpochRow* last_b = nullptr;
            for (const EpochRow& row : result.trace) {
                if (row.split == "test_a") last_a = &row;
                if (row.split == "test_b") last_b = &row;
            }
            sweep_csv += axis + "," + value + "," + std::to_string(seed) + "," +
                         format_double(last_a->auc_frame) + "," +
                         format_double(last_b->auc_frame) + "," +
                         format_double(last_b->auc_group) + "," + format_double(last_b->acc) +
                         "\n";
            std::printf("sweep %s=%s seed=%llu done\n", axis.c_str(), value.c_str(),
                        static_cast<unsigned long long>(seed));
        }
    }
    write_text_file((out_dir / "sweep.csv").string(), sweep_csv);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CliArgs cli;
    if (args.empty()) return usage_error("missing command");
    cli.command = args[0];
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& flag = args[i];
        if (flag.rfind("--", 0) != 0) return usage_error("unexpected argument '" + flag + "'");
        if (i + 1 >= args.size()) return usage_error(flag + " needs a value");
        cli.flags[flag.substr(2)] = args[++i];
    }

    static const std::map<std::string, int> known = {
        {"generate", 0}, {"train", 0}, {"eval", 0}, {"analyze", 0}, {"sweep", 0}};
    if (known.find(cli.command) == known.end()) {
        return usage_error("unknown command '" + cli.command + "'");
    }
    const auto config_it = cli.flags.find("config");
    if (config_it == cli.flags.end()) return usage_error("--config is required");

    for (const auto& [flag, value] : cli.flags) {
        (void)value;
        if (flag != "config" && flag != "out" && flag != "ckpt" && flag != "data" &&
            flag != "axis" && flag != "values") {
            return usage_error("unknown flag --" + flag);
        }
    }

    if (cli.command == "eval" || cli.command == "analyze") {
        if (!cli.flags.count("ckpt")) return usage_error("--ckpt is required");
        if (!cli.flags.count("data")) return usage_error("--data is required");
    }
    if (cli.command == "sweep") {
        if (!cli.flags.count("axis")) return usage_error("--axis is required");
        if (!cli.flags.count("values")) return usage_error("--values is required");
    }

    try {
        RunConfig config = RunConfig::from_file(config_it->second);
        if (cli.flags.count("out")) config.set("out.dir", cli.flags["out"]);
        config.apply_env_overrides();

        if (cli.command == "generate") return cmd_generate(config);
        if (cli.command == "train") return cmd_train(config);
        if (cli.command == "eval") return cmd_eval(config, cli.flags["ckpt"], cli.flags["data"]);
        if (cli.command == "analyze") {
            return cmd_analyze(config, cli.flags["ckpt"], cli.flags["data"]);
        }
        return cmd_sweep(config, cli.flags["axis"], cli.flags["values"]);
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "gsd: numerical failure: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "gsd: %s\n", e.what());
        return 2;
    }
}

}  // namespace gsd
