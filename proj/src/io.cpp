#include "gsd/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace gsd {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kDataMagic[8] = {'G', 'S', 'D', 'D', 'A', 'T', 'A', '1'};
constexpr char kCkptMagic[8] = {'G', 'S', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated file: " + path);
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return in;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& dataset) {
    std::ofstream out = open_out(path);
    out.write(kDataMagic, sizeof(kDataMagic));
    write_pod(out, static_cast<std::uint64_t>(dataset.samples.size()));
    write_pod(out, static_cast<std::uint32_t>(dataset.image_size));
    const std::size_t n_pixels = dataset.image_size * dataset.image_size;
    std::vector<float> buf(n_pixels);
    for (const SynthSample& s : dataset.samples) {
        if (s.pixels.size() != n_pixels) {
            throw IoError("write_dataset: sample pixel count mismatch in " + path);
        }
        write_pod(out, s.identity_id);
        write_pod(out, s.label);
        write_pod(out, s.group_id);
        write_pod(out, static_cast<std::uint8_t>(s.domain));
        for (std::size_t i = 0; i < n_pixels; ++i) buf[i] = static_cast<float>(s.pixels[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(n_pixels * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in = open_in(path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kDataMagic, sizeof(magic)) != 0) {
        throw IoError("not a dataset file: " + path);
    }
    const auto count = read_pod<std::uint64_t>(in, path);
    const auto image_size = read_pod<std::uint32_t>(in, path);
    Dataset ds;
    ds.image_size = image_size;
    ds.samples.resize(count);
    const std::size_t n_pixels = static_cast<std::size_t>(image_size) * image_size;
    std::vector<float> buf(n_pixels);
    for (SynthSample& s : ds.samples) {
        s.identity_id = read_pod<std::uint32_t>(in, path);
        s.label = read_pod<std::uint8_t>(in, path);
        s.group_id = read_pod<std::uint32_t>(in, path);
        const auto dom = read_pod<std::uint8_t>(in, path);
        if (dom > 1) throw IoError("bad domain tag in " + path);
        s.domain = static_cast<Domain>(dom);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n_pixels * sizeof(float)));
        if (!in) throw IoError("truncated file: " + path);
        s.pixels.resize(n_pixels);
        for (std::size_t i = 0; i < n_pixels; ++i) s.pixels[i] = static_cast<double>(buf[i]);
    }
    return ds;
}

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out = open_out(path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    for (const NamedTensor& t : tensors) {
        write_pod(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_pod(out, static_cast<std::uint32_t>(2));
        write_pod(out, static_cast<std::uint64_t>(t.tensor.rows));
        write_pod(out, static_cast<std::uint64_t>(t.tensor.cols));
        out.write(reinterpret_cast<const char*>(t.tensor.data.data()),
                  static_cast<std::streamsize>(t.tensor.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    std::ifstream in = open_in(path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
        throw IoError("not a checkpoint file: " + path);
    }
    std::vector<NamedTensor> tensors;
    while (in.peek() != std::ifstream::traits_type::eof()) {
        const auto name_len = read_pod<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw IoError("truncated file: " + path);
        const auto rank = read_pod<std::uint32_t>(in, path);
        if (rank == 0 || rank > 2) throw IoError("unsupported tensor rank in " + path);
        std::uint64_t rows = 1, cols = 1;
        if (rank == 1) {
            cols = read_pod<std::uint64_t>(in, path);
        } else {
            rows = read_pod<std::uint64_t>(in, path);
            cols = read_pod<std::uint64_t>(in, path);
        }
        DenseMatrix t(rows, cols);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("truncated file: " + path);
        tensors.push_back({std::move(name), std::move(t)});
    }
    return tensors;
}

void save_model(const std::string& path, const EncoderModel& model,
                const SemanticBasis* train_basis) {
    std::vector<NamedTensor> tensors;
    DenseMatrix cfg(1, 6);
    cfg.data = {static_cast<double>(model.config.image_size),
                static_cast<double>(model.config.patch_size),
                static_cast<double>(model.config.dim),
                static_cast<double>(model.config.heads),
                static_cast<double>(model.config.depth),
                model.config.mlp_ratio};
    tensors.push_back({"config", std::move(cfg)});
    visit_params(const_cast<EncoderModel&>(model), [&](const std::string& name, DenseMatrix& t) {
        tensors.push_back({name, t});
    });
    if (train_basis != nullptr && !train_basis->empty()) {
        tensors.push_back({"gsd.basis.u", train_basis->u});
        DenseMatrix anchor(1, train_basis->anchor.size());
        anchor.data = train_basis->anchor;
        tensors.push_back({"gsd.basis.anchor", std::move(anchor)});
    }
    write_checkpoint(path, tensors);
}

LoadedModel load_model(const std::string& path) {
    const std::vector<NamedTensor> tensors = read_checkpoint(path);
    const DenseMatrix* cfg = nullptr;
    for (const NamedTensor& t : tensors) {
        if (t.name == "config") cfg = &t.tensor;
    }
    if (cfg == nullptr || cfg->data.size() != 6) {
        throw IoError("checkpoint lacks a config record: " + path);
    }
    EncoderConfig config;
    config.image_size = static_cast<std::size_t>(cfg->data[0]);
    config.patch_size = static_cast<std::size_t>(cfg->data[1]);
    config.dim = static_cast<std::size_t>(cfg->data[2]);
    config.heads = static_cast<std::size_t>(cfg->data[3]);
    config.depth = static_cast<std::size_t>(cfg->data[4]);
    config.mlp_ratio = cfg->data[5];
    config.validate();

    LoadedModel out;
    out.model = init_encoder(config, 0);
    visit_params(out.model, [&](const std::string& name, DenseMatrix& dst) {
        for (const NamedTensor& t : tensors) {
            if (t.name != name) continue;
            if (t.tensor.rows != dst.rows || t.tensor.cols != dst.cols) {
                throw IoError("checkpoint tensor " + name + " has shape " +
                              t.tensor.shape_str() + ", expected " + dst.shape_str() + ": " +
                              path);
            }
            dst = t.tensor;
            return;
        }
        throw IoError("checkpoint lacks tensor " + name + ": " + path);
    });

    for (const NamedTensor& t : tensors) {
        if (t.name == "gsd.basis.u") {
            out.train_basis.u = t.tensor;
            out.train_basis.effective_k = t.tensor.cols;
            out.train_basis.requested_k = t.tensor.cols;
            out.has_basis = true;
        } else if (t.name == "gsd.basis.anchor") {
            out.train_basis.anchor = t.tensor.data;
        }
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace gsd
