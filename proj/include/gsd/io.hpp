#pragma once

#include <string>
#include <vector>

#include "gsd/basis.hpp"
#include "gsd/encoder.hpp"
#include "gsd/matrix.hpp"
#include "gsd/synthgen.hpp"

namespace gsd {

// Dataset file: magic "GSDDATA1", u64 sample count, u32 image_size, then
// per-sample records (identity u32, label u8, group u32, domain u8, pixels
// as little-endian float32). Byte-identical for identical datasets.
void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

struct NamedTensor {
    std::string name;
    DenseMatrix tensor;
};

// Checkpoint file: magic "GSDCKPT1", then records until end of file, each
// (u32 name length, name bytes, u32 rank, u64 dims..., row-major
// little-endian float64 payload). Round-trips byte-exactly.
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

// Model checkpoints add a "config" record plus, when a training basis is
// attached, "gsd.basis.u" / "gsd.basis.anchor" records.
void save_model(const std::string& path, const EncoderModel& model,
                const SemanticBasis* train_basis = nullptr);

struct LoadedModel {
    EncoderModel model;
    SemanticBasis train_basis;  // empty when the checkpoint carries none
    bool has_basis = false;
};
LoadedModel load_model(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Deterministic decimal rendering for CSV output.
std::string format_double(double v);

}  // namespace gsd
