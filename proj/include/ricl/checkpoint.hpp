#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ricl/transformer.hpp"

namespace ricl {

/// One entry of the tensor file. Values are stored as 32-bit floats.
struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> values;
};

/// File layout: "ATDPT1", u32 tensor count, then per tensor u16 name length,
/// name bytes, u8 rank, rank x u64 dims, f32 values in row-major order. All
/// integers and floats are little-endian.
std::string encode_tensor_file(const std::vector<TensorRecord>& records);
std::vector<TensorRecord> decode_tensor_file(const std::string& bytes);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

void write_tensor_file(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_tensor_file(const std::string& path);

/// Model tensors plus a "meta.config" record describing the architecture.
std::vector<TensorRecord> transformer_records(const Transformer& model);
Transformer transformer_from_records(const std::vector<TensorRecord>& records);

void save_transformer(const std::string& path, const Transformer& model);
Transformer load_transformer(const std::string& path);

}  // namespace ricl
