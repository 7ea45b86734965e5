#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssmnd/json_fields.hpp"
#include "ssmnd/model.hpp"
#include "ssmnd/ndarray.hpp"
#include "ssmnd/params.hpp"

namespace ssmnd {

enum class DType { Float32, Float64 };

std::string to_string(DType t);
DType parse_dtype(const std::string& s);
std::size_t dtype_size(DType t);

struct TensorEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::Float32;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
};

/// Directory holding `manifest.json` and `weights.bin`. The blob is the
/// concatenation of row-major little-endian tensors at the manifest offsets.
struct Checkpoint {
  std::vector<TensorEntry> tensors;
  std::vector<NdArray> values;  // decoded, aligned with tensors
  Json model_config;            // null when absent
};

inline constexpr const char* kCheckpointFormat = "ssmnd-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Encodes values in `dtype` (float32 rounds to nearest).
void save_checkpoint(const std::string& dir, const std::vector<std::string>& names,
                     const std::vector<NdArray>& values, DType dtype, const Json& model_config = Json());
Checkpoint read_checkpoint(const std::string& dir);

void save_model(const std::string& dir, const Model& model, DType dtype = DType::Float32);
/// Rebuilds the model from the embedded config and overwrites every parameter.
Model load_model(const std::string& dir);
/// Copies tensors into `store`; each store parameter must appear exactly once
/// with a matching shape.
void assign_parameters(ParamStore& store, const Checkpoint& ckpt);

/// Values rounded through float32, as a float32 checkpoint would store them.
NdArray round_to_float32(const NdArray& a);

}  // namespace ssmnd
