#include "ssmnd/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ssmnd/errors.hpp"

namespace ssmnd {

namespace fs = std::filesystem;

std::string to_string(DType t) { return t == DType::Float32 ? "float32" : "float64"; }

DType parse_dtype(const std::string& s) {
  if (s == "float32" || s == "f32") return DType::Float32;
  if (s == "float64" || s == "f64") return DType::Float64;
  throw CheckpointError("unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType t) { return t == DType::Float32 ? 4 : 8; }

namespace {

template <class U>
void put_le(std::vector<char>& out, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <class U>
U get_le(const char* p) {
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  return bits;
}

}  // namespace

NdArray round_to_float32(const NdArray& a) {
  NdArray out = a;
  for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

void save_checkpoint(const std::string& dir, const std::vector<std::string>& names,
                     const std::vector<NdArray>& values, DType dtype, const Json& model_config) {
  if (names.size() != values.size()) throw CheckpointError("name/value count mismatch");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw CheckpointError("duplicate tensor '" + n + "'");
  fs::create_directories(dir);
  std::vector<char> blob;
  Json tensors = Json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t offset = blob.size();
    for (double v : values[i].values()) {
      if (dtype == DType::Float32) put_le(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else put_le(blob, std::bit_cast<std::uint64_t>(v));
    }
    tensors.push_back({{"name", names[i]},
                       {"shape", values[i].shape()},
                       {"dtype", to_string(dtype)},
                       {"offset", offset},
                       {"nbytes", blob.size() - offset}});
  }
  Json manifest = {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"byte_order", "little"},
                   {"tensors", tensors}};
  if (!model_config.is_null()) manifest["model_config"] = model_config;

  std::ofstream bin(fs::path(dir) / "weights.bin", std::ios::binary | std::ios::trunc);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw CheckpointError("cannot write " + (fs::path(dir) / "weights.bin").string());
  std::ofstream man(fs::path(dir) / "manifest.json", std::ios::trunc);
  man << manifest.dump(2) << '\n';
  if (!man) throw CheckpointError("cannot write " + (fs::path(dir) / "manifest.json").string());
}

Checkpoint read_checkpoint(const std::string& dir) {
  const fs::path man_path = fs::path(dir) / "manifest.json";
  std::ifstream man(man_path);
  if (!man) throw CheckpointError("cannot open " + man_path.string());
  Json manifest;
  try {
    manifest = Json::parse(man);
  } catch (const Json::exception& e) {
    throw CheckpointError(man_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat) throw CheckpointError(man_path.string() + ": not a checkpoint manifest");
  if (manifest.value("version", 0) != kCheckpointVersion)
    throw CheckpointError(man_path.string() + ": unsupported version");

  std::ifstream bin(fs::path(dir) / "weights.bin", std::ios::binary);
  if (!bin) throw CheckpointError("cannot open " + (fs::path(dir) / "weights.bin").string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  ck.model_config = manifest.contains("model_config") ? manifest["model_config"] : Json();
  try {
    for (const auto& t : manifest.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.dtype = parse_dtype(t.at("dtype").get<std::string>());
      e.offset = t.at("offset").get<std::uint64_t>();
      e.nbytes = t.at("nbytes").get<std::uint64_t>();
      const std::size_t count = shape_size(e.shape);
      const std::size_t width = dtype_size(e.dtype);
      if (e.nbytes != count * width) throw CheckpointError("tensor '" + e.name + "': nbytes disagrees with shape");
      if (e.offset + e.nbytes > blob.size()) throw CheckpointError("tensor '" + e.name + "' exceeds weights.bin");
      std::vector<double> vals(count);
      const char* p = blob.data() + e.offset;
      for (std::size_t k = 0; k < count; ++k, p += width) {
        vals[k] = e.dtype == DType::Float32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)))
                                            : std::bit_cast<double>(get_le<std::uint64_t>(p));
      }
      ck.values.emplace_back(e.shape, std::move(vals));
      ck.tensors.push_back(std::move(e));
    }
  } catch (const Json::exception& e) {
    throw CheckpointError(man_path.string() + ": " + e.what());
  }
  return ck;
}

void save_model(const std::string& dir, const Model& model, DType dtype) {
  save_checkpoint(dir, model.params().names(), model.params().values(), dtype, to_json(model.config()));
}

void assign_parameters(ParamStore& store, const Checkpoint& ckpt) {
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    const auto& name = ckpt.tensors[i].name;
    if (!seen.emplace(name, i).second) throw CheckpointError("tensor '" + name + "' appears twice");
    if (!store.find(name)) throw CheckpointError("checkpoint tensor '" + name + "' has no matching parameter");
  }
  for (const auto& name : store.names()) {
    auto it = seen.find(name);
    if (it == seen.end()) throw CheckpointError("parameter '" + name + "' missing from checkpoint");
    const auto h = *store.find(name);
    if (store.value(h).shape() != ckpt.values[it->second].shape())
      throw CheckpointError("parameter '" + name + "': shape " + shape_string(store.value(h).shape()) +
                            " vs checkpoint " + shape_string(ckpt.values[it->second].shape()));
    store.value(h) = ckpt.values[it->second];
  }
}

Model load_model(const std::string& dir) {
  Checkpoint ck = read_checkpoint(dir);
  if (ck.model_config.is_null()) throw CheckpointError(dir + ": manifest has no model_config");
  Model model(model_config_from_json(ck.model_config));
  assign_parameters(model.params(), ck);
  return model;
}

}  // namespace ssmnd
