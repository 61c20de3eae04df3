#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ftm/core/error.hpp"
#include "ftm/core/tensor.hpp"
#include "ftm/nn/layers.hpp"

// Weight container: "FTMW" magic, u32 version, u32 tensor count, then per
// tensor: u32 name length, name bytes, u32 rank, u32 dims..., f32 data.
// Little-endian throughout.

namespace ftm::models {

inline void save_weights(const std::string& path, nn::Sequential<float>& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RegistryError("cannot open weight file for writing: " + path);
  auto params = net.params();
  f.write("FTMW", 4);
  uint32_t version = 1, count = static_cast<uint32_t>(params.size());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&count), 4);
  for (auto& p : params) {
    uint32_t len = static_cast<uint32_t>(p.name.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(p.name.data(), len);
    uint32_t rank = static_cast<uint32_t>(p.value->rank());
    f.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d = 0; d < p.value->rank(); ++d) {
      uint32_t dim = static_cast<uint32_t>(p.value->dim(d));
      f.write(reinterpret_cast<const char*>(&dim), 4);
    }
    f.write(reinterpret_cast<const char*>(p.value->data()), sizeof(float) * static_cast<size_t>(p.value->numel()));
  }
  if (!f) throw RegistryError("short write on weight file: " + path);
}

// Loads float weights into a net of any scalar type (casting elementwise).
template <class T>
void load_weights(const std::string& path, nn::Sequential<T>& net) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw RegistryError("cannot open weight file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "FTMW", 4) != 0) throw RegistryError("bad weight file magic: " + path);
  uint32_t version = 0, count = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&count), 4);
  if (version != 1) throw RegistryError("unsupported weight file version in " + path);

  auto params = net.params();
  auto find = [&](const std::string& name) -> nn::ParamRef<T>* {
    for (auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  };

  size_t matched = 0;
  for (uint32_t t = 0; t < count; ++t) {
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    f.read(name.data(), len);
    uint32_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 4);
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t dim = 0;
      f.read(reinterpret_cast<char*>(&dim), 4);
      shape[d] = static_cast<int>(dim);
      numel *= dim;
    }
    std::vector<float> buf(static_cast<size_t>(numel));
    f.read(reinterpret_cast<char*>(buf.data()), sizeof(float) * static_cast<size_t>(numel));
    if (!f) throw RegistryError("truncated weight file: " + path);
    nn::ParamRef<T>* p = find(name);
    if (p == nullptr) throw RegistryError("weight file tensor '" + name + "' has no slot in model (" + path + ")");
    if (p->value->shape() != shape)
      throw RegistryError("weight shape mismatch for '" + name + "' in " + path + ": file " +
                          Tensor<float>(shape).shape_str() + " vs model " + p->value->shape_str());
    for (int64_t i = 0; i < numel; ++i) (*p->value)[i] = static_cast<T>(buf[static_cast<size_t>(i)]);
    ++matched;
  }
  if (matched != params.size())
    throw RegistryError("weight file " + path + " is missing tensors: has " + std::to_string(matched) + ", model needs " +
                        std::to_string(params.size()));
}

}  // namespace ftm::models
