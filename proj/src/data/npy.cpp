#include "ftm/data/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ftm/core/error.hpp"

namespace ftm::data {

void save_npy(const std::string& path, const TensorF& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot write npy file: " + path);
  std::ostringstream hdr;
  hdr << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (int i = 0; i < t.rank(); ++i) hdr << t.dim(i) << (t.rank() == 1 || i + 1 < t.rank() ? "," : "");
  hdr << "), }";
  std::string h = hdr.str();
  size_t total = 10 + h.size() + 1;
  size_t pad = (64 - total % 64) % 64;
  h.append(pad, ' ');
  h.push_back('\n');
  uint16_t hlen = static_cast<uint16_t>(h.size());
  f.write("\x93NUMPY\x01\x00", 8);
  f.write(reinterpret_cast<const char*>(&hlen), 2);
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  f.write(reinterpret_cast<const char*>(t.data()), sizeof(float) * static_cast<size_t>(t.numel()));
  if (!f) throw EvalError("short write on npy file: " + path);
}

TensorF load_npy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw EvalError("cannot open npy file: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw EvalError("not an npy file: " + path);
  uint16_t hlen = 0;
  if (magic[6] == 1) {
    f.read(reinterpret_cast<char*>(&hlen), 2);
  } else {
    uint32_t hl32 = 0;
    f.read(reinterpret_cast<char*>(&hl32), 4);
    hlen = static_cast<uint16_t>(hl32);
  }
  std::string h(hlen, '\0');
  f.read(h.data(), hlen);
  if (h.find("'<f4'") == std::string::npos && h.find("\"<f4\"") == std::string::npos)
    throw EvalError("npy file " + path + ": only float32 ('<f4') is supported");
  if (h.find("'fortran_order': True") != std::string::npos)
    throw EvalError("npy file " + path + ": fortran order is not supported");
  size_t lp = h.find('(');
  size_t rp = h.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos) throw EvalError("npy file " + path + ": bad header");
  std::vector<int> shape;
  std::string inner = h.substr(lp + 1, rp - lp - 1);
  std::stringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    size_t a = tok.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    shape.push_back(std::stoi(tok.substr(a)));
  }
  if (shape.empty()) throw EvalError("npy file " + path + ": scalar arrays are not supported");
  TensorF t(shape);
  f.read(reinterpret_cast<char*>(t.data()), sizeof(float) * static_cast<size_t>(t.numel()));
  if (!f) throw EvalError("npy file " + path + ": truncated data");
  return t;
}

}  // namespace ftm::data
