#include "fscplan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fscplan/errors.hpp"

namespace fscplan {
namespace {

constexpr char kMagic[8] = {'F', 'S', 'C', 'T', 'N', 'S', 'R', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  std::uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in) {
  std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

const Eigen::MatrixXf& NamedTensorFile::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw Error("checkpoint is missing tensor '" + name + "'");
}

std::uint32_t NamedTensorFile::header_at(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end())
    throw Error("checkpoint is missing header field '" + key + "'");
  return it->second;
}

void save_named_tensors(const NamedTensorFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(kMagic, 8);
  write_str(out, file.kind);
  write_u32(out, static_cast<std::uint32_t>(file.header.size()));
  for (const auto& [k, v] : file.header) {
    write_str(out, k);
    write_u32(out, v);
  }
  write_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    write_str(out, name);
    write_u32(out, static_cast<std::uint32_t>(t.rows()));
    write_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) write_f32(out, t(i, j));
  }
  if (!out) throw Error("short write to '" + path + "'");
}

NamedTensorFile load_named_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw Error("'" + path + "' is not a checkpoint file");
  NamedTensorFile file;
  file.kind = read_str(in);
  std::uint32_t nheader = read_u32(in);
  for (std::uint32_t i = 0; i < nheader; ++i) {
    std::string key = read_str(in);
    file.header[key] = read_u32(in);
  }
  std::uint32_t ntensors = read_u32(in);
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    std::string name = read_str(in);
    std::uint32_t rows = read_u32(in);
    std::uint32_t cols = read_u32(in);
    Eigen::MatrixXf t(rows, cols);
    for (std::uint32_t j = 0; j < cols; ++j)
      for (std::uint32_t r = 0; r < rows; ++r) t(r, j) = read_f32(in);
    file.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!in) throw Error("truncated checkpoint '" + path + "'");
  return file;
}

}  // namespace fscplan
