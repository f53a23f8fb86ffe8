#include "isoface/tensor.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace isoface {
namespace {

constexpr char kMagic[4] = {'I', 'S', 'O', 'F'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("truncated tensor stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("truncated tensor stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

// dtype codes
constexpr std::uint32_t kF32 = 1;
constexpr std::uint32_t kF64 = 2;

template <typename T>
void save_impl(std::ostream& os, const TensorT<T>& t, std::uint32_t dtype) {
  os.write(kMagic, 4);
  write_u32(os, kTensorFormatVersion);
  write_u32(os, dtype);
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) write_u64(os, d);
  // assumes little-endian host, as does every x86/arm target we build on
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!os) throw std::runtime_error("tensor write failed");
}

template <typename Stored, typename T>
TensorT<T> read_payload(std::istream& is, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<Stored> raw(n);
  is.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(n * sizeof(Stored)));
  if (!is) throw std::runtime_error("truncated tensor payload");
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(raw[i]);
  return TensorT<T>::from_data(std::move(shape), std::move(out));
}

}  // namespace

void save_tensor(std::ostream& os, const TensorT<float>& t) {
  save_impl(os, t, kF32);
}
void save_tensor(std::ostream& os, const TensorT<double>& t) {
  save_impl(os, t, kF64);
}

template <typename T>
TensorT<T> load_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad tensor magic");
  std::uint32_t version = read_u32(is);
  if (version != kTensorFormatVersion)
    throw std::runtime_error("unsupported tensor format version " +
                             std::to_string(version));
  std::uint32_t dtype = read_u32(is);
  std::uint32_t rank = read_u32(is);
  if (rank > 8) throw std::runtime_error("implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(read_u64(is));
  switch (dtype) {
    case kF32:
      return read_payload<float, T>(is, std::move(shape));
    case kF64:
      return read_payload<double, T>(is, std::move(shape));
    default:
      throw std::runtime_error("unknown tensor dtype code " +
                               std::to_string(dtype));
  }
}

template TensorT<float> load_tensor<float>(std::istream& is);
template TensorT<double> load_tensor<double>(std::istream& is);

void save_tensor_file(const std::string& path, const TensorT<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_tensor(os, t);
}
void save_tensor_file(const std::string& path, const TensorT<double>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_tensor(os, t);
}

template <typename T>
TensorT<T> load_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return load_tensor<T>(is);
}

template TensorT<float> load_tensor_file<float>(const std::string&);
template TensorT<double> load_tensor_file<double>(const std::string&);

}  // namespace isoface
