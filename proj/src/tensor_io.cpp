#include "cofi/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace cofi {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'O', 'F', 'I', 'T', 'N', 'S', '\0'};
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 32;

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get(const std::string& what) {
    unsigned char b[sizeof(T)];
    read(b, sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(b[i]) << (8 * i);
    return v;
  }
  double get_f64(const std::string& what) { return std::bit_cast<double>(get<std::uint64_t>(what)); }
  void read(void* dst, std::size_t n, const std::string& what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      fail(ErrorKind::kCorruptFile, "truncated while reading " + what + " at byte " +
                                        std::to_string(offset_ + std::size_t(in_.gcount())));
    }
    offset_ += n;
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kTensorFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) put_f64(out, t.value.data()[i]);
  }
  if (!out) fail(ErrorKind::kIo, "failed writing tensor container");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size(), "header");
  if (magic != kMagic) fail(ErrorKind::kCorruptFile, "not a tensor container (bad magic)");
  const auto version = r.get<std::uint32_t>("header");
  if (version != kTensorFileVersion) {
    fail(ErrorKind::kCorruptFile, "unsupported tensor container version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("header");
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string label = "tensor #" + std::to_string(k);
    const auto len = r.get<std::uint32_t>(label + " name");
    if (len > 4096) fail(ErrorKind::kCorruptFile, label + " has an implausible name length");
    std::string name(len, '\0');
    r.read(name.data(), len, label + " name");
    const std::string what = "tensor '" + name + "'";
    const auto rank = r.get<std::uint32_t>(what);
    if (rank != 2) fail(ErrorKind::kCorruptFile, what + " has rank " + std::to_string(rank));
    const auto rows = r.get<std::uint64_t>(what);
    const auto cols = r.get<std::uint64_t>(what);
    if (rows * cols > kMaxElements || (cols != 0 && rows > kMaxElements / cols)) {
      fail(ErrorKind::kCorruptFile, what + " has an implausible shape");
    }
    nn::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get_f64(what);
    out.push_back({std::move(name), std::move(m)});
  }
  return out;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  write_tensors(out, tensors);
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  return read_tensors(in);
}

void save_parameters(const std::filesystem::path& path, const nn::ParameterSet& params) {
  std::vector<NamedTensor> t;
  for (const auto& [name, tensor] : params.entries()) t.push_back({name, tensor.value()});
  write_tensor_file(path, t);
}

void load_parameters(const std::filesystem::path& path, nn::ParameterSet& params) {
  std::map<std::string, nn::Matrix> stored;
  for (auto& t : read_tensor_file(path)) {
    if (!stored.emplace(t.name, std::move(t.value)).second) {
      fail(ErrorKind::kCorruptFile, "checkpoint repeats tensor '" + t.name + "'");
    }
  }
  for (const auto& [name, tensor] : params.entries()) {
    const auto it = stored.find(name);
    if (it == stored.end()) fail(ErrorKind::kCorruptFile, "checkpoint is missing tensor '" + name + "'");
    if (it->second.rows() != tensor.rows() || it->second.cols() != tensor.cols()) {
      fail(ErrorKind::kCorruptFile, "tensor '" + name + "' has shape [" +
                                        std::to_string(it->second.rows()) + "x" +
                                        std::to_string(it->second.cols()) + "], expected " +
                                        shape_string(tensor));
    }
  }
  for (const auto& [name, m] : stored) {
    if (!params.contains(name)) fail(ErrorKind::kCorruptFile, "checkpoint has unknown tensor '" + name + "'");
  }
  for (const auto& [name, tensor] : params.entries()) {
    nn::Tensor t = tensor;
    t.mutable_value() = stored.at(name);
  }
}

}  // namespace cofi
