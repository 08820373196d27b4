#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cofi/nn/layers.hpp"

namespace cofi {

// Binary container of named 2-D tensors:
//   magic "COFITNS\0", u32 version, u32 count,
//   per tensor: u32 name length, name, u32 rank (2), u64 rows, u64 cols,
//   rows*cols f64 values, row-major.
// All integers and reals little-endian.
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  nn::Matrix value;
};

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);
void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const nn::ParameterSet& params);
// Copies every stored tensor into the parameter of the same name. Missing,
// extra or mis-shaped tensors are corrupt-file errors naming the tensor.
void load_parameters(const std::filesystem::path& path, nn::ParameterSet& params);

}  // namespace cofi
