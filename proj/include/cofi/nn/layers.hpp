#pragma once

#include <random>
#include <string>
#include <vector>

#include "cofi/nn/tensor.hpp"

namespace cofi::nn {

using Rng = std::mt19937_64;

// Named, ordered collection of trainable leaves. Tensor handles share storage,
// so copies returned from here alias the stored parameters.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Matrix init);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Tensor add_uniform(const std::string& name, Index rows, Index cols, Index fan_in, Rng& rng);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;
  std::vector<Tensor> tensors() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Index scalar_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]

  static Linear create(ParameterSet& params, const std::string& name, Index in, Index out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }
  Index in() const { return weight.rows(); }
  Index out() const { return weight.cols(); }
};

// Linear layers with ReLU between them; the last layer is linear.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParameterSet& params, const std::string& name, std::vector<Index> widths,
                    Rng& rng);
  Tensor operator()(const Tensor& x) const;
  Index macs_per_row() const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParameterSet& params, const std::string& name, Index width);
  Tensor operator()(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }
};

}  // namespace cofi::nn
