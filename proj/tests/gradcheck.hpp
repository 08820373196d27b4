#pragma once

// Central finite-difference oracle for the autodiff tape. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cofi/nn/tensor.hpp"

namespace cofi::testing {

inline nn::Matrix random_matrix(nn::Index rows, nn::Index cols, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  nn::Matrix m(rows, cols);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Largest norm-wise relative error between the tape gradient and central
// differences, over every input that requires grad.
inline double gradcheck_at(const std::function<nn::Tensor(const std::vector<nn::Tensor>&)>& fn,
                        std::vector<nn::Tensor> inputs, double step = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  nn::Tensor loss = fn(inputs);
  nn::backward(loss);

  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    nn::Matrix numeric(t.rows(), t.cols());
    nn::Matrix& w = t.mutable_value();
    for (nn::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + step;
      const double up = fn(inputs).item();
      w.data()[i] = saved - step;
      const double down = fn(inputs).item();
      w.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    const double diff = (numeric - t.grad()).norm();
    const double scale = std::max({numeric.norm(), t.grad().norm(), 1e-8});
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

// gradcheck_at with a fallback to a ten times smaller step, for ReLU and max
// kinks that happen to fall inside the first stencil.
inline double gradcheck(const std::function<nn::Tensor(const std::vector<nn::Tensor>&)>& fn,
                        std::vector<nn::Tensor> inputs, double step = 1e-5) {
  const double first = gradcheck_at(fn, inputs, step);
  if (first < 1e-4) return first;
  return std::min(first, gradcheck_at(fn, inputs, step / 10));
}

}  // namespace cofi::testing
