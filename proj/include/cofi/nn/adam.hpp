#pragma once

#include <vector>

#include "cofi/nn/tensor.hpp"

namespace cofi::nn {

// Step decay: lr(epoch) = initial * factor^(epoch / every_epochs), epochs 0-based.
struct LrSchedule {
  double initial = 1e-3;
  double factor = 0.25;
  int every_epochs = 5;

  double at(int epoch) const;
};

struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// Bias-corrected Adam update of every tensor in params. Accumulators are
// created lazily on the first step; the params list must keep its order.
void adam_step(AdamState& state, std::vector<Tensor>& params);

}  // namespace cofi::nn
