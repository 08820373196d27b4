#include "cofi/nn/adam.hpp"

#include <cmath>

namespace cofi::nn {

double LrSchedule::at(int epoch) const {
  if (every_epochs <= 0) return initial;
  return initial * std::pow(factor, epoch / every_epochs);
}

void adam_step(AdamState& state, std::vector<Tensor>& params) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) {
    fail(ErrorKind::kContract, "adam_step: parameter list changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      fail(ErrorKind::kContract, "adam_step: parameter " + std::to_string(i) + " has no grad");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = params[i].grad();
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseAbs2();
    Matrix& w = params[i].mutable_value();
    w.array() -= state.lr * (state.m[i].array() / bc1) /
                 ((state.v[i].array() / bc2).sqrt() + state.eps);
  }
}

}  // namespace cofi::nn
