#include "cofi/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace cofi::nn {

Tensor ParameterSet::add(const std::string& name, Matrix init) {
  if (contains(name)) fail(ErrorKind::kContract, "duplicate parameter name " + name);
  Tensor t(std::move(init), true);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::add_uniform(const std::string& name, Index rows, Index cols, Index fan_in,
                                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return add(name, std::move(m));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  fail(ErrorKind::kContract, "unknown parameter " + name);
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

Index ParameterSet::scalar_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

Linear Linear::create(ParameterSet& params, const std::string& name, Index in, Index out, Rng& rng) {
  Linear l;
  l.weight = params.add_uniform(name + ".weight", in, out, in, rng);
  l.bias = params.add_uniform(name + ".bias", 1, out, in, rng);
  return l;
}

Mlp Mlp::create(ParameterSet& params, const std::string& name, std::vector<Index> widths, Rng& rng) {
  if (widths.size() < 2) fail(ErrorKind::kConfig, "mlp " + name + " needs at least two widths");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    mlp.layers.push_back(
        Linear::create(params, name + "." + std::to_string(i), widths[i], widths[i + 1], rng));
  }
  return mlp;
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

Index Mlp::macs_per_row() const {
  Index n = 0;
  for (const auto& l : layers) n += l.in() * l.out();
  return n;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, Index width) {
  LayerNorm ln;
  ln.gamma = params.add(name + ".gamma", Matrix::Ones(1, width));
  ln.beta = params.add(name + ".beta", Matrix::Zero(1, width));
  return ln;
}

}  // namespace cofi::nn
