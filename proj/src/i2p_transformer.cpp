#include "cofi/i2p_transformer.hpp"

#include <cmath>

namespace cofi {

using nn::Matrix;
using nn::Tensor;

AttentionParams AttentionParams::create(nn::ParameterSet& params, const std::string& name,
                                        const TransformerConfig& cfg, nn::Rng& rng) {
  const Index c = cfg.channels;
  AttentionParams p;
  p.wq = params.add_uniform(name + ".wq", c, cfg.qk_channels, c, rng);
  p.wk = params.add_uniform(name + ".wk", c, cfg.qk_channels, c, rng);
  p.wv = params.add_uniform(name + ".wv", c, c, c, rng);
  p.wo = params.add_uniform(name + ".wo", c, c, c, rng);
  p.wo.mutable_value().setZero();
  p.norm1 = nn::LayerNorm::create(params, name + ".norm1", c);
  p.ffn = nn::Mlp::create(params, name + ".ffn", {c, cfg.ffn_hidden, c}, rng);
  p.ffn.layers.back().weight.mutable_value().setZero();
  p.ffn.layers.back().bias.mutable_value().setZero();
  p.norm2 = nn::LayerNorm::create(params, name + ".norm2", c);
  return p;
}

TransformerParams TransformerParams::create(nn::ParameterSet& params, const TransformerConfig& cfg,
                                            nn::Rng& rng) {
  if (cfg.blocks < 1) fail(ErrorKind::kConfig, "transformer needs at least one block");
  if (cfg.channels < 1 || cfg.qk_channels < 1) fail(ErrorKind::kConfig, "channel counts must be >= 1");
  TransformerParams t;
  t.pos_points = nn::Mlp::create(params, "transformer.pos_points", {3, cfg.pos_hidden, cfg.channels}, rng);
  t.pos_pixels = nn::Mlp::create(params, "transformer.pos_pixels", {2, cfg.pos_hidden, cfg.channels}, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string n = "transformer.block" + std::to_string(b);
    t.blocks.push_back({AttentionParams::create(params, n + ".self_points", cfg, rng),
                        AttentionParams::create(params, n + ".self_pixels", cfg, rng),
                        AttentionParams::create(params, n + ".cross_points", cfg, rng),
                        AttentionParams::create(params, n + ".cross_pixels", cfg, rng)});
  }
  return t;
}

Index TransformerParams::macs(Index np, Index ni, const TransformerConfig& cfg) const {
  const Index c = cfg.channels, qk = cfg.qk_channels;
  const Index ffn = 2 * c * cfg.ffn_hidden;
  auto layer = [&](Index nq, Index nk) {
    return nq * c * (qk + c) + nk * c * (qk + c) + nq * nk * (qk + c) + nq * ffn;
  };
  Index per_block = 0;
  if (cfg.self_attention) per_block += layer(np, np) + layer(ni, ni);
  if (cfg.cross_attention) per_block += layer(np, ni) + layer(ni, np);
  return np * pos_points.macs_per_row() + ni * pos_pixels.macs_per_row() +
         per_block * static_cast<Index>(blocks.size());
}

Matrix normalize_coords(const Matrix& coords) {
  Matrix out(coords.rows(), coords.cols());
  for (Index j = 0; j < coords.cols(); ++j) {
    const double lo = coords.col(j).minCoeff();
    const double hi = coords.col(j).maxCoeff();
    if (hi - lo <= 0) {
      out.col(j).setZero();
    } else {
      out.col(j) = (coords.col(j).array() - lo) * (2.0 / (hi - lo)) - 1.0;
    }
  }
  return out;
}

Matrix normalize_coords(const Matrix& coords, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != coords.cols() || hi.size() != coords.cols()) {
    fail(ErrorKind::kDimension, "coordinate bounds do not match " + std::to_string(coords.cols()) + " columns");
  }
  Matrix out(coords.rows(), coords.cols());
  for (Index j = 0; j < coords.cols(); ++j) {
    if (!(hi(j) > lo(j))) fail(ErrorKind::kConfig, "empty coordinate range on axis " + std::to_string(j));
    out.col(j) = ((coords.col(j).array() - lo(j)) * (2.0 / (hi(j) - lo(j))) - 1.0).max(-1.0).min(1.0);
  }
  return out;
}

FeatureMap positional_encode_normalized(const FeatureMap& fmap, const Matrix& coords, const nn::Mlp& mlp) {
  if (coords.rows() != fmap.size()) {
    fail(ErrorKind::kDimension, "positional encoding got " + std::to_string(coords.rows()) +
                                    " coordinates for " + std::to_string(fmap.size()) + " ids");
  }
  FeatureMap out = fmap;
  out.features = nn::add(fmap.features, mlp(Tensor(coords)));
  return out;
}

FeatureMap positional_encode(const FeatureMap& fmap, const Matrix& coords, const nn::Mlp& mlp) {
  return positional_encode_normalized(fmap, normalize_coords(coords), mlp);
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
  return nn::softmax_rows(nn::scale(nn::matmul_nt(q, k), 1.0 / std::sqrt(double(q.cols()))));
}

Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (k.rows() != v.rows()) {
    fail(ErrorKind::kDimension, "attention weights cover " + std::to_string(k.rows()) +
                                    " keys but values have " + std::to_string(v.rows()) + " rows");
  }
  return nn::matmul(attention_weights(q, k), v);
}

Tensor attend(const Tensor& query, const Tensor& key, const Tensor& value,
              const AttentionParams& p) {
  return scaled_attention(nn::matmul(query, p.wq), nn::matmul(key, p.wk), nn::matmul(value, p.wv));
}

Tensor attention_tail(const Tensor& x, const Tensor& update, const AttentionParams& p) {
  const Tensor h = nn::add(x, nn::matmul(update, p.wo));
  return nn::add(h, p.ffn(p.norm2(h)));
}

FeatureMap self_attention(const FeatureMap& fmap, const AttentionParams& p) {
  if (fmap.size() < 1) fail(ErrorKind::kContract, "self-attention over an empty map");
  FeatureMap out = fmap;
  const Tensor x = p.norm1(fmap.features);
  out.features = attention_tail(fmap.features, attend(x, x, x, p), p);
  return out;
}

std::pair<FeatureMap, FeatureMap> cross_attention(const FeatureMap& points,
                                                  const FeatureMap& pixels,
                                                  const AttentionParams& to_points,
                                                  const AttentionParams& to_pixels,
                                                  bool values_from_query_side) {
  const Tensor qp = to_points.norm1(points.features), kp = to_points.norm1(pixels.features);
  const Tensor qi = to_pixels.norm1(pixels.features), ki = to_pixels.norm1(points.features);
  FeatureMap p = points, i = pixels;
  p.features = attention_tail(points.features, attend(qp, kp, values_from_query_side ? qp : kp, to_points),
                              to_points);
  i.features = attention_tail(pixels.features, attend(qi, ki, values_from_query_side ? qi : ki, to_pixels),
                              to_pixels);
  return {std::move(p), std::move(i)};
}

std::pair<FeatureMap, FeatureMap> run_stack(const FeatureMap& points, const FeatureMap& pixels,
                                            const TransformerParams& params,
                                            const TransformerConfig& cfg) {
  if (params.blocks.empty()) fail(ErrorKind::kConfig, "transformer has no blocks");
  FeatureMap p = points, i = pixels;
  for (const auto& b : params.blocks) {
    if (cfg.self_attention) {
      p = self_attention(p, b.self_points);
      i = self_attention(i, b.self_pixels);
    }
    if (cfg.cross_attention) {
      std::tie(p, i) = cross_attention(p, i, b.cross_points, b.cross_pixels,
                                       cfg.values_from_query_side);
    }
  }
  return {std::move(p), std::move(i)};
}

}  // namespace cofi
