#pragma once

#include <utility>
#include <vector>

#include "cofi/backbone.hpp"

namespace cofi {

struct TransformerConfig {
  Index channels = 64;     // C
  Index qk_channels = 64;  // C_qk; logits are scaled by 1/sqrt(C_qk)
  Index ffn_hidden = 128;
  Index pos_hidden = 32;
  int blocks = 2;
  bool self_attention = true;
  bool cross_attention = true;
  // Cross-attention values from the querying modality instead of the keyed
  // one. Only well-formed when both maps have the same number of rows.
  bool values_from_query_side = false;
};

// One pre-norm attention layer: h = x + attend(norm1(x), norm1(ctx)) wo, then
// h + ffn(norm2(h)). wo and the last FFN layer start at zero, so a fresh layer
// is the identity.
struct AttentionParams {
  nn::Tensor wq, wk;  // [C x C_qk]
  nn::Tensor wv, wo;  // [C x C]
  nn::LayerNorm norm1, norm2;
  nn::Mlp ffn;

  static AttentionParams create(nn::ParameterSet& params, const std::string& name,
                                const TransformerConfig& cfg, nn::Rng& rng);
};

struct TransformerBlock {
  AttentionParams self_points, self_pixels, cross_points, cross_pixels;
};

struct TransformerParams {
  nn::Mlp pos_points;  // 3-D coords -> C
  nn::Mlp pos_pixels;  // 2-D coords -> C
  std::vector<TransformerBlock> blocks;

  static TransformerParams create(nn::ParameterSet& params, const TransformerConfig& cfg,
                                  nn::Rng& rng);
  Index macs(Index n_points, Index n_pixels, const TransformerConfig& cfg) const;
};

// Min-max scaling of each column to [-1, 1]; constant columns map to 0.
nn::Matrix normalize_coords(const nn::Matrix& coords);
// Fixed per-column range [lo, hi] mapped to [-1, 1], clamped outside it.
nn::Matrix normalize_coords(const nn::Matrix& coords, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

// features + mlp(normalize_coords(coords)).
FeatureMap positional_encode(const FeatureMap& fmap, const nn::Matrix& coords, const nn::Mlp& mlp);
// features + mlp(coords), coordinates already normalized.
FeatureMap positional_encode_normalized(const FeatureMap& fmap, const nn::Matrix& coords, const nn::Mlp& mlp);

// softmax(q k^T / sqrt(q.cols())) row-wise.
nn::Tensor attention_weights(const nn::Tensor& q, const nn::Tensor& k);
// attention_weights(q, k) * v.
nn::Tensor scaled_attention(const nn::Tensor& q, const nn::Tensor& k, const nn::Tensor& v);

// Attention output before the residual/FFN tail: queries from `query`,
// keys from `key`, values from `value`.
nn::Tensor attend(const nn::Tensor& query, const nn::Tensor& key, const nn::Tensor& value,
                  const AttentionParams& p);
// h + ffn(norm2(h)) with h = x + update wo.
nn::Tensor attention_tail(const nn::Tensor& x, const nn::Tensor& update, const AttentionParams& p);

FeatureMap self_attention(const FeatureMap& fmap, const AttentionParams& p);

std::pair<FeatureMap, FeatureMap> cross_attention(const FeatureMap& points,
                                                  const FeatureMap& pixels,
                                                  const AttentionParams& to_points,
                                                  const AttentionParams& to_pixels,
                                                  bool values_from_query_side = false);

// Each block: self-attention on both maps, then cross-attention.
std::pair<FeatureMap, FeatureMap> run_stack(const FeatureMap& points, const FeatureMap& pixels,
                                            const TransformerParams& params,
                                            const TransformerConfig& cfg);

}  // namespace cofi
