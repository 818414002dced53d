#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qna/nn/tensor.hpp"

namespace qna::nn {

struct NamedParam {
  std::string name;
  Tensor* tensor;
};
using ParamList = std::vector<NamedParam>;

/// Glorot/Xavier uniform initialization.
Tensor xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Tensor normal_param(Eigen::Index rows, Eigen::Index cols, float stddev, Rng& rng);

/// Additive mask forbidding attention to future positions.
Matrix causal_mask(Eigen::Index n);

class Linear {
 public:
  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix);

  Tensor weight;
  Tensor bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index dim, float eps = 1e-6f);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix);

  Tensor gamma;
  Tensor beta;
  float eps = 1e-6f;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(Eigen::Index dim, int heads, Rng& rng);
  /// `mask` is additive (rows = queries, cols = keys) or empty for none.
  Tensor operator()(const Tensor& query, const Tensor& memory, const Matrix* mask,
                    float dropout_p, Rng& rng, bool training) const;
  void collect(ParamList& out, const std::string& prefix);

  int heads = 1;
  Linear q, k, v, o;
};

enum class Activation { Relu, Gelu };

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(Eigen::Index dim, Eigen::Index hidden, Activation act, Rng& rng);
  Tensor operator()(const Tensor& x, float dropout_p, Rng& rng, bool training) const;
  void collect(ParamList& out, const std::string& prefix);

  Activation activation = Activation::Relu;
  Linear in, out;
};

/// Transformer encoder layer. Post-norm (BERT style) or pre-norm (the
/// OpenNMT transformer default).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(Eigen::Index dim, int heads, Eigen::Index ff, Activation act, bool pre_norm,
               Rng& rng);
  Tensor operator()(const Tensor& x, const Matrix* mask, float dropout_p, Rng& rng,
                    bool training) const;
  void collect(ParamList& out, const std::string& prefix);

  bool pre_norm = false;
  MultiHeadAttention attn;
  FeedForward ff;
  LayerNorm norm1, norm2;
};

/// Pre-norm transformer decoder layer with causal self-attention and
/// cross-attention over the encoder memory.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(Eigen::Index dim, int heads, Eigen::Index ff, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory, const Matrix* self_mask,
                    float dropout_p, Rng& rng, bool training) const;
  void collect(ParamList& out, const std::string& prefix);

  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;
  LayerNorm norm1, norm2, norm3;
};

/// Sinusoidal position encodings, rows = positions.
Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim);

}  // namespace qna::nn
