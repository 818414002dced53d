#include "qna/nn/layers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qna::nn {

Tensor xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(rows + cols));
  std::uniform_real_distribution<float> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor(std::move(m), true);
}

Tensor normal_param(Eigen::Index rows, Eigen::Index cols, float stddev, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return Tensor(std::move(m), true);
}

Matrix causal_mask(Eigen::Index n) {
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = -1e9f;
  return m;
}

Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < dim; i += 2) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / dim);
      pe(pos, i) = static_cast<float>(std::sin(pos * freq));
      if (i + 1 < dim) pe(pos, i + 1) = static_cast<float>(std::cos(pos * freq));
    }
  }
  return pe;
}

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias)
    : weight(xavier(in, out, rng)) {
  if (with_bias) bias = Tensor::zeros(1, out, true);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

void Linear::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  if (bias.defined()) out.push_back({prefix + ".bias", &bias});
}

LayerNorm::LayerNorm(Eigen::Index dim, float eps_)
    : gamma(Matrix::Ones(1, dim), true), beta(Matrix::Zero(1, dim), true), eps(eps_) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", &gamma});
  out.push_back({prefix + ".beta", &beta});
}

MultiHeadAttention::MultiHeadAttention(Eigen::Index dim, int heads_, Rng& rng)
    : heads(heads_), q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), o(dim, dim, rng) {
  if (heads <= 0 || dim % heads != 0)
    throw std::invalid_argument("attention dim must be divisible by heads");
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory,
                                      const Matrix* mask, float dropout_p, Rng& rng,
                                      bool training) const {
  const Tensor qs = q(query);
  const Tensor ks = k(memory);
  const Tensor vs = v(memory);
  const Eigen::Index dh = qs.cols() / heads;
  const float inv = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(qs, h * dh, dh);
    Tensor kh = slice_cols(ks, h * dh, dh);
    Tensor vh = slice_cols(vs, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), inv);
    if (mask) scores = add_constant(scores, *mask);
    Tensor probs = dropout(softmax_rows(scores), dropout_p, rng, training);
    outs.push_back(matmul(probs, vh));
  }
  return o(heads == 1 ? outs.front() : concat_cols(outs));
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) {
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  o.collect(out, prefix + ".o");
}

FeedForward::FeedForward(Eigen::Index dim, Eigen::Index hidden, Activation act, Rng& rng)
    : activation(act), in(dim, hidden, rng), out(hidden, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x, float dropout_p, Rng& rng, bool training) const {
  Tensor h = in(x);
  h = activation == Activation::Gelu ? gelu(h) : relu(h);
  return out(dropout(h, dropout_p, rng, training));
}

void FeedForward::collect(ParamList& list, const std::string& prefix) {
  in.collect(list, prefix + ".in");
  out.collect(list, prefix + ".out");
}

EncoderLayer::EncoderLayer(Eigen::Index dim, int heads, Eigen::Index ff_dim, Activation act,
                           bool pre_norm_, Rng& rng)
    : pre_norm(pre_norm_),
      attn(dim, heads, rng),
      ff(dim, ff_dim, act, rng),
      norm1(dim, pre_norm_ ? 1e-6f : 1e-12f),
      norm2(dim, pre_norm_ ? 1e-6f : 1e-12f) {}

Tensor EncoderLayer::operator()(const Tensor& x, const Matrix* mask, float p, Rng& rng,
                                bool training) const {
  if (pre_norm) {
    Tensor h = norm1(x);
    Tensor y = add(x, dropout(attn(h, h, mask, p, rng, training), p, rng, training));
    return add(y, dropout(ff(norm2(y), p, rng, training), p, rng, training));
  }
  Tensor y = norm1(add(x, dropout(attn(x, x, mask, p, rng, training), p, rng, training)));
  return norm2(add(y, dropout(ff(y, p, rng, training), p, rng, training)));
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix) {
  attn.collect(out, prefix + ".attn");
  ff.collect(out, prefix + ".ff");
  norm1.collect(out, prefix + ".norm1");
  norm2.collect(out, prefix + ".norm2");
}

DecoderLayer::DecoderLayer(Eigen::Index dim, int heads, Eigen::Index ff_dim, Rng& rng)
    : self_attn(dim, heads, rng),
      cross_attn(dim, heads, rng),
      ff(dim, ff_dim, Activation::Relu, rng),
      norm1(dim),
      norm2(dim),
      norm3(dim) {}

Tensor DecoderLayer::operator()(const Tensor& x, const Tensor& memory, const Matrix* self_mask,
                                float p, Rng& rng, bool training) const {
  Tensor h = norm1(x);
  Tensor y = add(x, dropout(self_attn(h, h, self_mask, p, rng, training), p, rng, training));
  Tensor h2 = norm2(y);
  Tensor z = add(y, dropout(cross_attn(h2, memory, nullptr, p, rng, training), p, rng, training));
  return add(z, dropout(ff(norm3(z), p, rng, training), p, rng, training));
}

void DecoderLayer::collect(ParamList& out, const std::string& prefix) {
  self_attn.collect(out, prefix + ".self_attn");
  cross_attn.collect(out, prefix + ".cross_attn");
  ff.collect(out, prefix + ".ff");
  norm1.collect(out, prefix + ".norm1");
  norm2.collect(out, prefix + ".norm2");
  norm3.collect(out, prefix + ".norm3");
}

}  // namespace qna::nn
