#include "qna/nn/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace qna::nn {

namespace {

thread_local bool g_grad_enabled = true;

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

void Tensor::backward(float seed) {
  check(node_ && node_->value.size() == 1, "backward() needs a 1x1 tensor");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Constant(1, 1, seed));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Release intermediate graph state; leaves keep their gradients.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad.resize(0, 0);
    }
  }
}

Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  Tensor out(std::move(value), false);
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  for (auto& t : inputs) n.parents.push_back(t.node());
  n.backward_fn = std::move(backward);
  return out;
}

namespace {

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.rows(), "matmul shape mismatch");
  Matrix v = a.value() * b.value();
  return make_result(std::move(v), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.cols(), "matmul_nt shape mismatch");
  Matrix v = a.value() * b.value().transpose();
  return make_result(std::move(v), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value);
    if (pb.requires_grad) pb.accumulate(n.grad.transpose() * pa.value);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  Matrix v = a.value() + b.value();
  return make_result(std::move(v), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(v), {a, row}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pr = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad);
    if (pr.requires_grad) pr.accumulate(n.grad.colwise().sum());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  Matrix v = a.value().cwiseProduct(b.value());
  return make_result(std::move(v), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
  });
}

Tensor scale(const Tensor& a, float s) {
  Matrix v = a.value() * s;
  return make_result(std::move(v), {a}, [s](Node& n) { parent(n, 0).accumulate(n.grad * s); });
}

Tensor add_constant(const Tensor& a, const Matrix& c) {
  check(a.rows() == c.rows() && a.cols() == c.cols(), "add_constant shape mismatch");
  Matrix v = a.value() + c;
  return make_result(std::move(v), {a}, [](Node& n) { parent(n, 0).accumulate(n.grad); });
}

Tensor mul_col(const Tensor& a, const Tensor& c) {
  check(c.cols() == 1 && c.rows() == a.rows(), "mul_col shape mismatch");
  Matrix v = c.value().col(0).asDiagonal() * a.value();
  return make_result(std::move(v), {a, c}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pc = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(pc.value.col(0).asDiagonal() * n.grad);
    if (pc.requires_grad)
      pc.accumulate(n.grad.cwiseProduct(pa.value).rowwise().sum());
  });
}

Tensor one_minus(const Tensor& a) {
  Matrix v = (1.0f - a.value().array()).matrix();
  return make_result(std::move(v), {a}, [](Node& n) { parent(n, 0).accumulate(-n.grad); });
}

Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0f);
  return make_result(std::move(v), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    p.accumulate((p.value.array() > 0.0f).cast<float>().matrix().cwiseProduct(n.grad));
  });
}

Tensor gelu(const Tensor& a) {
  // tanh approximation
  static constexpr float k = 0.7978845608f;  // sqrt(2/pi)
  const auto& x = a.value();
  Matrix inner = (k * (x.array() + 0.044715f * x.array().cube())).matrix();
  Matrix t = inner.array().tanh().matrix();
  Matrix v = (0.5f * x.array() * (1.0f + t.array())).matrix();
  return make_result(std::move(v), {a}, [t = std::move(t)](Node& n) {
    Node& p = parent(n, 0);
    const auto& x = p.value.array();
    const auto dinner = k * (1.0f + 3.0f * 0.044715f * x.square());
    const auto d = 0.5f * (1.0f + t.array()) + 0.5f * x * (1.0f - t.array().square()) * dinner;
    p.accumulate((d * n.grad.array()).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix v = (1.0f / (1.0f + (-a.value().array()).exp())).matrix();
  return make_result(std::move(v), {a}, [](Node& n) {
    const auto& s = n.value.array();
    parent(n, 0).accumulate((n.grad.array() * s * (1.0f - s)).matrix());
  });
}

Tensor softmax_rows(const Tensor& a) {
  Matrix v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const float m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  return make_result(std::move(v), {a}, [](Node& n) {
    const Matrix& y = n.value;
    Matrix dot = n.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(n.grad - dot.replicate(1, y.cols()));
    parent(n, 0).accumulate(g);
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  Matrix v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const float m = v.row(r).maxCoeff();
    const float lse = m + std::log((v.row(r).array() - m).exp().sum());
    v.row(r).array() -= lse;
  }
  return make_result(std::move(v), {a}, [](Node& n) {
    Matrix p = n.value.array().exp().matrix();
    Matrix s = n.grad.rowwise().sum();
    parent(n, 0).accumulate(n.grad - p.cwiseProduct(s.replicate(1, p.cols())));
  });
}

Tensor log(const Tensor& a, float eps) {
  Matrix v = a.value().array().max(eps).log().matrix();
  return make_result(std::move(v), {a}, [eps](Node& n) {
    Node& p = parent(n, 0);
    p.accumulate((n.grad.array() / p.value.array().max(eps)).matrix());
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const Eigen::Index d = x.cols();
  check(gamma.cols() == d && beta.cols() == d, "layer_norm shape mismatch");
  Matrix xhat(x.rows(), d);
  Eigen::VectorXf inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const float mean = x.value().row(r).mean();
    const auto centered = x.value().row(r).array() - mean;
    const float var = centered.square().mean();
    inv_std(r) = 1.0f / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix v = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  v.rowwise() += beta.value().row(0);
  return make_result(std::move(v), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                       Node& px = parent(n, 0);
                       Node& pg = parent(n, 1);
                       Node& pb = parent(n, 2);
                       if (pg.requires_grad)
                         pg.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
                       if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
                       if (px.requires_grad) {
                         const Eigen::Index d = xhat.cols();
                         Matrix dxhat =
                             (n.grad.array().rowwise() * pg.value.row(0).array()).matrix();
                         Matrix dx(xhat.rows(), d);
                         for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                           const float m1 = dxhat.row(r).mean();
                           const float m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                           dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 -
                                                     xhat.row(r).array() * m2);
                         }
                         px.accumulate(dx);
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < table.rows(), "embedding id out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result(std::move(v), {table}, [idx = std::move(idx)](Node& n) {
    Node& p = parent(n, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      p.grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && start + count <= a.cols(), "slice_cols out of range");
  Matrix v = a.value().middleCols(start, count);
  return make_result(std::move(v), {a}, [start, count](Node& n) {
    Node& p = parent(n, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad.middleCols(start, count) += n.grad;
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  check(start >= 0 && start + count <= a.rows(), "slice_rows out of range");
  Matrix v = a.value().middleRows(start, count);
  return make_result(std::move(v), {a}, [start, count](Node& n) {
    Node& p = parent(n, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    p.grad.middleRows(start, count) += n.grad;
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols needs inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    check(p.rows() == parts.front().rows(), "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix v(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(v), parts, [](Node& n) {
    Eigen::Index at = 0;
    for (auto& p : n.parents) {
      const auto c = p->value.cols();
      if (p->requires_grad) p->accumulate(n.grad.middleCols(at, c));
      at += c;
    }
  });
}

Tensor pad_cols(const Tensor& a, Eigen::Index cols) {
  check(cols >= a.cols(), "pad_cols cannot shrink");
  Matrix v = Matrix::Zero(a.rows(), cols);
  v.leftCols(a.cols()) = a.value();
  return make_result(std::move(v), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    p.accumulate(n.grad.leftCols(p.value.cols()));
  });
}

Tensor scatter_cols(const Tensor& a, std::span<const int> index, Eigen::Index cols) {
  check(static_cast<Eigen::Index>(index.size()) == a.cols(), "scatter_cols index size mismatch");
  Matrix v = Matrix::Zero(a.rows(), cols);
  for (std::size_t j = 0; j < index.size(); ++j) {
    check(index[j] >= 0 && index[j] < cols, "scatter_cols index out of range");
    v.col(index[j]) += a.value().col(static_cast<Eigen::Index>(j));
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_result(std::move(v), {a}, [idx = std::move(idx)](Node& n) {
    Node& p = parent(n, 0);
    Matrix g(p.value.rows(), p.value.cols());
    for (std::size_t j = 0; j < idx.size(); ++j)
      g.col(static_cast<Eigen::Index>(j)) = n.grad.col(idx[j]);
    p.accumulate(g);
  });
}

Tensor dropout(const Tensor& a, float p, Rng& rng, bool training) {
  if (!training || p <= 0.0f) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  const float s = 1.0f / (1.0f - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : 0.0f;
  Matrix v = a.value().cwiseProduct(mask);
  return make_result(std::move(v), {a}, [mask = std::move(mask)](Node& n) {
    parent(n, 0).accumulate(n.grad.cwiseProduct(mask));
  });
}

Tensor pick_nll(const Tensor& log_probs, std::span<const int> targets) {
  check(static_cast<Eigen::Index>(targets.size()) == log_probs.rows(), "pick_nll size mismatch");
  float total = 0.0f;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] < 0) continue;
    check(targets[t] < log_probs.cols(), "pick_nll target out of range");
    total -= log_probs.value()(static_cast<Eigen::Index>(t), targets[t]);
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result(Matrix::Constant(1, 1, total), {log_probs}, [tg = std::move(tg)](Node& n) {
    Node& p = parent(n, 0);
    if (p.grad.size() == 0) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    const float g = n.grad(0, 0);
    for (std::size_t t = 0; t < tg.size(); ++t)
      if (tg[t] >= 0) p.grad(static_cast<Eigen::Index>(t), tg[t]) -= g;
  });
}

Tensor sum_all(const Tensor& a) {
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& n) {
    Node& p = parent(n, 0);
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), n.grad(0, 0)));
  });
}

}  // namespace qna::nn
