#include "qna/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qna::nn {

float LrSchedule::rate(float base_lr, std::int64_t step) const {
  if (kind == Kind::Constant) return base_lr;
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(std::max(warmup_steps, 1));
  return static_cast<float>(base_lr * std::pow(static_cast<double>(std::max(model_dim, 1)), -0.5) *
                            std::min(std::pow(s, -0.5), s * std::pow(w, -1.5)));
}

LrSchedule::Kind LrSchedule::parse(const std::string& name) {
  if (name == "constant") return Kind::Constant;
  if (name == "noam") return Kind::Noam;
  throw std::invalid_argument("unknown lr schedule: " + name);
}

std::string LrSchedule::name(Kind kind) { return kind == Kind::Noam ? "noam" : "constant"; }

Adam::Adam(ParamList params, AdamConfig config, LrSchedule schedule)
    : params_(std::move(params)), config_(config), schedule_(schedule) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
    v_.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
  }
}

float Adam::current_lr() const { return schedule_.rate(config_.lr, step_ + 1); }

void Adam::step(float grad_scale) {
  ++step_;
  float clip = 1.0f;
  if (config_.max_grad_norm > 0.0f) {
    double sq = 0.0;
    for (const auto& p : params_)
      if (p.tensor->grad().size()) sq += static_cast<double>(p.tensor->grad().squaredNorm());
    const double norm = std::sqrt(sq) * grad_scale;
    if (norm > config_.max_grad_norm) clip = static_cast<float>(config_.max_grad_norm / norm);
  }
  const float lr = schedule_.rate(config_.lr, step_);
  const float bc1 = 1.0f - std::pow(config_.beta1, static_cast<float>(step_));
  const float bc2 = 1.0f - std::pow(config_.beta2, static_cast<float>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = *params_[i].tensor;
    if (t.grad().size() == 0) continue;
    const Matrix g = t.grad() * (grad_scale * clip);
    m_[i] = config_.beta1 * m_[i] + (1.0f - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0f - config_.beta2) * g.cwiseAbs2();
    t.mutable_value().array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

}  // namespace qna::nn
