#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qna/nn/layers.hpp"

namespace qna::nn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  /// Clip the global gradient norm to this value; 0 disables clipping.
  float max_grad_norm = 0.0f;
};

/// Learning-rate schedule. Noam: lr * dim^-0.5 * min(step^-0.5, step * warmup^-1.5).
struct LrSchedule {
  enum class Kind { Constant, Noam } kind = Kind::Constant;
  int warmup_steps = 0;
  int model_dim = 0;

  float rate(float base_lr, std::int64_t step) const;
  static Kind parse(const std::string& name);
  static std::string name(Kind kind);
};

class Adam {
 public:
  Adam(ParamList params, AdamConfig config, LrSchedule schedule = {});

  /// Applies one update from accumulated gradients, scaled by `grad_scale`,
  /// then clears them.
  void step(float grad_scale = 1.0f);
  void zero_grad();
  std::int64_t steps() const { return step_; }
  float current_lr() const;

 private:
  ParamList params_;
  AdamConfig config_;
  LrSchedule schedule_;
  std::vector<Matrix> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace qna::nn
