#ifndef UWE_OPTIM_HPP
#define UWE_OPTIM_HPP

#include "uwe/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace uwe {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimiser with bias correction.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const ParamList<Scalar>& list) {
    if (first_.empty()) {
      for (const auto* p : list.params) {
        first_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
        second_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (first_.size() != list.params.size()) throw std::logic_error("Adam: parameter list changed between steps");
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar step_size = Scalar(cfg_.lr / c1);
    const Scalar inv_sqrt_c2 = Scalar(1.0 / std::sqrt(c2));
    for (std::size_t i = 0; i < list.params.size(); ++i) {
      auto* p = list.params[i];
      first_[i] = b1 * first_[i] + (Scalar(1) - b1) * p->grad;
      second_[i] = b2 * second_[i] + (Scalar(1) - b2) * p->grad.cwiseAbs2();
      p->value.array() -=
          step_size * first_[i].array() / ((second_[i].array().sqrt() * inv_sqrt_c2) + Scalar(cfg_.eps));
    }
  }

  long long steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }

  // Exposed for checkpointing.
  std::vector<Matrix<Scalar>>& first_moments() { return first_; }
  std::vector<Matrix<Scalar>>& second_moments() { return second_; }
  const std::vector<Matrix<Scalar>>& first_moments() const { return first_; }
  const std::vector<Matrix<Scalar>>& second_moments() const { return second_; }
  void set_steps(long long s) { steps_ = s; }

 private:
  AdamConfig cfg_;
  long long steps_ = 0;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
};

}  // namespace uwe

#endif  // UWE_OPTIM_HPP
