#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tensor.hpp"

namespace sas {

// Linear warmup then cosine decay to zero over the remaining steps.
inline double cosine_warmup_lr(std::size_t step, std::size_t total_steps,
                               std::size_t warmup_steps, double lr_max) {
    if (total_steps == 0) return 0.0;
    if (warmup_steps > 0 && step < warmup_steps)
        return lr_max * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
    double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
    return 0.5 * lr_max * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Decoupled weight decay Adam. Moments are kept in double regardless of the
// parameter precision; parameters without a materialized gradient are treated
// as having zero gradient. step() consumes and clears the gradients.
template <class T>
class AdamW {
  public:
    AdamW(std::vector<Tensor<T>> params, double beta1, double beta2, double weight_decay,
          double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), wd_(weight_decay), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].numel(), 0.0);
            v_[i].assign(params_[i].numel(), 0.0);
        }
    }

    void step(double lr) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& p = params_[pi];
            const bool has_grad = p.has_grad();
            for (std::size_t i = 0; i < p.numel(); ++i) {
                double g = has_grad ? static_cast<double>(p.grad_at(i)) : 0.0;
                m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g;
                v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * g * g;
                double mhat = m_[pi][i] / bc1;
                double vhat = v_[pi][i] / bc2;
                double x = static_cast<double>(p.at(i));
                x -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * x);
                p.at(i) = static_cast<T>(x);
            }
            p.zero_grad();
        }
    }

    std::size_t steps_taken() const { return t_; }

  private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<double>> m_, v_;
    double beta1_, beta2_, wd_, eps_;
    std::size_t t_ = 0;
};

}  // namespace sas
