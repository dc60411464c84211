#pragma once

#include <cmath>
#include <vector>

#include "listen/autograd.hpp"

namespace listen::optim {

// Global L2 norm of the gradients; rescales them to `max_norm` when above it.
// Returns the norm before clipping.
inline double clip_grad_norm(const std::vector<ag::Param*>& params, double max_norm) {
    double sq = 0.0;
    for (const auto* p : params)
        if (p->grad.size()) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / (norm + 1e-12);
        for (auto* p : params)
            if (p->grad.size()) p->grad *= s;
    }
    return norm;
}

class Sgd {
public:
    Sgd(std::vector<ag::Param*> params, double lr) : params_(std::move(params)), lr_(lr) {}
    void step() {
        for (auto* p : params_)
            if (p->trainable && p->grad.size()) p->value -= lr_ * p->grad;
    }
    void set_lr(double lr) { lr_ = lr; }

private:
    std::vector<ag::Param*> params_;
    double lr_;
};

// Adaptive-moment update with bias correction.
class Adam {
public:
    Adam(std::vector<ag::Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(ag::Mat::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(ag::Mat::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            ag::Param& p = *params_[i];
            if (!p.trainable || p.grad.size() == 0) continue;
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
            p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    int steps() const { return t_; }

private:
    std::vector<ag::Param*> params_;
    std::vector<ag::Mat> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
};

}  // namespace listen::optim
