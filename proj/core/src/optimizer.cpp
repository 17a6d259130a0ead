#include "ivlm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace ivlm {

AdamW::AdamW(ParamStore& params, OptimizerConfig cfg) : params_(params), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw std::invalid_argument("adamw: learning rate must be positive");
    if (cfg_.eps <= 0.0) throw std::invalid_argument("adamw: eps must be positive");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_.tensor(i).numel(), 0.0);
        v_[i].assign(params_.tensor(i).numel(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    const double b1 = cfg_.betas.first, b2 = cfg_.betas.second;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_.frozen(i)) continue;
        Tensor t = params_.tensor(i);
        if (!t.has_grad()) continue;
        auto val = t.data();
        auto grad = t.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < val.size(); ++j) {
            const double g = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            val[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * val[j]);
        }
    }
}

}  // namespace ivlm
