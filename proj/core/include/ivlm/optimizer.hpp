#pragma once

#include "ivlm/params.hpp"

#include <utility>
#include <vector>

namespace ivlm {

struct OptimizerConfig {
    double lr = 1e-3;
    std::pair<double, double> betas = {0.9, 0.999};
    double weight_decay = 0.01;
    double eps = 1e-8;
};

// Adam with decoupled weight decay. Frozen parameters are skipped entirely:
// neither the values nor the moment buffers move.
class AdamW {
public:
    AdamW(ParamStore& params, OptimizerConfig cfg);

    void step();
    std::size_t steps_taken() const { return t_; }

private:
    ParamStore& params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

}  // namespace ivlm
