#include "prnmt/optimizer.hpp"

namespace prnmt {

AdaDelta::AdaDelta(const ModelParams& params, AdaDeltaConfig config) : config_(config) {
    for (std::size_t i = 0; i < kNumParamBlocks; ++i) {
        const auto& b = params.blocks[i];
        mean_sq_grad_[i] = Eigen::MatrixXd::Zero(b.rows(), b.cols());
        mean_sq_update_[i] = Eigen::MatrixXd::Zero(b.rows(), b.cols());
    }
}

void AdaDelta::ascend(ModelParams& params, const Gradient& grad) {
    const double rho = config_.decay;
    const double eps = config_.epsilon;
    for (std::size_t i = 0; i < kNumParamBlocks; ++i) {
        auto g = grad.blocks[i].array();
        auto eg = mean_sq_grad_[i].array();
        auto ex = mean_sq_update_[i].array();
        eg = rho * eg + (1.0 - rho) * g.square();
        const Eigen::ArrayXXd step = ((ex + eps).sqrt() / (eg + eps).sqrt()) * g;
        ex = rho * ex + (1.0 - rho) * step.square();
        params.blocks[i].array() += step;
    }
}

}  // namespace prnmt
