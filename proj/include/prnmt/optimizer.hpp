#pragma once

#include "prnmt/model.hpp"

namespace prnmt {

struct AdaDeltaConfig {
    double decay = 0.95;
    double epsilon = 1e-6;
};

// Per-parameter adaptive steps (Zeiler's AdaDelta), applied as ascent.
class AdaDelta {
public:
    AdaDelta(const ModelParams& params, AdaDeltaConfig config);

    void ascend(ModelParams& params, const Gradient& grad);

private:
    AdaDeltaConfig config_;
    BlockArray mean_sq_grad_;
    BlockArray mean_sq_update_;
};

}  // namespace prnmt
