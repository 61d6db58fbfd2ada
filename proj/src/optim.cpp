#include "aarr/optim.hpp"

#include <cmath>

namespace aarr {

void rmsprop_update(Tensor& param, const Tensor& grad, RmsPropSlots& slots, const RmsPropOptions& opt) {
    require_same_shape(param, grad, "rmsprop_update");
    if (slots.square_avg.shape() != param.shape()) {
        slots.square_avg = Tensor(param.shape(), 0.0);
        slots.momentum_buffer = Tensor(param.shape(), 0.0);
    }
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = grad[i] + opt.weight_decay * param[i];
        double& v = slots.square_avg[i];
        v = opt.alpha * v + (1.0 - opt.alpha) * g * g;
        double& buf = slots.momentum_buffer[i];
        buf = opt.momentum * buf + g / std::sqrt(v + opt.eps);
        param[i] -= opt.learning_rate * buf;
    }
}

}  // namespace aarr
