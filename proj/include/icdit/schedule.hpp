#pragma once

#include <cmath>

#include "icdit/ops.hpp"
#include "icdit/tensor.hpp"

namespace icdit {

// Cosine signal schedule for epsilon-prediction diffusion on t in [0,1].
// alpha_bar(0) = 1 exactly; near t = 1 the raw cosine underflows and is
// clipped at alpha_min so sqrt ratios stay finite.
struct NoiseSchedule {
    enum class Kind { cosine };
    Kind kind = Kind::cosine;
    double offset = 0.008;
    double alpha_min = 1e-8;

    double alpha_bar(double t) const {
        require(t >= 0.0 && t <= 1.0, errc::invalid_argument, "schedule: t must be in [0,1]");
        const double half_pi = 1.5707963267948966;
        double f = std::cos((t + offset) / (1.0 + offset) * half_pi);
        double f0 = std::cos(offset / (1.0 + offset) * half_pi);
        double a = (f * f) / (f0 * f0);
        return std::min(1.0, std::max(alpha_min, a));
    }

    template <class T>
    T sqrt_alpha_bar(T t) const {
        return static_cast<T>(std::sqrt(alpha_bar(static_cast<double>(t))));
    }

    template <class T>
    T sqrt_one_minus_alpha_bar(T t) const {
        return static_cast<T>(std::sqrt(1.0 - alpha_bar(static_cast<double>(t))));
    }
};

// z_t = sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * eps
template <class T>
TensorT<T> add_noise(const TensorT<T>& z0, const TensorT<T>& eps, T t, const NoiseSchedule& schedule) {
    require(z0.shape() == eps.shape(), errc::shape_mismatch, "add_noise: shape mismatch");
    T sa = schedule.sqrt_alpha_bar(t);
    T sb = schedule.sqrt_one_minus_alpha_bar(t);
    return add(scale(z0, sa), scale(eps, sb));
}

}  // namespace icdit
