#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "predlqr/matlin.hpp"

namespace predlqr {

/// What a controller sees when choosing u_t: the current state, every
/// disturbance already realized (w_0..w_{t-1}) and the prediction window
/// w_t..w_{t+k-1}, truncated at the last step of the horizon.
struct Observation {
    std::size_t t = 0;
    std::size_t horizon = 0;  // T; remaining steps are horizon - t
    const Mat* state = nullptr;
    std::span<const Mat> history;
    std::span<const Mat> window;

    [[nodiscard]] const Mat& x() const { return *state; }
    [[nodiscard]] std::size_t remaining() const { return horizon - t; }
};

class Policy {
public:
    virtual ~Policy() = default;

    /// Number of future disturbances the policy wants at each step.
    [[nodiscard]] virtual std::size_t predictions() const = 0;
    [[nodiscard]] virtual Mat act(const Observation& obs) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
    /// True when the control is affine in (state, disturbances).
    [[nodiscard]] virtual bool is_affine() const { return true; }
};

using PolicyPtr = std::shared_ptr<const Policy>;

}  // namespace predlqr
