#pragma once

namespace mixcut::models {

// Closed interval for an independent uniform prior on one parameter.
struct PriorBox {
    double lo = 0.0, hi = 1.0;
};

}  // namespace mixcut::models
