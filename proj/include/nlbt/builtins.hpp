#pragma once

#include <string>
#include <vector>

#include "nlbt/system.hpp"

namespace nlbt {

/// Cubic drift f(x) = A x − x∘3 with A = −2I + 0.1·superdiagonal, one input
/// entering through B = ones and g(x) = 0.1 x, scalar noise through sin(x),
/// h = identity.
StochasticSystem example1(int n = 6);

/// example1 with g(x) = x∘2, which is not point symmetric.
StochasticSystem example2(int n = 6);

/// Scalar dx = (−x + u) dt, y = x.
StochasticSystem linear_demo();

const std::vector<std::string>& builtin_names();
bool is_builtin(const std::string& name);
/// `n` is ignored by linear-demo. Throws UsageError for unknown names.
StochasticSystem builtin_system(const std::string& name, int n = 6);

}  // namespace nlbt
