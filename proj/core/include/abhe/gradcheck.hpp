#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "abhe/nn.hpp"

namespace abhe::gradcheck {

inline constexpr double kOpTolerance = 1e-3;
inline constexpr double kEndToEndTolerance = 1e-2;
// whole modules stack many f32 ops; their difference quotients carry more rounding
inline constexpr double kModuleTolerance = 1e-2;

using Fn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares reverse-mode gradients of sum(f(inputs) * r), r a fixed random
/// tensor, with central differences. `eps` holds one step per input, or a
/// single step shared by all. Returns the largest norm-wise relative error
/// ||g - g_fd|| / ||g_fd|| over the inputs whose `checked` flag is set (all
/// when empty).
double relative_error(const Fn& f, const std::vector<Tensor>& inputs, Rng& rng, std::vector<float> eps,
                      std::vector<bool> checked = {});

struct Row {
  std::string name;
  double error = 0.0;
  double tolerance = kOpTolerance;
  bool passed() const { return error < tolerance; }
};

/// Every differentiable op, the network modules built from them, and the
/// offsets -> DLT -> warp -> L1 path.
std::vector<Row> run_suite(uint64_t seed = 1);

void print_table(std::ostream& out, std::span<const Row> rows);

}  // namespace abhe::gradcheck
