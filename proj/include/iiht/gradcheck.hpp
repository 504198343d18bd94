#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "iiht/tensor.hpp"

namespace iiht {

struct GradCheckReport {
  std::string name;
  std::size_t instances = 0;
  std::size_t entries = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

// Central finite differences against the tape gradients. `build` must be a
// pure function of the leaves (reseed any Rng it uses per call) and return a
// scalar loss; it is re-evaluated 2x per leaf entry.
template <class F>
double max_fd_rel_error(std::vector<Tensor>& leaves, F&& build, double h = 1e-5) {
  for (Tensor& leaf : leaves) leaf.zero_grad();
  Tensor loss = build();
  backward(loss);

  std::vector<std::vector<double>> autodiff;
  autodiff.reserve(leaves.size());
  for (Tensor& leaf : leaves) {
    autodiff.push_back(leaf.has_grad() ? leaf.grad()
                                       : std::vector<double>(leaf.size(), 0.0));
  }

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& data = leaves[li].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = build().value();
      data[i] = saved - h;
      const double down = build().value();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(autodiff[li][i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Finite-difference suite over every registered op plus the classification,
// generation and blended training losses. Backs the `gradcheck` subcommand.
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed,
                                                 std::size_t instances_per_case = 100,
                                                 double tol = 1e-4);

bool gradcheck_all_passed(const std::vector<GradCheckReport>& reports);

}  // namespace iiht
