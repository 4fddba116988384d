#pragma once

// Central finite-difference oracle for tape gradients.

#include <cmath>
#include <algorithm>
#include <functional>
#include <random>
#include <vector>

#include "ultra/ndtape.hpp"
#include "ultra/params.hpp"

namespace support {

using LossBuilder = std::function<ultra::nd::Var(ultra::nd::Tape&, const std::vector<ultra::nd::Var>&)>;

// ||analytic - numeric|| / max(||numeric||, floor), one value per input.
inline std::vector<double> gradient_errors(const LossBuilder& build, const std::vector<ultra::nd::Tensor>& inputs,
                                           double h = 1e-6, double floor = 1e-8) {
  using namespace ultra::nd;
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
    const Var loss = build(tape, leaves);
    tape.backward(loss);
    for (const auto& v : leaves) analytic.push_back(tape.grad(v));
  }
  auto value_at = [&](std::vector<Tensor> xs) {
    Tape tape(false);
    std::vector<Var> leaves;
    for (auto& x : xs) leaves.push_back(tape.leaf(std::move(x), false));
    return build(tape, leaves).value().item();
  };
  std::vector<double> errors;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      auto plus = inputs;
      auto minus = inputs;
      plus[i].data()[j] += h;
      minus[i].data()[j] -= h;
      const double numeric = (value_at(plus) - value_at(minus)) / (2 * h);
      const double a = analytic[i].data()[j];
      diff += (a - numeric) * (a - numeric);
      norm += numeric * numeric;
    }
    errors.push_back(std::sqrt(diff) / std::max(std::sqrt(norm), floor));
  }
  return errors;
}

using StoreLoss = std::function<ultra::nd::Var(const ultra::BoundParams&)>;

// Same measure for every tensor of a parameter store.
inline std::vector<double> store_gradient_errors(const StoreLoss& build, const ultra::ParameterStore& store,
                                                 double h = 1e-6, double floor = 1e-8) {
  using namespace ultra;
  std::vector<nd::Tensor> analytic;
  {
    nd::Tape tape;
    BoundParams bound(tape, store, true);
    tape.backward(build(bound));
    analytic = bound.gradients();
  }
  auto value_at = [&](const ParameterStore& p) {
    nd::Tape tape(false);
    BoundParams bound(tape, p, false);
    return build(bound).value().item();
  };
  ParameterStore work = store;
  std::vector<double> errors;
  for (std::size_t i = 0; i < store.size(); ++i) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < store.value(i).size(); ++j) {
      const double x = store.value(i).data()[j];
      work.value(i).data()[j] = x + h;
      const double up = value_at(work);
      work.value(i).data()[j] = x - h;
      const double down = value_at(work);
      work.value(i).data()[j] = x;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i].data()[j];
      diff += (a - numeric) * (a - numeric);
      norm += numeric * numeric;
    }
    errors.push_back(std::sqrt(diff) / std::max(std::sqrt(norm), floor));
  }
  return errors;
}

inline ultra::nd::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                       double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ultra::nd::Tensor t(rows, cols);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

}  // namespace support
