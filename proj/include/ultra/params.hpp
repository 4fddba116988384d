#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ultra/ndtape.hpp"

namespace ultra {

// Named learnable tensors in a fixed insertion order. The order defines the
// checkpoint layout and the optimizer state layout.
class ParameterStore {
 public:
  void add(std::string name, nd::Tensor value);

  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  nd::Tensor& value(std::size_t i) { return tensors_.at(i); }
  const nd::Tensor& value(std::size_t i) const { return tensors_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  nd::Tensor& at(std::string_view name);
  const nd::Tensor& at(std::string_view name) const;

  std::span<nd::Tensor> tensors() { return tensors_; }
  std::span<const nd::Tensor> tensors() const { return tensors_; }
  const std::vector<std::string>& names() const { return names_; }

  // Number of scalars in tensors whose name starts with `prefix`.
  std::size_t count(std::string_view prefix = {}) const;

  bool operator==(const ParameterStore& o) const {
    return names_ == o.names_ && tensors_ == o.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<nd::Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters placed on a tape as leaves, addressable by name.
class BoundParams {
 public:
  BoundParams(nd::Tape& tape, const ParameterStore& store, bool requires_grad);

  nd::Var operator[](std::string_view name) const;
  nd::Var at(std::size_t i) const { return vars_.at(i); }
  nd::Tape& tape() const { return *tape_; }
  // Per-parameter gradients in store order; call after tape.backward().
  std::vector<nd::Tensor> gradients() const;

 private:
  nd::Tape* tape_;
  const ParameterStore* store_;
  std::vector<nd::Var> vars_;
};

// Rounds every value to the nearest float32, the precision of stored
// checkpoints.
void round_to_float32(ParameterStore& params);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
nd::Tensor uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in,
                          std::mt19937_64& rng);
// Standard normal scaled by `factor`.
nd::Tensor scaled_normal(std::size_t rows, std::size_t cols, double factor, std::mt19937_64& rng);

}  // namespace ultra
