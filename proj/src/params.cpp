#include "ultra/params.hpp"

#include <cmath>

#include "ultra/errors.hpp"

namespace ultra {

void ParameterStore::add(std::string name, nd::Tensor value) {
  if (index_.contains(name)) throw ContractViolation("duplicate parameter name " + name);
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::optional<std::size_t> ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

nd::Tensor& ParameterStore::at(std::string_view name) {
  if (auto i = find(name)) return tensors_[*i];
  throw ContractViolation("unknown parameter " + std::string(name));
}

const nd::Tensor& ParameterStore::at(std::string_view name) const {
  if (auto i = find(name)) return tensors_[*i];
  throw ContractViolation("unknown parameter " + std::string(name));
}

std::size_t ParameterStore::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (names_[i].starts_with(prefix)) n += tensors_[i].size();
  }
  return n;
}

BoundParams::BoundParams(nd::Tape& tape, const ParameterStore& store, bool requires_grad)
    : tape_(&tape), store_(&store) {
  vars_.reserve(store.size());
  for (const auto& t : store.tensors()) vars_.push_back(tape.leaf(t, requires_grad));
}

nd::Var BoundParams::operator[](std::string_view name) const {
  if (auto i = store_->find(name)) return vars_[*i];
  throw ContractViolation("unknown parameter " + std::string(name));
}

std::vector<nd::Tensor> BoundParams::gradients() const {
  std::vector<nd::Tensor> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) out.push_back(tape_->grad(v));
  return out;
}

void round_to_float32(ParameterStore& params) {
  for (auto& t : params.tensors()) {
    for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
  }
}

nd::Tensor uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in,
                          std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  nd::Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

nd::Tensor scaled_normal(std::size_t rows, std::size_t cols, double factor, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  nd::Tensor t(rows, cols);
  for (auto& v : t.values()) v = factor * dist(rng);
  return t;
}

}  // namespace ultra
