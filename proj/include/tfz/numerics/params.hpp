#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tfz/numerics/tape.hpp"

namespace tfz {

class Rng;

/// Named parameter tensors in insertion order.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const Tensor& value(std::size_t i) const { return values_.at(i); }
  Tensor& value(std::size_t i) { return values_.at(i); }
  std::size_t scalar_count() const;

  // Initializers for the conventions used across the model.
  void add_normal(const std::string& name, Shape shape, Rng& rng, double stddev);
  void add_zeros(const std::string& name, Shape shape) { add(name, Tensor::zeros(std::move(shape))); }
  void add_ones(const std::string& name, Shape shape) { add(name, Tensor::full(std::move(shape), 1.0)); }

  friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.names_ == b.names_ && a.values_ == b.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Lazily places parameters on a tape as leaves, once per name.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamSet& params, bool trainable) : tape_(tape), params_(params), trainable_(trainable) {}

  Var operator()(const std::string& name);
  /// Uses an existing tape value for `name` instead of a fresh leaf.
  void bind(const std::string& name, Var v) { bound_[name] = v; }
  Tape& tape() noexcept { return tape_; }

  /// Gradients aligned with params.names(); unbound parameters get zeros.
  std::vector<Tensor> gradients(const Gradients& grads) const;

 private:
  Tape& tape_;
  const ParamSet& params_;
  bool trainable_;
  std::unordered_map<std::string, Var> bound_;
};

}  // namespace tfz
