#include "tfz/numerics/params.hpp"

#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

void ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw Error(ErrorKind::InvalidArgument, "duplicate parameter " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::UnknownParameter, name);
  return values_[it->second];
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorKind::UnknownParameter, name);
  return values_[it->second];
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void ParamSet::add_normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
  add(name, Tensor::randn(std::move(shape), rng, stddev));
}

Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.leaf(params_.at(name), trainable_);
  bound_.emplace(name, v);
  return v;
}

std::vector<Tensor> ParamBinding::gradients(const Gradients& grads) const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto it = bound_.find(params_.names()[i]);
    if (it == bound_.end()) {
      out.push_back(Tensor::zeros(params_.value(i).shape()));
    } else {
      out.push_back(grads[it->second]);
    }
  }
  return out;
}

}  // namespace tfz
