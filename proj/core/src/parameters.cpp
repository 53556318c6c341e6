#include "vartex/parameters.hpp"

#include "vartex/error.hpp"
#include "vartex/rng.hpp"

namespace vartex {

Parameter& ParameterStore::declare(const std::string& name, Shape shape, Init init) {
  require(!index_.contains(name), ErrorCode::InvalidArgument, "duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Parameter p;
  p.name = name;
  p.shape = std::move(shape);
  p.init = init;
  params_.push_back(std::move(p));
  return params_.back();
}

void ParameterStore::materialize(std::uint64_t seed) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = params_[i];
    p.value = Tensor(p.shape);
    p.grad = Tensor(p.shape);
    switch (p.init) {
      case Init::Zeros:
        break;
      case Init::Ones:
        p.value.fill(1.0);
        break;
      case Init::TruncatedNormal: {
        Rng rng(mix_seed(seed, i));
        for (double& v : p.value.vec()) v = rng.truncated_normal(kInitStddev);
        break;
      }
    }
  }
}

void ParameterStore::zero_grad() {
  for (Parameter& p : params_) {
    if (p.grad.size() != p.count()) p.grad = Tensor(p.shape);
    else p.grad.fill(0.0);
  }
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
  return params_[it->second];
}

std::uint64_t ParameterStore::total_count() const {
  std::uint64_t total = 0;
  for (const Parameter& p : params_) total += p.count();
  return total;
}

std::map<std::string, std::uint64_t> ParameterStore::census_by_prefix() const {
  std::map<std::string, std::uint64_t> out;
  for (const Parameter& p : params_) out[p.name.substr(0, p.name.find('.'))] += p.count();
  return out;
}

}  // namespace vartex
