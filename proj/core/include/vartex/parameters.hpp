#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "vartex/tensor.hpp"

namespace vartex {

enum class Init { TruncatedNormal, Zeros, Ones };

struct Parameter {
  std::string name;
  Shape shape;
  Init init = Init::Zeros;
  Tensor value;
  Tensor grad;

  std::size_t count() const { return shape_numel(shape); }
  bool materialized() const { return value.size() == count(); }
};

/// Named trainable parameters in declaration order. Shapes can be declared
/// without allocating, which is how full-scale models get counted.
class ParameterStore {
 public:
  static constexpr double kInitStddev = 0.02;

  Parameter& declare(const std::string& name, Shape shape, Init init);

  /// Allocates and initializes every parameter; each tensor draws from its
  /// own stream derived from `seed` and its declaration index.
  void materialize(std::uint64_t seed);
  void zero_grad();

  bool contains(const std::string& name) const { return index_.contains(name); }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  std::uint64_t total_count() const;
  /// Element counts keyed by the name prefix before the first '.'.
  std::map<std::string, std::uint64_t> census_by_prefix() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace vartex
