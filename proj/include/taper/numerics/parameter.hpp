#pragma once

#include <string>
#include <vector>

#include "taper/numerics/random.hpp"
#include "taper/numerics/tensor.hpp"

namespace taper {

/// Trainable tensor with its gradient buffer.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

using ParameterRefs = std::vector<Parameter*>;

/// Fills with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in_uniform(Parameter& p, std::size_t fan_in, Rng& rng);

void zero_grads(const ParameterRefs& params);

/// Rounds every value to the nearest float so that a 32-bit checkpoint
/// round-trips the parameters exactly.
void round_to_float(const ParameterRefs& params);

/// Order-sensitive digest of names, shapes and values.
std::uint64_t parameter_hash(const ParameterRefs& params);

std::vector<Tensor> snapshot(const ParameterRefs& params);
void restore(const ParameterRefs& params, const std::vector<Tensor>& values);

}  // namespace taper
