#include "taper/numerics/parameter.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace taper {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

void init_fan_in_uniform(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (double& v : p.value.data()) v = rng.uniform(-bound, bound);
}

void zero_grads(const ParameterRefs& params) {
  for (Parameter* p : params) p->zero_grad();
}

void round_to_float(const ParameterRefs& params) {
  for (Parameter* p : params) {
    for (double& v : p->value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

std::uint64_t parameter_hash(const ParameterRefs& params) {
  std::uint64_t h = fnv1a64("");
  for (const Parameter* p : params) {
    h = fnv1a64(p->name, h);
    h = fnv1a64(shape_string(p->value.shape()), h);
    const auto data = p->value.data();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(data.data()), data.size_bytes()), h);
  }
  return h;
}

std::vector<Tensor> snapshot(const ParameterRefs& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const ParameterRefs& params, const std::vector<Tensor>& values) {
  if (params.size() != values.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.shape() != values[i].shape()) {
      throw std::invalid_argument("restore: shape mismatch for " + params[i]->name);
    }
    params[i]->value = values[i];
  }
}

}  // namespace taper
