#include "stpgn/params.hpp"

#include <cmath>
#include <stdexcept>

namespace stpgn {

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return params_.back();
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& ParameterStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("unknown parameter '" + name + "'");
}

const Parameter& ParameterStore::get(const std::string& name) const {
  if (const Parameter* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter '" + name + "'");
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in ? fan_in : 1));
  // Built from raw 64-bit draws so the stream is identical across standard libraries.
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * bound;
  }
  return t;
}

}  // namespace stpgn
