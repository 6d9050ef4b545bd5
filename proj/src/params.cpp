#include "fdnet/params.hpp"

#include <stdexcept>

namespace fdnet {

void ParamSet::add(const std::string& name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
}

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return values_[it->second];
}

Tensor& ParamSet::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return values_[it->second];
}

std::int64_t ParamSet::total_elements() const {
    std::int64_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], Tensor::zeros(values_[i].shape()));
    return out;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool trainable) : tape_(&tape), names_(params.names()) {
    for (std::size_t i = 0; i < params.size(); ++i) vars_.emplace(names_[i], tape.leaf(params.at(i), trainable));
}

BoundParams::BoundParams(Tape& tape, const std::vector<std::string>& names, std::span<const Var> vars)
    : tape_(&tape), names_(names) {
    if (names.size() != vars.size()) throw std::invalid_argument("BoundParams: names and vars differ in length");
    for (std::size_t i = 0; i < names.size(); ++i) vars_.emplace(names[i], vars[i]);
}

Var BoundParams::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

ParamSet BoundParams::gradients(const Gradients& grads) const {
    ParamSet out;
    for (const auto& name : names_) out.add(name, grads.of(vars_.at(name)));
    return out;
}

}  // namespace fdnet
