#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "fdnet/tape.hpp"

namespace fdnet {

/// Ordered collection of named tensors. Insertion order is the canonical
/// order used for iteration, checkpoints and optimizer state.
class ParamSet {
public:
    void add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const Tensor& at(std::size_t i) const { return values_[i]; }
    Tensor& at(std::size_t i) { return values_[i]; }
    std::int64_t total_elements() const;

    /// Same names and shapes, all zeros.
    ParamSet zeros_like() const;

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        return a.names_ == b.names_ && a.values_ == b.values_;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::map<std::string, std::size_t> index_;
};

/// A ParamSet recorded as leaves on one tape.
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamSet& params, bool trainable);
    /// Binds existing vars, e.g. leaves created by grad_check. vars[i] is names[i].
    BoundParams(Tape& tape, const std::vector<std::string>& names, std::span<const Var> vars);

    Var operator[](const std::string& name) const;
    Tape& tape() const { return *tape_; }

    /// Gradients of every parameter, in the ParamSet's order.
    ParamSet gradients(const Gradients& grads) const;

private:
    Tape* tape_;
    std::vector<std::string> names_;
    std::map<std::string, Var> vars_;
};

}  // namespace fdnet
