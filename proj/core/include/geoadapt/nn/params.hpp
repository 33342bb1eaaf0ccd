#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoadapt/nn/tape.hpp"
#include "geoadapt/nn/tensor.hpp"

namespace geoadapt::nn {

template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m;  // Adam first moment
    Tensor<T> v;  // Adam second moment
};

/// Named parameters in stable insertion order (serialization relies on it),
/// each carrying its gradient buffer and optimizer moments.
template <typename T>
class ParameterStore {
public:
    Tensor<T>& create(const std::string& name, Tensor<T> init) {
        if (index_.count(name)) throw Error("parameter '" + name + "' already exists");
        index_.emplace(name, entries_.size());
        entries_.emplace_back(name, Param<T>{std::move(init), {}, {}, {}});
        Param<T>& p = entries_.back().second;
        p.grad = Tensor<T>::zeros(p.value.shape);
        p.m = Tensor<T>::zeros(p.value.shape);
        p.v = Tensor<T>::zeros(p.value.shape);
        return p.value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Param<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
        return entries_[it->second].second;
    }
    const Param<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
        return entries_[it->second].second;
    }

    size_t size() const { return entries_.size(); }
    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }

    std::vector<std::pair<std::string, Param<T>>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Param<T>>>& entries() const { return entries_; }

    void zero_grads() {
        for (auto& [name, p] : entries_)
            std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
    }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& [name, p] : entries_) n += p.value.size();
        return n;
    }

    /// One Adam update over every parameter from the stored gradients.
    /// Bias correction uses the incremented step count.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        ++step_;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (auto& [name, p] : entries_) {
            if (!p.grad.same_shape(p.value))
                throw Error("adam_step: gradient shape mismatch for '" + name + "'");
            for (size_t i = 0; i < p.value.data.size(); ++i) {
                double g = static_cast<double>(p.grad.data[i]);
                double m = beta1 * static_cast<double>(p.m.data[i]) + (1.0 - beta1) * g;
                double v = beta2 * static_cast<double>(p.v.data[i]) + (1.0 - beta2) * g * g;
                p.m.data[i] = static_cast<T>(m);
                p.v.data[i] = static_cast<T>(v);
                double mhat = m / bc1;
                double vhat = v / bc2;
                p.value.data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& [name, p] : entries_) out.create(name, p.value.template cast<U>());
        out.set_step(step_);
        return out;
    }

private:
    std::vector<std::pair<std::string, Param<T>>> entries_;
    std::unordered_map<std::string, size_t> index_;
    int64_t step_ = 0;
};

/// Binds every store parameter as a tape leaf; lets the forward pass look
/// vars up by name and the training loop read gradients back out. With
/// trainable = false the leaves are constants, so evaluation passes skip
/// gradient bookkeeping entirely.
template <typename T>
class Bound {
public:
    Bound(Tape<T>& tape, const ParameterStore<T>& store, bool trainable = true) : tape_(&tape) {
        for (const auto& [name, p] : store.entries())
            vars_.emplace(name, trainable ? tape.param(p.value, name) : tape.input(p.value));
    }

    Var operator[](const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw Error("unbound parameter '" + name + "'");
        return it->second;
    }

    /// Copies accumulated tape gradients into the store's grad buffers.
    /// Parameters untouched by the loss get zero gradients.
    void harvest_grads(ParameterStore<T>& store) const {
        for (auto& [name, p] : store.entries()) {
            const Tensor<T>& g = tape_->grad(vars_.at(name));
            p.grad = g;
        }
    }

private:
    Tape<T>* tape_;
    std::unordered_map<std::string, Var> vars_;
};

/// Copies every named tape gradient into the matching store parameter;
/// parameters the loss never touched end up with zero gradients.
template <typename T>
void harvest_grads(Tape<T>& tape, ParameterStore<T>& store) {
    store.zero_grads();
    for (const auto& [name, idx] : tape.named_params())
        if (store.has(name)) store.at(name).grad = tape.grad(Var{idx});
}

}  // namespace geoadapt::nn
