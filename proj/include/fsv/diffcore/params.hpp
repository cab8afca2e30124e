#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsv/diffcore/tensor.hpp"

namespace fsv::dc {

/// Named trainable tensors. Iteration is lexicographic by name.
template <class T>
class BasicParameters {
   public:
    using Map = std::map<std::string, BasicTensor<T>>;

    /// Registers `tensor` (marked requires_grad) under a unique name.
    BasicTensor<T>& add(const std::string& name, BasicTensor<T> tensor) {
        if (tensors_.count(name)) throw Error("duplicate parameter name: " + name);
        tensor.set_requires_grad(true);
        return tensors_.emplace(name, std::move(tensor)).first->second;
    }

    bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
    const BasicTensor<T>& at(const std::string& name) const;
    BasicTensor<T>& at(const std::string& name);

    std::size_t size() const { return tensors_.size(); }
    std::size_t element_count() const;

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    void zero_grad();

    /// Copies values by name from `other`; names and element counts must match.
    template <class U>
    void assign_from(const BasicParameters<U>& other) {
        if (other.size() != size()) throw Error("parameter sets differ in size");
        for (auto& [name, t] : tensors_) {
            const auto& src = other.at(name);
            if (src.shape() != t.shape()) throw ShapeError("parameter shape mismatch for " + name);
            auto dst = t.mutable_data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
        }
    }

    /// Immutable deep copy, safe to share read-only across workers.
    BasicParameters snapshot() const;

   private:
    Map tensors_;
};

using Parameters = BasicParameters<float>;
using Parameters64 = BasicParameters<double>;

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments per parameter, keyed like the parameters.
template <class T>
struct BasicAdamState {
    std::map<std::string, std::vector<T>> m;
    std::map<std::string, std::vector<T>> v;
    std::uint64_t step = 0;
};

using AdamState = BasicAdamState<float>;

/// One bias-corrected Adam update of every parameter. Throws if any
/// parameter has no gradient buffer.
template <class T>
void adam_step(BasicParameters<T>& params, BasicAdamState<T>& state, const AdamConfig& config);

/// Uniform(-bound, bound) initialized tensor.
template <class T>
BasicTensor<T> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng);

}  // namespace fsv::dc
