#include "fsv/diffcore/params.hpp"

#include <cmath>

namespace fsv::dc {

template <class T>
const BasicTensor<T>& BasicParameters<T>::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

template <class T>
BasicTensor<T>& BasicParameters<T>::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown parameter: " + name);
    return it->second;
}

template <class T>
std::size_t BasicParameters<T>::element_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.numel();
    return n;
}

template <class T>
void BasicParameters<T>::zero_grad() {
    for (auto& [_, t] : tensors_) t.zero_grad();
}

template <class T>
BasicParameters<T> BasicParameters<T>::snapshot() const {
    BasicParameters copy;
    for (const auto& [name, t] : tensors_) copy.add(name, t.detach());
    return copy;
}

template <class T>
void adam_step(BasicParameters<T>& params, BasicAdamState<T>& state, const AdamConfig& config) {
    for (const auto& [name, t] : params) {
        if (!t.has_grad()) throw Error("adam_step: parameter '" + name + "' has no gradient");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (auto& [name, p] : params) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != p.numel()) m.assign(p.numel(), T(0));
        if (v.size() != p.numel()) v.assign(p.numel(), T(0));
        auto data = p.mutable_data();
        auto grad = p.grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            const double mi = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            const double vi = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            data[i] = static_cast<T>(data[i] - config.lr * mhat / (std::sqrt(vhat) + config.eps));
        }
    }
}

template <class T>
BasicTensor<T> uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = static_cast<T>(dist(rng));
    return BasicTensor<T>(std::move(shape), std::move(data));
}

template class BasicParameters<float>;
template class BasicParameters<double>;
template void adam_step(BasicParameters<float>&, BasicAdamState<float>&, const AdamConfig&);
template void adam_step(BasicParameters<double>&, BasicAdamState<double>&, const AdamConfig&);
template BasicTensor<float> uniform_tensor(Shape, double, std::mt19937_64&);
template BasicTensor<double> uniform_tensor(Shape, double, std::mt19937_64&);

}  // namespace fsv::dc
