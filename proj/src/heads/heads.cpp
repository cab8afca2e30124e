#include "fsv/heads/heads.hpp"

#include <algorithm>
#include <cmath>

namespace fsv::heads {

using dc::BasicParameters;
using dc::BasicTensor;

std::string_view to_string(HeadKind h) {
    switch (h) {
        case HeadKind::prototypical: return "proto";
        case HeadKind::matching: return "matching";
        case HeadKind::learned: return "learned";
    }
    return "?";
}

HeadKind parse_head(std::string_view s) {
    if (s == "proto" || s == "prototypical") return HeadKind::prototypical;
    if (s == "matching") return HeadKind::matching;
    if (s == "learned") return HeadKind::learned;
    throw ConfigError("unknown head '" + std::string(s) + "' (expected proto, matching or learned)");
}

bool head_accepts(HeadKind head, embed::Form form) {
    return head != HeadKind::learned || form == embed::Form::spatial;
}

template <class T>
void BasicSupportSet<T>::validate() const {
    if (n < 2 || k < 1) throw ShapeError("support set needs n >= 2 and k >= 1");
    if (embeddings.size() != n * k || labels.size() != n * k)
        throw ShapeError("support set holds " + std::to_string(embeddings.size()) + " entries, expected " +
                         std::to_string(n * k));
    std::vector<std::size_t> count(n, 0);
    for (auto l : labels) {
        if (l >= n) throw ShapeError("support label " + std::to_string(l) + " out of range");
        ++count[l];
    }
    for (auto c : count)
        if (c != k) throw ShapeError("support set must hold exactly k entries per class");
    for (const auto& e : embeddings)
        if (e.form != embeddings[0].form || e.data.shape() != embeddings[0].data.shape())
            throw ShapeError("support embeddings differ in form or shape");
}

template <class T>
BasicTensor<T> squared_euclidean(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.numel() != b.numel())
        throw ShapeError("squared_euclidean: dims differ (" + dc::to_string(a.shape()) + " vs " +
                         dc::to_string(b.shape()) + ")");
    return dc::squared_distance(a, b);
}

namespace {

template <class T>
void check_query(const Embedding<T>& query, const Embedding<T>& ref) {
    if (query.form != ref.form || query.data.shape() != ref.data.shape())
        throw ShapeError("query embedding " + dc::to_string(query.data.shape()) + " does not match " +
                         dc::to_string(ref.data.shape()));
}

}  // namespace

template <class T>
BasicTensor<T> matching_logits(const Embedding<T>& query, const BasicSupportSet<T>& support) {
    support.validate();
    check_query(query, support.embeddings[0]);
    std::vector<std::vector<BasicTensor<T>>> per_class(support.n);
    for (std::size_t i = 0; i < support.embeddings.size(); ++i)
        per_class[support.labels[i]].push_back(squared_euclidean(query.data, support.embeddings[i].data));
    std::vector<BasicTensor<T>> z;
    z.reserve(support.n);
    for (auto& d : per_class) z.push_back(dc::scale(dc::mean(dc::concat(d, 0), 0), T(-1)));
    return dc::concat(z, 0);
}

template <class T>
std::vector<Embedding<T>> compute_prototypes(const BasicSupportSet<T>& support) {
    support.validate();
    std::vector<std::vector<BasicTensor<T>>> per_class(support.n);
    for (std::size_t i = 0; i < support.embeddings.size(); ++i)
        per_class[support.labels[i]].push_back(support.embeddings[i].data);
    std::vector<Embedding<T>> out;
    out.reserve(support.n);
    for (auto& members : per_class) {
        auto m = members.size() == 1 ? members[0] : dc::mean(dc::stack(members), 0);
        out.push_back({support.embeddings[0].form, m});
    }
    return out;
}

template <class T>
BasicTensor<T> prototypical_logits(const Embedding<T>& query, const std::vector<Embedding<T>>& prototypes) {
    if (prototypes.empty()) throw ShapeError("no prototypes");
    std::vector<BasicTensor<T>> z;
    z.reserve(prototypes.size());
    for (const auto& p : prototypes) {
        check_query(query, p);
        z.push_back(dc::scale(squared_euclidean(query.data, p.data), T(-1)));
    }
    return dc::concat(z, 0);
}

template <class T>
BasicTensor<T> learned_metric_logits(const Embedding<T>& query, const std::vector<Embedding<T>>& prototypes,
                                     const BasicParameters<T>& params, const std::string& prefix) {
    if (query.form != embed::Form::spatial)
        throw ConfigError("the learned head needs spatial embeddings; flat aggregators are incompatible");
    if (prototypes.empty()) throw ShapeError("no prototypes");
    std::vector<BasicTensor<T>> pairs;
    pairs.reserve(prototypes.size());
    for (const auto& p : prototypes) {
        check_query(query, p);
        pairs.push_back(dc::concat(std::vector<BasicTensor<T>>{query.data, p.data}, 0));
    }
    auto x = dc::stack(pairs);  // [n x 2C x H x W]
    x = dc::relu(dc::conv2d(x, params.at(prefix + "/conv1.w"), params.at(prefix + "/conv1.b"), {1, 1}, {1, 1}));
    x = dc::relu(dc::conv2d(x, params.at(prefix + "/conv2.w"), params.at(prefix + "/conv2.b"), {1, 1}, {1, 1}));
    const std::size_t n = x.dim(0), c = x.dim(1);
    auto pooled = dc::mean(dc::reshape(x, {n, c, x.dim(2) * x.dim(3)}), 2);
    auto z = dc::add(dc::matmul(pooled, params.at(prefix + "/fc.w")), params.at(prefix + "/fc.b"));
    return dc::reshape(z, {n});
}

template <class T>
void init_learned_metric(BasicParameters<T>& params, std::size_t channels, std::mt19937_64& rng,
                         const std::string& prefix, std::size_t hidden) {
    const std::size_t in = 2 * channels;
    params.add(prefix + "/conv1.w", dc::uniform_tensor<T>({hidden, in, 3, 3}, std::sqrt(6.0 / (in * 9.0)), rng));
    params.add(prefix + "/conv1.b", BasicTensor<T>({hidden}));
    params.add(prefix + "/conv2.w", dc::uniform_tensor<T>({hidden, hidden, 3, 3}, std::sqrt(6.0 / (hidden * 9.0)), rng));
    params.add(prefix + "/conv2.b", BasicTensor<T>({hidden}));
    params.add(prefix + "/fc.w", dc::uniform_tensor<T>({hidden, 1}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
    params.add(prefix + "/fc.b", BasicTensor<T>({1}));
}

template <class T>
BasicTensor<T> head_logits(HeadKind head, const Embedding<T>& query, const BasicSupportSet<T>& support,
                           const std::vector<Embedding<T>>& prototypes, const BasicParameters<T>& params) {
    switch (head) {
        case HeadKind::matching: return matching_logits(query, support);
        case HeadKind::prototypical: return prototypical_logits(query, prototypes);
        case HeadKind::learned: return learned_metric_logits(query, prototypes, params);
    }
    throw ConfigError("unknown head");
}

template <class T>
Classification classify(std::span<const T> logits) {
    if (logits.empty()) throw ShapeError("classify: empty logits");
    Classification c;
    const auto p = dc::softmax(logits);
    c.probabilities.assign(p.begin(), p.end());
    // std::max_element returns the first maximum, i.e. the lowest index on ties.
    c.label = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    return c;
}

#define FSV_INSTANTIATE_HEADS(T)                                                                                      \
    template struct BasicSupportSet<T>;                                                                               \
    template BasicTensor<T> squared_euclidean(const BasicTensor<T>&, const BasicTensor<T>&);                          \
    template BasicTensor<T> matching_logits(const Embedding<T>&, const BasicSupportSet<T>&);                          \
    template std::vector<Embedding<T>> compute_prototypes(const BasicSupportSet<T>&);                                 \
    template BasicTensor<T> prototypical_logits(const Embedding<T>&, const std::vector<Embedding<T>>&);               \
    template BasicTensor<T> learned_metric_logits(const Embedding<T>&, const std::vector<Embedding<T>>&,              \
                                                  const BasicParameters<T>&, const std::string&);                     \
    template void init_learned_metric(BasicParameters<T>&, std::size_t, std::mt19937_64&, const std::string&,         \
                                      std::size_t);                                                                   \
    template BasicTensor<T> head_logits(HeadKind, const Embedding<T>&, const BasicSupportSet<T>&,                     \
                                        const std::vector<Embedding<T>>&, const BasicParameters<T>&);                 \
    template Classification classify(std::span<const T>);

FSV_INSTANTIATE_HEADS(float)
FSV_INSTANTIATE_HEADS(double)

}  // namespace fsv::heads
