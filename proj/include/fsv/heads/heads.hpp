#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fsv/embed/embed.hpp"

namespace fsv::heads {

enum class HeadKind { prototypical, matching, learned };

std::string_view to_string(HeadKind h);
/// Accepts "proto", "prototypical", "matching", "learned".
HeadKind parse_head(std::string_view s);

/// Embedding form a head consumes; flat heads also accept spatial maps,
/// which they compare element-wise.
bool head_accepts(HeadKind head, embed::Form form);

template <class T>
using Embedding = embed::BasicVideoEmbedding<T>;

/// n * k labelled embeddings, exactly k per class 0..n-1.
template <class T>
struct BasicSupportSet {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<Embedding<T>> embeddings;
    std::vector<std::size_t> labels;

    /// Throws ShapeError on a count, label or form/dimension violation.
    void validate() const;
};

using SupportSet = BasicSupportSet<float>;

/// Sum of squared element differences, shape {1}.
template <class T>
dc::BasicTensor<T> squared_euclidean(const dc::BasicTensor<T>& a, const dc::BasicTensor<T>& b);

/// z_c = mean over class-c supports of -d(query, support), shape {n}.
template <class T>
dc::BasicTensor<T> matching_logits(const Embedding<T>& query, const BasicSupportSet<T>& support);

/// Per-class mean of the support embeddings, ordered by class index.
template <class T>
std::vector<Embedding<T>> compute_prototypes(const BasicSupportSet<T>& support);

/// z_c = -d(query, prototype_c), shape {n}.
template <class T>
dc::BasicTensor<T> prototypical_logits(const Embedding<T>& query, const std::vector<Embedding<T>>& prototypes);

/// Relation score per class: channel-concatenate query and prototype, then
/// conv3x3 -> relu -> conv3x3 -> relu (64 channels, pad 1), global average
/// pool and an affine map to one scalar. Shape {n}.
template <class T>
dc::BasicTensor<T> learned_metric_logits(const Embedding<T>& query, const std::vector<Embedding<T>>& prototypes,
                                         const dc::BasicParameters<T>& params, const std::string& prefix = "head");

/// Registers the relation module for embeddings with `channels` channels.
template <class T>
void init_learned_metric(dc::BasicParameters<T>& params, std::size_t channels, std::mt19937_64& rng,
                         const std::string& prefix = "head", std::size_t hidden = 64);

/// Shared entry point. `prototypes` may be precomputed to save work across queries.
template <class T>
dc::BasicTensor<T> head_logits(HeadKind head, const Embedding<T>& query, const BasicSupportSet<T>& support,
                               const std::vector<Embedding<T>>& prototypes, const dc::BasicParameters<T>& params);

struct Classification {
    std::size_t label = 0;
    std::vector<double> probabilities;
};

/// Softmax probabilities and the argmax, ties resolved toward the lowest index.
template <class T>
Classification classify(std::span<const T> logits);

}  // namespace fsv::heads
