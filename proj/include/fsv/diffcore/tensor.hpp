#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fsv/error.hpp"

namespace fsv::dc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    // Position on the tape identified by tape_generation; stale once that tape resets.
    std::int64_t node_id = -1;
    std::uint64_t tape_generation = 0;
};

/// Row-major n-dimensional array with shared ownership. Copies of a tensor
/// alias the same node; use clone() for a deep copy.
template <class T>
class BasicTensor {
   public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T(0)) : node_(std::make_shared<TensorNode<T>>()) {
        validate_shape(shape);
        node_->data.assign(dc::numel(shape), fill);
        node_->shape = std::move(shape);
    }

    BasicTensor(Shape shape, std::vector<T> data) : node_(std::make_shared<TensorNode<T>>()) {
        validate_shape(shape);
        if (dc::numel(shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + dc::to_string(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
    }

    static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

    bool defined() const { return node_ != nullptr; }

    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    std::span<T> mutable_data() { return node_->data; }
    const T& operator[](std::size_t i) const { return node_->data[i]; }

    T item() const {
        if (numel() != 1) {
            throw ShapeError("item() on tensor of shape " + dc::to_string(shape()));
        }
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() {
        ensure_grad();
        return node_->grad;
    }
    void ensure_grad() {
        if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), T(0));
    }
    void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }
    void clear_grad() { node_->grad.clear(); }

    std::int64_t node_id() const { return node_->node_id; }

    /// Deep copy of the values; the copy is a fresh leaf.
    BasicTensor clone() const {
        BasicTensor out(node_->shape, node_->data);
        out.node_->requires_grad = node_->requires_grad;
        return out;
    }

    BasicTensor detach() const { return BasicTensor(node_->shape, node_->data); }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

   private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
        for (auto d : shape) {
            if (d == 0) throw ShapeError("tensor dimensions must be positive: " + dc::to_string(shape));
        }
    }

    std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& t) {
    std::vector<To> out(t.data().begin(), t.data().end());
    return BasicTensor<To>(t.shape(), std::move(out));
}

/// Ordered record of differentiable operations. A tensor created by an
/// operation whose inputs require grad is registered on the thread's active
/// tape; backward() replays the records in reverse.
template <class T>
class BasicTape {
   public:
    using Node = TensorNode<T>;

    struct Record {
        std::string op;
        std::vector<std::int64_t> inputs;
        std::int64_t output = -1;
        std::function<void()> backward;
    };

    BasicTape() : generation_(next_generation()) {}
    BasicTape(const BasicTape&) = delete;
    BasicTape& operator=(const BasicTape&) = delete;

    static BasicTape* active() { return active_; }

    /// Registers `output = op(inputs)`. Inputs get ids on first sight, the
    /// output always gets a fresh id, so every input id precedes its output id.
    void record(std::string op, const std::vector<const Node*>& inputs, Node& output,
                std::function<void()> backward) {
        if (consumed_) throw TapeError("tape already consumed by backward(); reset() it first");
        Record rec;
        rec.op = std::move(op);
        rec.inputs.reserve(inputs.size());
        for (const Node* in : inputs) rec.inputs.push_back(id_for(const_cast<Node&>(*in)));
        output.tape_generation = generation_;
        output.node_id = next_id_++;
        rec.output = output.node_id;
        rec.backward = std::move(backward);
        records_.push_back(std::move(rec));
    }

    bool owns(const Node& node) const { return node.tape_generation == generation_ && node.node_id >= 0; }

    const std::vector<Record>& records() const { return records_; }
    bool consumed() const { return consumed_; }

    void backward(const BasicTensor<T>& loss) {
        if (!loss.defined() || loss.numel() != 1) throw TapeError("backward() needs a scalar loss");
        if (!owns(*loss.node())) throw TapeError("loss is not on the active tape");
        if (consumed_) throw TapeError("backward() called twice without tape reset");
        consumed_ = true;
        loss.node()->grad.assign(1, T(1));
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
    }

    void reset() {
        records_.clear();
        consumed_ = false;
        generation_ = next_generation();
        next_id_ = 0;
    }

   private:
    template <class>
    friend class TapeScope;

    static std::uint64_t next_generation() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1);
    }

    std::int64_t id_for(Node& node) {
        if (node.tape_generation != generation_) {
            node.tape_generation = generation_;
            node.node_id = next_id_++;
        }
        return node.node_id;
    }

    inline static thread_local BasicTape* active_ = nullptr;

    std::vector<Record> records_;
    std::uint64_t generation_;
    std::int64_t next_id_ = 0;
    bool consumed_ = false;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

/// Makes `tape` the thread's active tape for the scope's lifetime.
template <class T>
class TapeScope {
   public:
    explicit TapeScope(BasicTape<T>& tape) : previous_(BasicTape<T>::active_) {
        BasicTape<T>::active_ = &tape;
    }
    ~TapeScope() { BasicTape<T>::active_ = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

   private:
    BasicTape<T>* previous_;
};

/// Backpropagates from `loss` through the active tape.
template <class T>
void backward(const BasicTensor<T>& loss) {
    auto* tape = BasicTape<T>::active();
    if (tape == nullptr) throw TapeError("backward() without an active tape");
    tape->backward(loss);
}

}  // namespace fsv::dc
