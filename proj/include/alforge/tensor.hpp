#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace alforge {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until touched by backward
};

// Shared handle to a dense row-major float64 array. Copying a Tensor
// aliases the underlying storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(static_cast<size_t>(shape_numel(t.impl_->shape)), 0.0);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("Tensor: shape/data size mismatch");
        Tensor t;
        t.impl_ = std::make_shared<TensorImpl>();
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(data);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    // Shallow const: a const Tensor is a const handle, the storage it
    // aliases stays mutable (shared-ownership semantics).
    double* data() const { return impl_->data.data(); }
    std::vector<double>& vec() const { return impl_->data; }

    double item() const {
        if (numel() != 1) throw std::invalid_argument("Tensor::item on non-scalar");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) const { impl_->requires_grad = rg; }

    std::vector<double>& grad() const {
        ensure_grad();
        return impl_->grad;
    }
    bool has_grad() const { return !impl_->grad.empty(); }

    void ensure_grad() const {
        if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
    }
    void zero_grad() const {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    }

    // Deep copy; grad is not copied.
    Tensor clone(bool requires_grad = false) const {
        return from_data(impl_->shape, impl_->data, requires_grad);
    }

    bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

struct TapeEntry {
    Tensor output;
    std::vector<Tensor> inputs;
    std::function<void()> backward;
};

// Define-by-run gradient tape. Ops append entries in execution order,
// which is a topological order by construction; backward replays them
// in reverse exactly once.
class Tape {
public:
    void record(Tensor output, std::vector<Tensor> inputs, std::function<void()> backward) {
        entries_.push_back({std::move(output), std::move(inputs), std::move(backward)});
    }

    size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    // Populates grads of every requires_grad tensor reachable from loss.
    // Re-running backward on the same tape resets grads first, so the
    // result is identical both times.
    void backward(Tensor loss) {
        if (loss.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
        for (auto& e : entries_) {
            e.output.zero_grad();
            for (auto& in : e.inputs) in.zero_grad();
        }
        loss.ensure_grad();
        loss.grad()[0] = 1.0;
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            if (it->output.has_grad()) it->backward();
        }
    }

private:
    std::vector<TapeEntry> entries_;
};

Tape* active_tape();

// Scoped activation of a tape; ops only record while one is active.
class TapeGuard {
public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* prev_;
};

}  // namespace alforge
