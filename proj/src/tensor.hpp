#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace sas {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return s.empty() ? 0 : n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

template <class T>
struct TensorStorage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until backward materializes it
    bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor handle. Copies are cheap and share the underlying
// buffer; ops never mutate an existing tensor, they produce fresh ones.
// The gradient buffer lives next to the value so every handle of a parameter
// sees the gradient written by Graph::backward.
template <class T>
class Tensor {
  public:
    using Storage = detail::TensorStorage<T>;

    Tensor() = default;

    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

    static Tensor full(Shape shape, T v) {
        auto s = std::make_shared<Storage>();
        s->value.assign(shape_numel(shape), v);
        s->shape = std::move(shape);
        return Tensor(std::move(s));
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        if (shape_numel(shape) != data.size())
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        auto s = std::make_shared<Storage>();
        s->shape = std::move(shape);
        s->value = std::move(data);
        return Tensor(std::move(s));
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    static Tensor random_normal(Shape shape, Rng& rng, double stddev) {
        Tensor t = zeros(std::move(shape));
        for (auto& x : t.s_->value) x = static_cast<T>(rng.normal() * stddev);
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t numel() const { return s_->value.size(); }
    std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
    std::size_t rows() const { return s_->shape.at(0); }
    std::size_t cols() const { return s_->shape.at(s_->shape.size() - 1); }
    bool is_scalar() const { return numel() == 1; }

    T* data() { return s_->value.data(); }
    const T* data() const { return s_->value.data(); }
    std::span<const T> values() const { return {s_->value.data(), s_->value.size()}; }

    T& at(std::size_t i) { return s_->value.at(i); }
    T at(std::size_t i) const { return s_->value.at(i); }
    T& at(std::size_t r, std::size_t c) { return s_->value.at(r * cols() + c); }
    T at(std::size_t r, std::size_t c) const { return s_->value.at(r * cols() + c); }

    bool requires_grad() const { return s_ && s_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        s_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return s_ && !s_->grad.empty(); }
    std::span<const T> grad() const {
        return s_ ? std::span<const T>{s_->grad.data(), s_->grad.size()} : std::span<const T>{};
    }
    T grad_at(std::size_t i) const { return s_->grad.at(i); }
    void zero_grad() {
        if (s_) s_->grad.clear();
    }

    // Deep copy of the values; gradient state is not carried over.
    Tensor clone() const {
        auto s = std::make_shared<Storage>();
        s->shape = s_->shape;
        s->value = s_->value;
        s->requires_grad = s_->requires_grad;
        return Tensor(std::move(s));
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(s_->value.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(s_->value[i]);
        Tensor<U> t = Tensor<U>::from(s_->shape, std::move(out));
        t.set_requires_grad(s_->requires_grad);
        return t;
    }

    bool same_shape(const Tensor& o) const { return s_->shape == o.s_->shape; }

    bool all_finite() const {
        for (T x : s_->value)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    std::shared_ptr<Storage> storage() const { return s_; }

  private:
    explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
    std::shared_ptr<Storage> s_;

    template <class U>
    friend class Tensor;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// i.i.d. Normal(0, 2/fan_in) samples from the seeded stream. Samples are
// drawn in double and narrowed, so float and double builds of the same model
// see the same underlying draws.
template <class T>
Tensor<T> kaiming_normal(Rng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
    if (fan_in < 1) throw ContractError("kaiming_normal: fan_in must be >= 1");
    double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    return Tensor<T>::random_normal({rows, cols}, rng, stddev);
}

}  // namespace sas
