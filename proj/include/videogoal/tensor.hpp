#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "videogoal/common.hpp"

namespace videogoal::nn {

// Dense row-major 2-D tensor. Scalars are 1x1, vectors 1xd.
template <typename S>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<S> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, S(0)) {}
    Tensor(int r, int c, std::vector<S> data) : rows(r), cols(c), v(std::move(data)) {}

    size_t size() const { return v.size(); }
    S& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    S at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    S* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const S* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }

    static Tensor full(int r, int c, S value) {
        Tensor t(r, c);
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out(rows, cols);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
        return out;
    }
};

template <typename S>
inline void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

}  // namespace videogoal::nn
