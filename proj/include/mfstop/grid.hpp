#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mfstop {

// Uniform lattice on [0,T] x [x_min, x_max]; nodes are t_n = n*dt, x_j = x_min + j*dx.
struct Grid {
    double x_min = 0.0;
    double x_max = 1.0;
    std::size_t nx = 2;
    double horizon = 1.0;
    std::size_t nt = 1;
    double dx = 0.5;
    double dt = 1.0;

    std::size_t time_nodes() const { return nt + 1; }
    std::size_t space_nodes() const { return nx + 1; }
    double t(std::size_t n) const { return n == nt ? horizon : static_cast<double>(n) * dt; }
    double x(std::size_t j) const { return j == nx ? x_max : x_min + static_cast<double>(j) * dx; }
    double width() const { return x_max - x_min; }

    // Index of t if it is a node (relative tolerance 1e-9 of dt).
    std::optional<std::size_t> time_index(double t) const;
    // Node nearest to x, clamped to the domain.
    std::size_t nearest_x(double x) const;

    bool operator==(const Grid& o) const = default;
};

Grid build_grid(double x_min, double x_max, std::size_t nx, double horizon, std::size_t nt);

// Row-major (time, space) array.
template <class T>
class Field2D {
public:
    Field2D() = default;
    Field2D(std::size_t rows, std::size_t cols, T value = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}
    explicit Field2D(const Grid& g, T value = T{}) : Field2D(g.time_nodes(), g.space_nodes(), value) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const Field2D& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using NodeField = Field2D<double>;
using NodeMask = Field2D<unsigned char>;

}  // namespace mfstop
