#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape is a Wengert list: every forward op appends one node whose inputs
// were appended before it, so reverse iteration is a valid topological order.
// Parameters enter the tape as leaves that point at external storage; their
// gradients are accumulated straight into caller-owned buffers.

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polynet {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Shape {
    int rows = 1;
    int cols = 1;

    [[nodiscard]] int size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

/// Numeric storage. Fixed alignment keeps Eigen's vectorized reductions
/// bit-reproducible: they peel a prefix that depends on the pointer.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Plain value container: shape plus a flat row-major buffer.
template <typename T>
struct Tensor {
    Shape shape;
    Buffer<T> values;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), values(static_cast<std::size_t>(s.size()), T(0)) {}
    Tensor(Shape s, const std::vector<T>& v) : Tensor(s, Buffer<T>(v.begin(), v.end())) {}
    Tensor(Shape s, std::initializer_list<T> v) : Tensor(s, Buffer<T>(v)) {}
    Tensor(Shape s, Buffer<T> v) : shape(s), values(std::move(v))
    {
        if (static_cast<int>(values.size()) != shape.size())
            throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                             std::to_string(values.size()) + " values");
    }

    T& operator()(int r, int c) { return values[static_cast<std::size_t>(r * shape.cols + c)]; }
    T operator()(int r, int c) const { return values[static_cast<std::size_t>(r * shape.cols + c)]; }
};

struct Var {
    std::uint32_t id = UINT32_MAX;
    [[nodiscard]] bool valid() const { return id != UINT32_MAX; }
};

enum class Op : std::uint8_t {
    Leaf,
    MatMul,
    MatMulNT,
    Affine,
    Add,
    Sub,
    Mul,
    Scale,
    Concat,
    Relu,
    Tanh,
    Exp,
    Log,
    MaskedSoftmax,
    Sum,
    MeanRows,
    GatherRows,
    GatherCols,
    Pick,
    InstanceNorm,
};

const char* op_name(Op op);

template <typename T>
class Tape {
public:
    /// Masked logits are shifted by this before exponentiation.
    static constexpr T kMaskedLogit = T(-1e9);
    static constexpr T kNormEps = T(1e-5);

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// While recording is off, new nodes never require gradients and
    /// parameter leaves are not bound to their gradient buffers.
    void set_recording(bool on) { recording_ = on; }
    [[nodiscard]] bool recording() const { return recording_; }

    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] std::size_t mark() const { return size_; }
    /// Drops every node appended after `m`; storage is kept for reuse.
    void rewind(std::size_t m);
    void clear() { rewind(0); }

    // Leaves.
    Var constant(const Tensor<T>& t);
    Var constant(Shape s, std::span<const T> values);
    Var variable(const Tensor<T>& t);
    /// Binds external storage. `grad` may be null (frozen parameter).
    Var parameter(const Tensor<T>& value, T* grad);

    // Forward ops.
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);
    Var affine(Var x, Var w, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, T s);
    Var concat(std::span<const Var> parts);
    Var relu(Var a);
    Var tanh(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var masked_softmax(Var logits, std::span<const std::uint8_t> mask);
    Var sum(Var a);
    Var mean_rows(Var a);
    Var gather_rows(Var a, std::span<const int> rows);
    Var gather_cols(Var a, int start, int count);
    Var pick(Var a, std::span<const int> cols);
    Var instance_norm(Var x, Var gamma, Var beta);

    void backward(Var loss);

    [[nodiscard]] Shape shape(Var v) const { return node(v).shape; }
    [[nodiscard]] std::span<const T> value(Var v) const;
    [[nodiscard]] T item(Var v) const;
    [[nodiscard]] bool requires_grad(Var v) const { return node(v).requires_grad; }
    /// Gradient of the last backward pass w.r.t. a tape-owned variable.
    [[nodiscard]] std::span<const T> grad(Var v) const;
    [[nodiscard]] Op op(Var v) const { return node(v).op; }

private:
    static constexpr std::uint32_t kNone = UINT32_MAX;

    struct Node {
        Op op = Op::Leaf;
        Shape shape;
        std::uint32_t in[3] = {kNone, kNone, kNone};
        T scalar = T(0);
        int iarg = 0;
        bool requires_grad = false;
        bool has_grad = false;
        const T* ext = nullptr;
        T* ext_grad = nullptr;
        Buffer<T> value;
        Buffer<T> grad;
        Buffer<T> aux;
        std::vector<std::int32_t> index;
        std::vector<std::uint8_t> mask;

        [[nodiscard]] const T* data() const { return ext ? ext : value.data(); }
    };

    Node& node(Var v);
    const Node& node(Var v) const;
    Node& push(Op op, Shape shape, std::initializer_list<Var> inputs);
    void finish(Node& n);
    T* grad_buffer(std::uint32_t id);
    void backward_node(std::uint32_t id);
    Var broadcast_binary(Op op, Var a, Var b);

    std::deque<Node> nodes_;
    std::size_t size_ = 0;
    bool recording_ = true;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace polynet
