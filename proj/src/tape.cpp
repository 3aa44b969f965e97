#include "polynet/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace polynet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

template <typename T>
CMap<T> cmap(const T* p, Shape s) { return CMap<T>(p, s.rows, s.cols); }
template <typename T>
MMap<T> mmap(T* p, Shape s) { return MMap<T>(p, s.rows, s.cols); }

void require(bool ok, const char* op, const std::string& what)
{
    if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

}  // namespace

std::string to_string(Shape s) { return "(" + std::to_string(s.rows) + "," + std::to_string(s.cols) + ")"; }

const char* op_name(Op op)
{
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::Affine: return "affine";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Concat: return "concat";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::MaskedSoftmax: return "masked_softmax";
    case Op::Sum: return "sum";
    case Op::MeanRows: return "mean_rows";
    case Op::GatherRows: return "gather_rows";
    case Op::GatherCols: return "gather_cols";
    case Op::Pick: return "pick";
    case Op::InstanceNorm: return "instance_norm";
    }
    return "?";
}

template <typename T>
void Tape<T>::rewind(std::size_t m)
{
    if (m > size_) throw std::out_of_range("Tape::rewind past end");
    size_ = m;
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v)
{
    if (v.id >= size_) throw std::out_of_range("variable is not on this tape");
    return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const
{
    if (v.id >= size_) throw std::out_of_range("variable is not on this tape");
    return nodes_[v.id];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::push(Op op, Shape shape, std::initializer_list<Var> inputs)
{
    // Validate before allocating so references into nodes_ stay usable.
    for (Var v : inputs)
        if (v.id >= size_) throw std::out_of_range(std::string(op_name(op)) + ": input is not on this tape");
    if (size_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[size_];
    ++size_;
    n.op = op;
    n.shape = shape;
    n.in[0] = n.in[1] = n.in[2] = kNone;
    n.scalar = T(0);
    n.iarg = 0;
    n.requires_grad = false;
    n.has_grad = false;
    n.ext = nullptr;
    n.ext_grad = nullptr;
    n.value.resize(static_cast<std::size_t>(shape.size()));
    n.aux.clear();
    n.index.clear();
    n.mask.clear();
    int k = 0;
    for (Var v : inputs) {
        n.in[k++] = v.id;
        if (recording_ && nodes_[v.id].requires_grad) n.requires_grad = true;
    }
    return n;
}

template <typename T>
void Tape<T>::finish(Node& n)
{
    for (T x : n.value)
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op_name(n.op));
}

template <typename T>
Var Tape<T>::constant(const Tensor<T>& t)
{
    return constant(t.shape, t.values);
}

template <typename T>
Var Tape<T>::constant(Shape s, std::span<const T> values)
{
    require(static_cast<int>(values.size()) == s.size(), "constant", "value count does not match shape");
    Node& n = push(Op::Leaf, s, {});
    std::copy(values.begin(), values.end(), n.value.begin());
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::variable(const Tensor<T>& t)
{
    Var v = constant(t);
    nodes_[v.id].requires_grad = recording_;
    return v;
}

template <typename T>
Var Tape<T>::parameter(const Tensor<T>& value, T* grad)
{
    Node& n = push(Op::Leaf, value.shape, {});
    n.value.clear();
    n.ext = value.values.data();
    if (recording_ && grad != nullptr) {
        n.ext_grad = grad;
        n.requires_grad = true;
    }
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
std::span<const T> Tape<T>::value(Var v) const
{
    const Node& n = node(v);
    return {n.data(), static_cast<std::size_t>(n.shape.size())};
}

template <typename T>
T Tape<T>::item(Var v) const
{
    const Node& n = node(v);
    if (n.shape.size() != 1) throw ShapeError("item() on non-scalar of shape " + to_string(n.shape));
    return n.data()[0];
}

template <typename T>
std::span<const T> Tape<T>::grad(Var v) const
{
    const Node& n = node(v);
    if (!n.requires_grad) throw std::logic_error("gradient requested for a variable without requires_grad");
    if (n.ext_grad) return {n.ext_grad, static_cast<std::size_t>(n.shape.size())};
    if (!n.has_grad) {
        auto& g = const_cast<Node&>(n).grad;
        g.assign(static_cast<std::size_t>(n.shape.size()), T(0));
    }
    return {n.grad.data(), n.grad.size()};
}

// ---------------------------------------------------------------------------
// forward

template <typename T>
Var Tape<T>::matmul(Var a, Var b)
{
    Shape sa = node(a).shape, sb = node(b).shape;
    require(sa.cols == sb.rows, "matmul", to_string(sa) + " x " + to_string(sb));
    Node& n = push(Op::MatMul, {sa.rows, sb.cols}, {a, b});
    mmap(n.value.data(), n.shape).noalias() = cmap(nodes_[a.id].data(), sa) * cmap(nodes_[b.id].data(), sb);
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::matmul_nt(Var a, Var b)
{
    Shape sa = node(a).shape, sb = node(b).shape;
    require(sa.cols == sb.cols, "matmul_nt", to_string(sa) + " x " + to_string(sb) + "^T");
    Node& n = push(Op::MatMulNT, {sa.rows, sb.rows}, {a, b});
    mmap(n.value.data(), n.shape).noalias() =
        cmap(nodes_[a.id].data(), sa) * cmap(nodes_[b.id].data(), sb).transpose();
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::affine(Var x, Var w, Var b)
{
    Shape sx = node(x).shape, sw = node(w).shape, sb = node(b).shape;
    require(sx.cols == sw.rows, "affine", to_string(sx) + " x " + to_string(sw));
    require(sb.rows == 1 && sb.cols == sw.cols, "affine", "bias shape " + to_string(sb));
    Node& n = push(Op::Affine, {sx.rows, sw.cols}, {x, w, b});
    auto out = mmap(n.value.data(), n.shape);
    out.noalias() = cmap(nodes_[x.id].data(), sx) * cmap(nodes_[w.id].data(), sw);
    out.rowwise() += cmap(nodes_[b.id].data(), sb).row(0);
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::broadcast_binary(Op op, Var a, Var b)
{
    Shape sa = node(a).shape, sb = node(b).shape;
    const bool bcast = !(sa == sb);
    require(!bcast || (sb.rows == 1 && sb.cols == sa.cols), op_name(op),
            to_string(sa) + " vs " + to_string(sb));
    Node& n = push(op, sa, {a, b});
    n.iarg = bcast ? 1 : 0;
    const T* pa = nodes_[a.id].data();
    const T* pb = nodes_[b.id].data();
    T* out = n.value.data();
    for (int r = 0; r < sa.rows; ++r) {
        const T* rb = bcast ? pb : pb + r * sa.cols;
        const T* ra = pa + r * sa.cols;
        T* ro = out + r * sa.cols;
        switch (op) {
        case Op::Add:
            for (int c = 0; c < sa.cols; ++c) ro[c] = ra[c] + rb[c];
            break;
        case Op::Sub:
            for (int c = 0; c < sa.cols; ++c) ro[c] = ra[c] - rb[c];
            break;
        default:
            for (int c = 0; c < sa.cols; ++c) ro[c] = ra[c] * rb[c];
            break;
        }
    }
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::add(Var a, Var b) { return broadcast_binary(Op::Add, a, b); }
template <typename T>
Var Tape<T>::sub(Var a, Var b) { return broadcast_binary(Op::Sub, a, b); }
template <typename T>
Var Tape<T>::mul(Var a, Var b) { return broadcast_binary(Op::Mul, a, b); }

template <typename T>
Var Tape<T>::scale(Var a, T s)
{
    Node& n = push(Op::Scale, node(a).shape, {a});
    n.scalar = s;
    const T* pa = nodes_[a.id].data();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = pa[i] * s;
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::concat(std::span<const Var> parts)
{
    require(!parts.empty(), "concat", "no inputs");
    const int rows = node(parts[0]).shape.rows;
    int cols = 0;
    for (Var p : parts) {
        require(node(p).shape.rows == rows, "concat", "row count mismatch");
        cols += node(p).shape.cols;
    }
    Node& n = push(Op::Concat, {rows, cols}, {});
    for (Var p : parts) {
        n.index.push_back(static_cast<std::int32_t>(p.id));
        if (recording_ && nodes_[p.id].requires_grad) n.requires_grad = true;
    }
    int offset = 0;
    for (Var p : parts) {
        const Node& src = nodes_[p.id];
        const int w = src.shape.cols;
        for (int r = 0; r < rows; ++r)
            std::copy_n(src.data() + r * w, w, n.value.data() + r * cols + offset);
        offset += w;
    }
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::relu(Var a)
{
    Node& n = push(Op::Relu, node(a).shape, {a});
    const T* pa = nodes_[a.id].data();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = pa[i] > T(0) ? pa[i] : T(0);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::tanh(Var a)
{
    Node& n = push(Op::Tanh, node(a).shape, {a});
    const T* pa = nodes_[a.id].data();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(pa[i]);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::exp(Var a)
{
    Node& n = push(Op::Exp, node(a).shape, {a});
    const T* pa = nodes_[a.id].data();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::exp(pa[i]);
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::log(Var a)
{
    Node& n = push(Op::Log, node(a).shape, {a});
    const T* pa = nodes_[a.id].data();
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::log(pa[i]);
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::masked_softmax(Var logits, std::span<const std::uint8_t> mask)
{
    const Shape s = node(logits).shape;
    require(static_cast<int>(mask.size()) == s.size(), "masked_softmax", "mask size does not match logits");
    Node& n = push(Op::MaskedSoftmax, s, {logits});
    const T* pl = nodes_[logits.id].data();
    for (int r = 0; r < s.rows; ++r) {
        const T* in = pl + r * s.cols;
        const std::uint8_t* m = mask.data() + r * s.cols;
        T* out = n.value.data() + r * s.cols;
        T mx = kMaskedLogit;
        bool any = false;
        for (int c = 0; c < s.cols; ++c)
            if (m[c]) {
                mx = any ? std::max(mx, in[c]) : in[c];
                any = true;
            }
        if (!any) throw NumericError("masked_softmax: row " + std::to_string(r) + " has no unmasked entry");
        T total = T(0);
        for (int c = 0; c < s.cols; ++c) {
            // Masked entries get kMaskedLogit added; exp underflows to exactly 0.
            const T z = m[c] ? in[c] - mx : in[c] + kMaskedLogit - mx;
            out[c] = m[c] ? std::exp(z) : T(0);
            total += out[c];
        }
        const T inv = T(1) / total;
        for (int c = 0; c < s.cols; ++c) out[c] *= inv;
    }
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::sum(Var a)
{
    Node& n = push(Op::Sum, {1, 1}, {a});
    const Node& src = nodes_[a.id];
    T acc = T(0);
    const T* p = src.data();
    for (int i = 0; i < src.shape.size(); ++i) acc += p[i];
    n.value[0] = acc;
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::mean_rows(Var a)
{
    const Shape s = node(a).shape;
    Node& n = push(Op::MeanRows, {1, s.cols}, {a});
    mmap(n.value.data(), n.shape) = cmap(nodes_[a.id].data(), s).colwise().mean();
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::gather_rows(Var a, std::span<const int> rows)
{
    const Shape s = node(a).shape;
    for (int r : rows) require(r >= 0 && r < s.rows, "gather_rows", "row index out of range");
    Node& n = push(Op::GatherRows, {static_cast<int>(rows.size()), s.cols}, {a});
    n.index.assign(rows.begin(), rows.end());
    const T* pa = nodes_[a.id].data();
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(pa + rows[i] * s.cols, s.cols, n.value.data() + i * static_cast<std::size_t>(s.cols));
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::gather_cols(Var a, int start, int count)
{
    const Shape s = node(a).shape;
    require(start >= 0 && count > 0 && start + count <= s.cols, "gather_cols", "column range out of bounds");
    Node& n = push(Op::GatherCols, {s.rows, count}, {a});
    n.iarg = start;
    const T* pa = nodes_[a.id].data();
    for (int r = 0; r < s.rows; ++r) std::copy_n(pa + r * s.cols + start, count, n.value.data() + r * count);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::pick(Var a, std::span<const int> cols)
{
    const Shape s = node(a).shape;
    require(static_cast<int>(cols.size()) == s.rows, "pick", "need one index per row");
    for (int c : cols) require(c >= 0 && c < s.cols, "pick", "column index out of range");
    Node& n = push(Op::Pick, {s.rows, 1}, {a});
    n.index.assign(cols.begin(), cols.end());
    const T* pa = nodes_[a.id].data();
    for (int r = 0; r < s.rows; ++r) n.value[r] = pa[r * s.cols + cols[r]];
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

template <typename T>
Var Tape<T>::instance_norm(Var x, Var gamma, Var beta)
{
    const Shape s = node(x).shape;
    require(node(gamma).shape == Shape{1, s.cols} && node(beta).shape == Shape{1, s.cols}, "instance_norm",
            "affine parameters must be (1," + std::to_string(s.cols) + ")");
    Node& n = push(Op::InstanceNorm, s, {x, gamma, beta});
    // aux = [normalized x (rows*cols) | inverse std per column (cols)]
    n.aux.resize(static_cast<std::size_t>(s.size() + s.cols));
    const T* px = nodes_[x.id].data();
    const T* pg = nodes_[gamma.id].data();
    const T* pb = nodes_[beta.id].data();
    T* xhat = n.aux.data();
    T* inv_std = n.aux.data() + s.size();
    for (int c = 0; c < s.cols; ++c) {
        T mean = T(0);
        for (int r = 0; r < s.rows; ++r) mean += px[r * s.cols + c];
        mean /= T(s.rows);
        T var = T(0);
        for (int r = 0; r < s.rows; ++r) {
            const T d = px[r * s.cols + c] - mean;
            var += d * d;
        }
        var /= T(s.rows);
        inv_std[c] = T(1) / std::sqrt(var + kNormEps);
        for (int r = 0; r < s.rows; ++r) {
            const int i = r * s.cols + c;
            xhat[i] = (px[i] - mean) * inv_std[c];
            n.value[i] = pg[c] * xhat[i] + pb[c];
        }
    }
    finish(n);
    return Var{static_cast<std::uint32_t>(size_ - 1)};
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
T* Tape<T>::grad_buffer(std::uint32_t id)
{
    Node& n = nodes_[id];
    if (n.ext_grad) return n.ext_grad;
    if (!n.has_grad) {
        n.grad.assign(static_cast<std::size_t>(n.shape.size()), T(0));
        n.has_grad = true;
    }
    return n.grad.data();
}

template <typename T>
void Tape<T>::backward(Var loss)
{
    Node& l = node(loss);
    if (l.shape.size() != 1) throw ShapeError("backward needs a scalar loss, got " + to_string(l.shape));
    if (!l.requires_grad) throw std::logic_error("backward: loss does not depend on any differentiable input");
    for (std::uint32_t i = 0; i <= loss.id; ++i) nodes_[i].has_grad = false;
    grad_buffer(loss.id)[0] += T(1);
    for (std::uint32_t i = loss.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.requires_grad && n.has_grad && n.op != Op::Leaf) backward_node(i);
    }
}

template <typename T>
void Tape<T>::backward_node(std::uint32_t id)
{
    // Copy what we need: grad_buffer() may touch other deque slots but never
    // reallocates, so references stay valid.
    const Node& n = nodes_[id];
    const T* g = n.grad.data();
    const Shape s = n.shape;
    auto wants = [&](int k) { return n.in[k] != kNone && nodes_[n.in[k]].requires_grad; };
    auto in_node = [&](int k) -> const Node& { return nodes_[n.in[k]]; };

    switch (n.op) {
    case Op::Leaf:
        break;
    case Op::MatMul: {
        const Node& a = in_node(0);
        const Node& b = in_node(1);
        auto gc = cmap(g, s);
        if (wants(0)) mmap(grad_buffer(n.in[0]), a.shape).noalias() += gc * cmap(b.data(), b.shape).transpose();
        if (wants(1)) mmap(grad_buffer(n.in[1]), b.shape).noalias() += cmap(a.data(), a.shape).transpose() * gc;
        break;
    }
    case Op::MatMulNT: {
        const Node& a = in_node(0);
        const Node& b = in_node(1);
        auto gc = cmap(g, s);
        if (wants(0)) mmap(grad_buffer(n.in[0]), a.shape).noalias() += gc * cmap(b.data(), b.shape);
        if (wants(1)) mmap(grad_buffer(n.in[1]), b.shape).noalias() += gc.transpose() * cmap(a.data(), a.shape);
        break;
    }
    case Op::Affine: {
        const Node& x = in_node(0);
        const Node& w = in_node(1);
        const Node& b = in_node(2);
        auto gc = cmap(g, s);
        if (wants(0)) mmap(grad_buffer(n.in[0]), x.shape).noalias() += gc * cmap(w.data(), w.shape).transpose();
        if (wants(1)) mmap(grad_buffer(n.in[1]), w.shape).noalias() += cmap(x.data(), x.shape).transpose() * gc;
        if (wants(2)) mmap(grad_buffer(n.in[2]), b.shape) += gc.colwise().sum();
        break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
        const bool bcast = n.iarg != 0;
        const T* pa = in_node(0).data();
        const T* pb = in_node(1).data();
        T* ga = wants(0) ? grad_buffer(n.in[0]) : nullptr;
        T* gb = wants(1) ? grad_buffer(n.in[1]) : nullptr;
        for (int r = 0; r < s.rows; ++r) {
            const T* gr = g + r * s.cols;
            const int boff = bcast ? 0 : r * s.cols;
            for (int c = 0; c < s.cols; ++c) {
                const int i = r * s.cols + c;
                if (n.op == Op::Mul) {
                    if (ga) ga[i] += gr[c] * pb[boff + c];
                    if (gb) gb[boff + c] += gr[c] * pa[i];
                } else {
                    if (ga) ga[i] += gr[c];
                    if (gb) gb[boff + c] += n.op == Op::Add ? gr[c] : -gr[c];
                }
            }
        }
        break;
    }
    case Op::Scale: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        for (int i = 0; i < s.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
    }
    case Op::Concat: {
        int offset = 0;
        for (std::int32_t src_id : n.index) {
            const Node& src = nodes_[static_cast<std::size_t>(src_id)];
            const int w = src.shape.cols;
            if (src.requires_grad) {
                T* gs = grad_buffer(static_cast<std::uint32_t>(src_id));
                for (int r = 0; r < s.rows; ++r)
                    for (int c = 0; c < w; ++c) gs[r * w + c] += g[r * s.cols + offset + c];
            }
            offset += w;
        }
        break;
    }
    case Op::Relu: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        const T* pa = in_node(0).data();
        for (int i = 0; i < s.size(); ++i)
            if (pa[i] > T(0)) ga[i] += g[i];
        break;
    }
    case Op::Tanh: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        for (int i = 0; i < s.size(); ++i) ga[i] += g[i] * (T(1) - n.value[i] * n.value[i]);
        break;
    }
    case Op::Exp: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        for (int i = 0; i < s.size(); ++i) ga[i] += g[i] * n.value[i];
        break;
    }
    case Op::Log: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        const T* pa = in_node(0).data();
        for (int i = 0; i < s.size(); ++i) ga[i] += g[i] / pa[i];
        break;
    }
    case Op::MaskedSoftmax: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        for (int r = 0; r < s.rows; ++r) {
            const T* y = n.value.data() + r * s.cols;
            const T* gr = g + r * s.cols;
            T dot = T(0);
            for (int c = 0; c < s.cols; ++c) dot += gr[c] * y[c];
            for (int c = 0; c < s.cols; ++c) ga[r * s.cols + c] += y[c] * (gr[c] - dot);
        }
        break;
    }
    case Op::Sum: {
        if (!wants(0)) break;
        const Shape sa = in_node(0).shape;
        T* ga = grad_buffer(n.in[0]);
        for (int i = 0; i < sa.size(); ++i) ga[i] += g[0];
        break;
    }
    case Op::MeanRows: {
        if (!wants(0)) break;
        const Shape sa = in_node(0).shape;
        T* ga = grad_buffer(n.in[0]);
        const T inv = T(1) / T(sa.rows);
        for (int r = 0; r < sa.rows; ++r)
            for (int c = 0; c < sa.cols; ++c) ga[r * sa.cols + c] += g[c] * inv;
        break;
    }
    case Op::GatherRows: {
        if (!wants(0)) break;
        T* ga = grad_buffer(n.in[0]);
        for (int i = 0; i < s.rows; ++i)
            for (int c = 0; c < s.cols; ++c) ga[n.index[i] * s.cols + c] += g[i * s.cols + c];
        break;
    }
    case Op::GatherCols: {
        if (!wants(0)) break;
        const int src_cols = in_node(0).shape.cols;
        T* ga = grad_buffer(n.in[0]);
        for (int r = 0; r < s.rows; ++r)
            for (int c = 0; c < s.cols; ++c) ga[r * src_cols + n.iarg + c] += g[r * s.cols + c];
        break;
    }
    case Op::Pick: {
        if (!wants(0)) break;
        const int src_cols = in_node(0).shape.cols;
        T* ga = grad_buffer(n.in[0]);
        for (int r = 0; r < s.rows; ++r) ga[r * src_cols + n.index[r]] += g[r];
        break;
    }
    case Op::InstanceNorm: {
        const T* xhat = n.aux.data();
        const T* inv_std = n.aux.data() + s.size();
        const T* pg = in_node(1).data();
        T* gx = wants(0) ? grad_buffer(n.in[0]) : nullptr;
        T* gg = wants(1) ? grad_buffer(n.in[1]) : nullptr;
        T* gb = wants(2) ? grad_buffer(n.in[2]) : nullptr;
        const T rows = T(s.rows);
        for (int c = 0; c < s.cols; ++c) {
            T sum_g = T(0), sum_gx = T(0);
            for (int r = 0; r < s.rows; ++r) {
                const int i = r * s.cols + c;
                sum_g += g[i];
                sum_gx += g[i] * xhat[i];
            }
            if (gb) gb[c] += sum_g;
            if (gg) gg[c] += sum_gx;
            if (gx) {
                // d xhat = g * gamma; dx = inv_std/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
                const T k = pg[c] * inv_std[c] / rows;
                for (int r = 0; r < s.rows; ++r) {
                    const int i = r * s.cols + c;
                    gx[i] += k * (rows * g[i] - sum_g - xhat[i] * sum_gx);
                }
            }
        }
        break;
    }
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace polynet
