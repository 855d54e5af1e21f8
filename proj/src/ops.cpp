#include "deepcross/ops.hpp"

#include <algorithm>
#include <cmath>

namespace deepcross {
namespace {

void require_same_shape(const char* op, const Var& a, const Var& b)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
}

void require_rank(const char* op, const Var& a, std::size_t rank)
{
    if (a.shape().size() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(a.shape()));
}

// Elementwise unary op whose derivative is a function of (input, output).
template <typename F, typename DF>
Var unary(Var a, F f, DF df)
{
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = f(x[i]);
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia, df](Tape& t, std::size_t self) {
        if (!t.needs_grad(ia))
            return;
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        const Tensor& gy = t.grad(self);
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < x.size(); ++i)
            gx[i] += gy[i] * df(x[i], y[i]);
    });
}

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis)
{
    if (axis >= s.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i)
        r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i)
        r.inner *= s[i];
    return r;
}

} // namespace

Var matmul(Var a, Var b)
{
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k)
        throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    Tensor c(Shape{m, n});
    c.matrix().noalias() = a.value().matrix() * b.value().matrix();
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(c), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const auto gc = t.grad(self).matrix();
        if (t.needs_grad(ia))
            t.grad(ia).matrix().noalias() += gc * t.value(ib).matrix().transpose();
        if (t.needs_grad(ib))
            t.grad(ib).matrix().noalias() += t.value(ia).matrix().transpose() * gc;
    });
}

Var matvec(Var a, Var x)
{
    require_rank("matvec", a, 2);
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (x.size() != k)
        throw DimensionError("matvec: " + shape_string(a.shape()) + " x " + shape_string(x.shape()));
    Tensor y(Shape{m});
    y.flat().noalias() = a.value().matrix() * x.value().flat();
    const std::size_t ia = a.id(), ix = x.id();
    return a.tape().record(std::move(y), {a, x}, [ia, ix](Tape& t, std::size_t self) {
        const auto gy = t.grad(self).flat();
        if (t.needs_grad(ia))
            t.grad(ia).matrix().noalias() += gy * t.value(ix).flat().transpose();
        if (t.needs_grad(ix))
            t.grad(ix).flat().noalias() += t.value(ia).matrix().transpose() * gy;
    });
}

Var transpose(Var a)
{
    require_rank("transpose", a, 2);
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    Tensor y(Shape{c, r});
    y.matrix() = a.value().matrix().transpose();
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
        t.grad(ia).matrix() += t.grad(self).matrix().transpose();
    });
}

Var add(Var a, Var b)
{
    require_same_shape("add", a, b);
    Tensor y(a.shape());
    y.flat() = a.value().flat() + b.value().flat();
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        if (t.needs_grad(ia))
            t.grad(ia).flat() += t.grad(self).flat();
        if (t.needs_grad(ib))
            t.grad(ib).flat() += t.grad(self).flat();
    });
}

Var sub(Var a, Var b)
{
    require_same_shape("sub", a, b);
    Tensor y(a.shape());
    y.flat() = a.value().flat() - b.value().flat();
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        if (t.needs_grad(ia))
            t.grad(ia).flat() += t.grad(self).flat();
        if (t.needs_grad(ib))
            t.grad(ib).flat() -= t.grad(self).flat();
    });
}

Var hadamard(Var a, Var b)
{
    require_same_shape("hadamard", a, b);
    Tensor y(a.shape());
    y.flat() = a.value().flat().cwiseProduct(b.value().flat());
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const auto g = t.grad(self).flat();
        if (t.needs_grad(ia))
            t.grad(ia).flat() += g.cwiseProduct(t.value(ib).flat());
        if (t.needs_grad(ib))
            t.grad(ib).flat() += g.cwiseProduct(t.value(ia).flat());
    });
}

Var scale(Var a, double s)
{
    Tensor y(a.shape());
    y.flat() = s * a.value().flat();
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia, s](Tape& t, std::size_t self) {
        t.grad(ia).flat() += s * t.grad(self).flat();
    });
}

Var add_scalar(Var a, double s)
{
    Tensor y(a.shape());
    y.flat() = a.value().flat().array() + s;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
        t.grad(ia).flat() += t.grad(self).flat();
    });
}

Var div(Var a, Var s)
{
    if (s.size() != 1)
        throw DimensionError("div: divisor must be a single element, got " + shape_string(s.shape()));
    const double d = s.value()[0];
    Tensor y(a.shape());
    y.flat() = a.value().flat() / d;
    const std::size_t ia = a.id(), is = s.id();
    return a.tape().record(std::move(y), {a, s}, [ia, is](Tape& t, std::size_t self) {
        const double d = t.value(is)[0];
        const auto g = t.grad(self).flat();
        if (t.needs_grad(ia))
            t.grad(ia).flat() += g / d;
        if (t.needs_grad(is))
            t.grad(is)[0] -= g.dot(t.value(ia).flat()) / (d * d);
    });
}

Var sigmoid(Var a)
{
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a)
{
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a)
{
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope)
{
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var pow(Var a, double exponent)
{
    return unary(
        a, [exponent](double x) { return std::pow(x, exponent); },
        [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Var clamp(Var a, double lo, double hi)
{
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax(Var a, std::size_t axis)
{
    const Shape& s = a.shape();
    if (s.size() > 2)
        throw DimensionError("softmax: rank > 2 not supported, got " + shape_string(s));
    // Normalised groups: `groups` groups of `len` elements, element j of group g at g*gstride + j*estride.
    std::size_t groups = 1, len = s[0], gstride = 0, estride = 1;
    if (s.size() == 2) {
        if (axis == 1) {
            groups = s[0];
            len = s[1];
            gstride = s[1];
            estride = 1;
        } else if (axis == 0) {
            groups = s[1];
            len = s[0];
            gstride = 1;
            estride = s[1];
        } else {
            throw DimensionError("softmax: bad axis");
        }
    } else if (axis != 0) {
        throw DimensionError("softmax: bad axis");
    }
    const Tensor& x = a.value();
    Tensor y(s);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t base = g * gstride;
        double mx = x[base];
        for (std::size_t j = 1; j < len; ++j)
            mx = std::max(mx, x[base + j * estride]);
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            const double e = std::exp(x[base + j * estride] - mx);
            y[base + j * estride] = e;
            z += e;
        }
        for (std::size_t j = 0; j < len; ++j)
            y[base + j * estride] /= z;
    }
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [=](Tape& t, std::size_t self) {
        const Tensor& y = t.value(self);
        const Tensor& gy = t.grad(self);
        Tensor& gx = t.grad(ia);
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = g * gstride;
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j)
                dot += gy[base + j * estride] * y[base + j * estride];
            for (std::size_t j = 0; j < len; ++j) {
                const std::size_t i = base + j * estride;
                gx[i] += y[i] * (gy[i] - dot);
            }
        }
    });
}

Var sum(Var a)
{
    const std::size_t ia = a.id();
    return a.tape().record(Tensor::scalar(a.value().flat().sum()), {a}, [ia](Tape& t, std::size_t self) {
        t.grad(ia).flat().array() += t.grad(self)[0];
    });
}

Var sum_rows(Var a)
{
    require_rank("sum_rows", a, 2);
    Tensor y(Shape{a.shape()[0]});
    y.flat() = a.value().matrix().rowwise().sum();
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
        t.grad(ia).matrix().colwise() += t.grad(self).flat();
    });
}

Var abs_sum(Var a)
{
    const std::size_t ia = a.id();
    return a.tape().record(Tensor::scalar(a.value().flat().cwiseAbs().sum()), {a},
                           [ia](Tape& t, std::size_t self) {
                               const double g = t.grad(self)[0];
                               const Tensor& x = t.value(ia);
                               Tensor& gx = t.grad(ia);
                               for (std::size_t i = 0; i < x.size(); ++i)
                                   gx[i] += g * double((x[i] > 0.0) - (x[i] < 0.0));
                           });
}

Var pick(Var a, std::size_t i)
{
    if (i >= a.size())
        throw DimensionError("pick: index " + std::to_string(i) + " out of range for " +
                             shape_string(a.shape()));
    const std::size_t ia = a.id();
    return a.tape().record(Tensor::scalar(a.value()[i]), {a}, [ia, i](Tape& t, std::size_t self) {
        t.grad(ia)[i] += t.grad(self)[0];
    });
}

Var reshape(Var a, Shape shape)
{
    Tensor y = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
        t.grad(ia).flat() += t.grad(self).flat();
    });
}

Var swap_axes01(Var a)
{
    require_rank("swap_axes01", a, 3);
    const std::size_t n0 = a.shape()[0], n1 = a.shape()[1], n2 = a.shape()[2];
    const Tensor& x = a.value();
    Tensor y(Shape{n1, n0, n2});
    for (std::size_t i = 0; i < n0; ++i)
        for (std::size_t j = 0; j < n1; ++j)
            std::copy_n(&x.at(i, j, 0), n2, &y.at(j, i, 0));
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [=](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < n0; ++i)
            for (std::size_t j = 0; j < n1; ++j)
                for (std::size_t k = 0; k < n2; ++k)
                    gx.at(i, j, k) += gy.at(j, i, k);
    });
}

Var concat(std::span<const Var> parts, std::size_t axis)
{
    if (parts.empty())
        throw DimensionError("concat: no operands");
    const Shape& first = parts[0].shape();
    Shape out_shape = first;
    out_shape.at(axis) = 0;
    std::vector<std::size_t> extents;
    for (const Var& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size())
            throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != first[i])
                throw DimensionError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(s));
        extents.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const AxisSplit sp = split_at(out_shape, axis);
    Tensor y(out_shape);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& x = parts[p].value();
        const std::size_t block = extents[p] * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o)
            std::copy_n(x.data() + o * block, block, y.data() + o * sp.extent * sp.inner + offset);
        offset += block;
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts)
        ids.push_back(p.id());
    return parts[0].tape().record(std::move(y), parts, [=](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            const std::size_t block = extents[p] * sp.inner;
            if (t.needs_grad(ids[p])) {
                Tensor& gx = t.grad(ids[p]);
                for (std::size_t o = 0; o < sp.outer; ++o) {
                    const double* src = gy.data() + o * sp.extent * sp.inner + offset;
                    double* dst = gx.data() + o * block;
                    for (std::size_t i = 0; i < block; ++i)
                        dst[i] += src[i];
                }
            }
            offset += block;
        }
    });
}

Var stack(std::span<const Var> parts)
{
    if (parts.empty())
        throw DimensionError("stack: no operands");
    Shape s = parts[0].shape();
    for (const Var& p : parts)
        if (p.shape() != s)
            throw DimensionError("stack: shape mismatch " + shape_string(s) + " vs " + shape_string(p.shape()));
    const std::size_t block = shape_size(s);
    s.insert(s.begin(), parts.size());
    Tensor y(s);
    for (std::size_t p = 0; p < parts.size(); ++p)
        std::copy_n(parts[p].value().data(), block, y.data() + p * block);
    std::vector<std::size_t> ids;
    for (const Var& p : parts)
        ids.push_back(p.id());
    return parts[0].tape().record(std::move(y), parts, [ids, block](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (!t.needs_grad(ids[p]))
                continue;
            Tensor& gx = t.grad(ids[p]);
            for (std::size_t i = 0; i < block; ++i)
                gx[i] += gy[p * block + i];
        }
    });
}

Var slice0(Var a, std::size_t begin, std::size_t end)
{
    const Shape& s = a.shape();
    if (begin >= end || end > s[0])
        throw DimensionError("slice0: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                             shape_string(s));
    const std::size_t row = a.size() / s[0];
    Shape out = s;
    out[0] = end - begin;
    Tensor y(out);
    std::copy_n(a.value().data() + begin * row, (end - begin) * row, y.data());
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [=](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        double* dst = t.grad(ia).data() + begin * row;
        for (std::size_t i = 0; i < gy.size(); ++i)
            dst[i] += gy[i];
    });
}

Var index0(Var a, std::size_t i)
{
    const Shape& s = a.shape();
    if (s.size() < 2)
        throw DimensionError("index0: rank-1 input");
    return reshape(slice0(a, i, i + 1), Shape(s.begin() + 1, s.end()));
}

Var pad0(Var a, std::size_t before, std::size_t after)
{
    const Shape& s = a.shape();
    const std::size_t row = a.size() / s[0];
    Shape out = s;
    out[0] += before + after;
    Tensor y(out);
    std::copy_n(a.value().data(), a.size(), y.data() + before * row);
    const std::size_t ia = a.id(), n = a.size();
    return a.tape().record(std::move(y), {a}, [=](Tape& t, std::size_t self) {
        const double* src = t.grad(self).data() + before * row;
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < n; ++i)
            gx[i] += src[i];
    });
}

Var gather_rows(Var a, std::vector<std::size_t> rows)
{
    require_rank("gather_rows", a, 2);
    const std::size_t nr = a.shape()[0], nc = a.shape()[1];
    if (rows.empty())
        throw DimensionError("gather_rows: no rows");
    for (auto r : rows)
        if (r >= nr)
            throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " +
                                 shape_string(a.shape()));
    Tensor y(Shape{rows.size(), nc});
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data() + rows[i] * nc, nc, y.data() + i * nc);
    const std::size_t ia = a.id();
    return a.tape().record(std::move(y), {a}, [ia, nc, rows = std::move(rows)](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t c = 0; c < nc; ++c)
                gx[rows[i] * nc + c] += gy[i * nc + c];
    });
}

Var scale_axis(Var a, Var s, std::size_t axis)
{
    const AxisSplit sp = split_at(a.shape(), axis);
    if (s.size() != sp.extent)
        throw DimensionError("scale_axis: " + shape_string(s.shape()) + " along axis " + std::to_string(axis) +
                             " of " + shape_string(a.shape()));
    const Tensor& x = a.value();
    const Tensor& sv = s.value();
    Tensor y(a.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t base = (o * sp.extent + j) * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i)
                y[base + i] = x[base + i] * sv[j];
        }
    const std::size_t ia = a.id(), is = s.id();
    return a.tape().record(std::move(y), {a, s}, [=](Tape& t, std::size_t self) {
        const Tensor& gy = t.grad(self);
        const bool ga = t.needs_grad(ia), gs = t.needs_grad(is);
        const Tensor& x = t.value(ia);
        const Tensor& sv = t.value(is);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < sp.extent; ++j) {
                const std::size_t base = (o * sp.extent + j) * sp.inner;
                if (ga) {
                    Tensor& gx = t.grad(ia);
                    for (std::size_t i = 0; i < sp.inner; ++i)
                        gx[base + i] += gy[base + i] * sv[j];
                }
                if (gs) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < sp.inner; ++i)
                        acc += gy[base + i] * x[base + i];
                    t.grad(is)[j] += acc;
                }
            }
    });
}

} // namespace deepcross
