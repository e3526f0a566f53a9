#include "gaitcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gaitcast/error.hpp"

namespace gaitcast::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

void require(bool ok, const std::string& op, const Shape& a, const Shape& b)
{
    if (!ok) {
        throw ShapeError(op + ": shape mismatch between " + shape_string(a) + " and " +
                         shape_string(b));
    }
}

void require_rank2(const Tensor& t, const std::string& op)
{
    if (t.rank() != 2) {
        throw ShapeError(op + ": expected a rank-2 tensor, got " + shape_string(t.shape()));
    }
}

void check_defined(const Tensor& t, const char* op)
{
    if (!t.defined()) {
        throw ShapeError(std::string(op) + ": undefined tensor operand");
    }
}

using BackwardFn = std::function<void(const std::vector<double>& grad_out)>;

// Wraps a computed forward value as a tensor and, when any operand needs a
// gradient and a tape is active, records the backward closure.
Tensor finish(const char* op, Shape shape, std::vector<double> values,
              std::initializer_list<Tensor> inputs, BackwardFn backward_fn)
{
    Tape* tape = g_active_tape;
    bool needs_grad = false;
    for (const auto& in : inputs) {
        needs_grad = needs_grad || in.requires_grad();
    }
    const bool record = needs_grad && tape != nullptr;
    Tensor out = make_result(std::move(shape), std::move(values), record);
    if (record) {
        Tape::Record rec;
        rec.op = op;
        for (const auto& in : inputs) {
            rec.inputs.push_back(in.storage());
        }
        rec.output = out.storage();
        std::weak_ptr<Storage> weak_out = out.storage();
        rec.backward = [weak_out, fn = std::move(backward_fn)]() {
            auto o = weak_out.lock();
            if (o && !o->grad.empty()) {
                fn(o->grad);
            }
        };
        out.storage()->on_tape = true;
        tape->record(std::move(rec));
    }
    return out;
}

// Gradient sink for an input: null when the input does not need a gradient.
std::vector<double>* sink(const Tensor& t)
{
    return t.requires_grad() ? &t.storage()->grad_buffer() : nullptr;
}

}  // namespace

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<double>& Storage::grad_buffer()
{
    if (grad.empty()) {
        grad.assign(value.size(), 0.0);
    }
    return grad;
}

Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad)
{
    auto s = std::make_shared<Storage>();
    s->shape = std::move(shape);
    s->value = std::move(values);
    s->requires_grad = requires_grad;
    return Tensor(std::move(s));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad)
{
    return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad)
{
    const auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad)
{
    if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](auto d) { return d == 0; })) {
        throw ShapeError("tensor: dimensions must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_string(shape));
    }
    return make_result(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const
{
    if (!storage_) {
        throw ShapeError("tensor: undefined");
    }
    return storage_->shape;
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const { return shape().back(); }

double Tensor::at(std::size_t row, std::size_t col) const
{
    return storage_->value[row * cols() + col];
}

double Tensor::item() const
{
    if (numel() != 1) {
        throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
    }
    return storage_->value[0];
}

void Tensor::set_requires_grad(bool on) { storage_->requires_grad = on; }

std::vector<double> Tensor::grad() const
{
    if (storage_->grad.empty()) {
        return std::vector<double>(numel(), 0.0);
    }
    return storage_->grad;
}

void Tensor::zero_grad() { storage_->grad.clear(); }

Tensor Tensor::clone() const { return make_result(shape(), storage_->value, requires_grad()); }

Tensor Tensor::detach() const { return make_result(shape(), storage_->value, false); }

// ---------------------------------------------------------------- tape

void Tape::record(Record record)
{
    if (consumed_) {
        throw Error("autodiff", "tape: cannot record onto a tape that was already run backward");
    }
    records_.push_back(std::move(record));
}

BackwardStatus Tape::backward(const Tensor& loss)
{
    check_defined(loss, "backward");
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
    }
    if (consumed_) {
        throw Error("autodiff", "backward: tape already consumed; reset it before another backward pass");
    }
    if (records_.empty()) {
        throw Error("autodiff", "backward: tape is empty");
    }
    consumed_ = true;

    BackwardStatus status;
    const auto& target = loss.storage();
    const bool on_this_tape =
        std::any_of(records_.begin(), records_.end(), [&](const Record& r) { return r.output == target; });
    if (!on_this_tape) {
        status.detached = true;
        return status;
    }

    target->grad_buffer()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (hook_) {
            hook_(*it);
        }
        it->backward();
        ++status.ops_visited;
    }
    records_.clear();
    return status;
}

void Tape::reset()
{
    records_.clear();
    consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() noexcept { return g_active_tape; }

// ---------------------------------------------------------------- primitives

Tensor matmul(const Tensor& a, const Tensor& b)
{
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(), "matmul", a.shape(), b.shape());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] += av * brow[j];
            }
        }
    }
    return finish("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](const std::vector<double>& g) {
        const double* pa = a.data().data();
        const double* pb = b.data().data();
        if (auto* ga = sink(a)) {
            // ga += g * b^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    const double* grow = g.data() + i * n;
                    const double* brow = pb + p * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += grow[j] * brow[j];
                    }
                    (*ga)[i * k + p] += acc;
                }
            }
        }
        if (auto* gb = sink(b)) {
            // gb += a^T * g
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa[i * k + p];
                    double* gbrow = gb->data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        gbrow[j] += av * grow[j];
                    }
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b)
{
    check_defined(a, "add");
    check_defined(b, "add");
    require(a.shape() == b.shape(), "add", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return finish("add", a.shape(), std::move(out), {a, b}, [a, b](const std::vector<double>& g) {
        for (const Tensor* t : {&a, &b}) {
            if (auto* gt = sink(*t)) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    (*gt)[i] += g[i];
                }
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    check_defined(a, "sub");
    check_defined(b, "sub");
    require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return finish("sub", a.shape(), std::move(out), {a, b}, [a, b](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i];
            }
        }
        if (auto* gb = sink(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i] -= g[i];
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    check_defined(a, "mul");
    check_defined(b, "mul");
    require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * b[i];
    }
    return finish("mul", a.shape(), std::move(out), {a, b}, [a, b](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i] * b[i];
            }
        }
        if (auto* gb = sink(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*gb)[i] += g[i] * a[i];
            }
        }
    });
}

Tensor scale(const Tensor& a, double factor)
{
    check_defined(a, "scale");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * factor;
    }
    return finish("scale", a.shape(), std::move(out), {a}, [a, factor](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i] * factor;
            }
        }
    });
}

Tensor transpose(const Tensor& a)
{
    check_defined(a, "transpose");
    require_rank2(a, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out[j * r + i] = a[i * c + j];
        }
    }
    return finish("transpose", {c, r}, std::move(out), {a}, [a, r, c](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*ga)[i * c + j] += g[j * r + i];
                }
            }
        }
    });
}

Tensor softmax_lastdim(const Tensor& a)
{
    check_defined(a, "softmax_lastdim");
    const std::size_t c = a.cols(), r = a.numel() / c;
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = a.data().data() + i * c;
        double* y = out.data() + i * c;
        const double mx = *std::max_element(x, x + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            y[j] /= total;
        }
    }
    auto probs = std::make_shared<std::vector<double>>(out);
    return finish("softmax_lastdim", a.shape(), std::move(out), {a}, [a, probs, r, c](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < r; ++i) {
                const double* y = probs->data() + i * c;
                const double* gi = g.data() + i * c;
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    dot += gi[j] * y[j];
                }
                for (std::size_t j = 0; j < c; ++j) {
                    (*ga)[i * c + j] += y[j] * (gi[j] - dot);
                }
            }
        }
    });
}

Tensor log_softmax_lastdim(const Tensor& a)
{
    check_defined(a, "log_softmax_lastdim");
    const std::size_t c = a.cols(), r = a.numel() / c;
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = a.data().data() + i * c;
        const double mx = *std::max_element(x, x + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            total += std::exp(x[j] - mx);
        }
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = x[j] - lse;
        }
    }
    auto logp = std::make_shared<std::vector<double>>(out);
    return finish("log_softmax_lastdim", a.shape(), std::move(out), {a}, [a, logp, r, c](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < r; ++i) {
                const double* gi = g.data() + i * c;
                double gsum = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    gsum += gi[j];
                }
                for (std::size_t j = 0; j < c; ++j) {
                    (*ga)[i * c + j] += gi[j] - std::exp((*logp)[i * c + j]) * gsum;
                }
            }
        }
    });
}

Tensor relu(const Tensor& a)
{
    check_defined(a, "relu");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] > 0.0 ? a[i] : 0.0;
    }
    return finish("relu", a.shape(), std::move(out), {a}, [a](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a[i] > 0.0) {
                    (*ga)[i] += g[i];
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps)
{
    check_defined(x, "layer_norm");
    require_rank2(x, "layer_norm");
    const std::size_t r = x.rows(), c = x.cols();
    const Shape row_shape{1, c};
    require(gamma.shape() == row_shape, "layer_norm", x.shape(), gamma.shape());
    require(beta.shape() == row_shape, "layer_norm", x.shape(), beta.shape());

    auto xhat = std::make_shared<std::vector<double>>(r * c);
    auto inv_std = std::make_shared<std::vector<double>>(r);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double* xi = x.data().data() + i * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            mu += xi[j];
        }
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            var += (xi[j] - mu) * (xi[j] - mu);
        }
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const double h = (xi[j] - mu) * is;
            (*xhat)[i * c + j] = h;
            out[i * c + j] = h * gamma[j] + beta[j];
        }
    }
    return finish("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                  [x, gamma, beta, xhat, inv_std, r, c](const std::vector<double>& g) {
        if (auto* gg = sink(gamma)) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*gg)[j] += g[i * c + j] * (*xhat)[i * c + j];
                }
            }
        }
        if (auto* gb = sink(beta)) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*gb)[j] += g[i * c + j];
                }
            }
        }
        if (auto* gx = sink(x)) {
            const double inv_c = 1.0 / static_cast<double>(c);
            for (std::size_t i = 0; i < r; ++i) {
                double mean_d = 0.0, mean_dh = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    const double d = g[i * c + j] * gamma[j];
                    mean_d += d;
                    mean_dh += d * (*xhat)[i * c + j];
                }
                mean_d *= inv_c;
                mean_dh *= inv_c;
                for (std::size_t j = 0; j < c; ++j) {
                    const double d = g[i * c + j] * gamma[j];
                    (*gx)[i * c + j] += (*inv_std)[i] * (d - mean_d - (*xhat)[i * c + j] * mean_dh);
                }
            }
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis)
{
    if (parts.empty()) {
        throw ShapeError("concat: no operands");
    }
    if (axis > 1) {
        throw ShapeError("concat: axis must be 0 or 1");
    }
    for (const auto& p : parts) {
        check_defined(p, "concat");
        require_rank2(p, "concat");
    }
    const std::size_t other = axis == 0 ? parts[0].cols() : parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require((axis == 0 ? p.cols() : p.rows()) == other, "concat", parts[0].shape(), p.shape());
        total += axis == 0 ? p.rows() : p.cols();
    }
    const Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
    std::vector<double> out(total * other);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        if (axis == 0) {
            std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<std::ptrdiff_t>(offset * other));
            offset += p.rows();
        } else {
            const std::size_t pc = p.cols();
            for (std::size_t i = 0; i < other; ++i) {
                for (std::size_t j = 0; j < pc; ++j) {
                    out[i * total + offset + j] = p[i * pc + j];
                }
            }
            offset += pc;
        }
    }

    Tape* tape = active_tape();
    bool needs = std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); });
    Tensor result = make_result(out_shape, std::move(out), needs && tape);
    if (needs && tape) {
        Tape::Record rec;
        rec.op = "concat";
        for (const auto& p : parts) {
            rec.inputs.push_back(p.storage());
        }
        rec.output = result.storage();
        std::weak_ptr<Storage> weak_out = result.storage();
        rec.backward = [weak_out, parts, axis, total, other]() {
            auto o = weak_out.lock();
            if (!o || o->grad.empty()) {
                return;
            }
            const auto& g = o->grad;
            std::size_t offset = 0;
            for (const auto& p : parts) {
                const std::size_t extent = axis == 0 ? p.rows() : p.cols();
                if (auto* gp = sink(p)) {
                    if (axis == 0) {
                        for (std::size_t i = 0; i < extent * other; ++i) {
                            (*gp)[i] += g[offset * other + i];
                        }
                    } else {
                        for (std::size_t i = 0; i < other; ++i) {
                            for (std::size_t j = 0; j < extent; ++j) {
                                (*gp)[i * extent + j] += g[i * total + offset + j];
                            }
                        }
                    }
                }
                offset += extent;
            }
        };
        result.storage()->on_tape = true;
        tape->record(std::move(rec));
    }
    return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end)
{
    check_defined(a, "slice");
    if (axis >= a.rank() || a.rank() > 2) {
        throw ShapeError("slice: axis " + std::to_string(axis) + " invalid for shape " + shape_string(a.shape()));
    }
    if (begin >= end || end > a.shape()[axis]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for shape " + shape_string(a.shape()));
    }
    const std::size_t r = a.rank() == 2 ? a.rows() : 1;
    const std::size_t c = a.cols();
    // A rank-1 tensor behaves as a single row sliced along its columns.
    const bool along_rows = a.rank() == 2 && axis == 0;
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t out_r = along_rows ? end - begin : r;
    const std::size_t out_c = along_rows ? c : end - begin;
    const std::size_t row0 = along_rows ? begin : 0;
    const std::size_t col0 = along_rows ? 0 : begin;
    std::vector<double> out(out_r * out_c);
    for (std::size_t i = 0; i < out_r; ++i) {
        for (std::size_t j = 0; j < out_c; ++j) {
            out[i * out_c + j] = a[(row0 + i) * c + col0 + j];
        }
    }
    return finish("slice", std::move(out_shape), std::move(out), {a},
                  [a, out_r, out_c, row0, col0, c](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < out_r; ++i) {
                for (std::size_t j = 0; j < out_c; ++j) {
                    (*ga)[(row0 + i) * c + col0 + j] += g[i * out_c + j];
                }
            }
        }
    });
}

Tensor mean(const Tensor& a)
{
    check_defined(a, "mean");
    const double n = static_cast<double>(a.numel());
    double total = 0.0;
    for (double v : a.data()) {
        total += v;
    }
    return finish("mean", {1}, {total / n}, {a}, [a, n](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (auto& v : *ga) {
                v += g[0] / n;
            }
        }
    });
}

Tensor mean_rows(const Tensor& a)
{
    check_defined(a, "mean_rows");
    require_rank2(a, "mean_rows");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out[j] += a[i * c + j];
        }
    }
    for (auto& v : out) {
        v /= static_cast<double>(r);
    }
    return finish("mean_rows", {1, c}, std::move(out), {a}, [a, r, c](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*ga)[i * c + j] += g[j] / static_cast<double>(r);
                }
            }
        }
    });
}

Tensor sum(const Tensor& a)
{
    check_defined(a, "sum");
    double total = 0.0;
    for (double v : a.data()) {
        total += v;
    }
    return finish("sum", {1}, {total}, {a}, [a](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (auto& v : *ga) {
                v += g[0];
            }
        }
    });
}

Tensor abs(const Tensor& a)
{
    check_defined(a, "abs");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::fabs(a[i]);
    }
    return finish("abs", a.shape(), std::move(out), {a}, [a](const std::vector<double>& g) {
        if (auto* ga = sink(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                // subgradient 0 at the kink
                const double s = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
                (*ga)[i] += g[i] * s;
            }
        }
    });
}

Tensor repeat_rows(const Tensor& row, std::size_t count)
{
    check_defined(row, "repeat_rows");
    if (row.rank() != 2 || row.rows() != 1 || count == 0) {
        throw ShapeError("repeat_rows: expected a (1 x D) row and positive count, got " +
                         shape_string(row.shape()));
    }
    const std::size_t c = row.cols();
    std::vector<double> out(count * c);
    for (std::size_t i = 0; i < count; ++i) {
        std::copy(row.data().begin(), row.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return finish("repeat_rows", {count, c}, std::move(out), {row}, [row, count, c](const std::vector<double>& g) {
        if (auto* gr = sink(row)) {
            for (std::size_t i = 0; i < count; ++i) {
                for (std::size_t j = 0; j < c; ++j) {
                    (*gr)[j] += g[i * c + j];
                }
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    auto xw = matmul(x, weight);
    return add(xw, repeat_rows(bias, xw.rows()));
}

}  // namespace gaitcast::ad
