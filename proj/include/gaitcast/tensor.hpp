#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// Tensors are cheap handles onto shared storage. Operations whose operands
// require gradients are recorded on the thread's active Tape (see TapeScope);
// with no active tape every operation is a plain forward computation.
// There is no broadcasting: every operation states its shapes explicitly.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gaitcast::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct Storage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient arrives
    bool requires_grad = false;
    bool on_tape = false;      // produced by a recorded operation

    std::vector<double>& grad_buffer();
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const noexcept { return storage_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const { return storage_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return storage_->value; }
    std::span<double> mutable_data() { return storage_->value; }
    double operator[](std::size_t i) const { return storage_->value[i]; }
    double at(std::size_t row, std::size_t col) const;
    double item() const;

    bool requires_grad() const { return storage_ && storage_->requires_grad; }
    void set_requires_grad(bool on);

    // Accumulated gradient; all zeros when nothing has flowed in yet.
    std::vector<double> grad() const;
    bool has_grad() const { return !storage_->grad.empty(); }
    void zero_grad();

    // Deep copy that keeps requires_grad but drops history and gradient.
    Tensor clone() const;
    // Deep copy with requires_grad off.
    Tensor detach() const;

    const std::shared_ptr<Storage>& storage() const { return storage_; }

private:
    explicit Tensor(std::shared_ptr<Storage> storage) : storage_(std::move(storage)) {}
    friend Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);

    std::shared_ptr<Storage> storage_;
};

// Wraps freshly computed values as a tensor (no validation, no recording).
Tensor make_result(Shape shape, std::vector<double> values, bool requires_grad);

struct BackwardStatus {
    bool detached = false;       // loss was not connected to the tape; no gradient flowed
    std::size_t ops_visited = 0;
};

class Tape {
public:
    struct Record {
        std::string op;
        std::vector<std::shared_ptr<Storage>> inputs;
        std::shared_ptr<Storage> output;
        std::function<void()> backward;
    };

    void record(Record record);
    BackwardStatus backward(const Tensor& loss);

    std::size_t size() const noexcept { return records_.size(); }
    bool consumed() const noexcept { return consumed_; }
    void reset();

    // Optional hook invoked with each record as backward visits it.
    void set_visit_hook(std::function<void(const Record&)> hook) { hook_ = std::move(hook); }

private:
    std::vector<Record> records_;
    bool consumed_ = false;
    std::function<void(const Record&)> hook_;
};

// Makes `tape` the active tape of the calling thread for the scope's lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape() noexcept;

// Primitives.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor transpose(const Tensor& a);
Tensor softmax_lastdim(const Tensor& a);
Tensor log_softmax_lastdim(const Tensor& a);
Tensor relu(const Tensor& a);
// Normalizes each row of a (rows x D) tensor; gamma and beta are (1 x D).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// axis 0 stacks rows, axis 1 joins columns; rank-2 operands only.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor abs(const Tensor& a);
// Tiles a (1 x D) row `count` times into (count x D).
Tensor repeat_rows(const Tensor& row, std::size_t count);

// x W + b with b given as a (1 x out) row.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace gaitcast::ad
