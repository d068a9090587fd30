#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tempo/errors.hpp"

namespace tempo::ad {

/// Dense 64-bit real tensor with row-major storage. Gradients live next to
/// the values and are allocated lazily on first accumulation.
struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until touched by backward
    bool requires_grad = false;
    std::string name; // optional, used in diagnostics and checkpoints

    int rows() const;
    int cols() const;
    size_t size() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }
    double scalar_value() const;
    void ensure_grad();
};

using Tensor = std::shared_ptr<Node>;

Tensor tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false,
              std::string name = "");
Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
Tensor zeros(std::vector<int> shape, bool requires_grad = false);
Tensor scalar(double value, bool requires_grad = false);

std::string shape_str(const std::vector<int>& shape);
std::string shape_str(const Tensor& t);

/// Zero the gradient buffers of the given tensors.
void zero_grad(const std::vector<Tensor>& params);

/// Records primitive operations in execution order and replays their adjoints
/// in reverse to produce gradients. Construction order is a topological order
/// by definition, so no sorting is needed.
///
/// A tape and the tensors it produced are confined to one thread; distinct
/// tapes may run concurrently.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // -- primitives ---------------------------------------------------------
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor transpose(const Tensor& a);
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor add_bias_row(const Tensor& a, const Tensor& bias); // [m,n] + [1,n]
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor scale(const Tensor& a, double c);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor slice(const Tensor& a, int r0, int r1, int c0, int c1);
    Tensor interleave_cols(const Tensor& a, const Tensor& b); // a0,b0,a1,b1,...
    Tensor sin(const Tensor& a);
    Tensor cos(const Tensor& a);
    Tensor exp(const Tensor& a);
    Tensor log(const Tensor& a);
    Tensor relu(const Tensor& a);
    Tensor softmax_rows(const Tensor& a);
    /// Square input; row i is a softmax over columns 0..i, zero elsewhere.
    Tensor causal_softmax_rows(const Tensor& a);
    Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
    Tensor sum(const Tensor& a);
    Tensor mean(const Tensor& a);

    // -- differentiation ----------------------------------------------------

    /// Accumulate dLoss/dLeaf into every requires_grad leaf reachable from
    /// the recorded operations. Rejects a second call until reset().
    void backward(const Tensor& loss);

    /// Clear gradients of every tensor this tape touched and re-arm backward.
    /// Replaying backward after reset reproduces gradients bitwise.
    void reset();

    /// When disabled, operations still compute values but record nothing and
    /// outputs never require gradients. Used for pure evaluation.
    void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
    bool grad_enabled() const { return grad_enabled_; }

    size_t num_ops() const { return ops_.size(); }

private:
    Tensor make_out(std::vector<int> shape, bool requires_grad);
    void record(std::function<void()> backfn, std::initializer_list<Tensor> touched);
    bool wants_grad(std::initializer_list<Tensor> inputs) const;

    std::vector<std::function<void()>> ops_;
    std::vector<Tensor> touched_;
    bool backward_done_ = false;
    bool grad_enabled_ = true;
};

} // namespace tempo::ad
