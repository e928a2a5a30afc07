#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "waveforge/error.hpp"

namespace waveforge {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

// Gradient rule of a recorded operation: given the gradient flowing into the
// op's output, produce one gradient per parent (an undefined Tensor means
// "no gradient for this parent"). Rules are composed from tensor ops, so when
// they run with recording enabled the produced gradients are themselves
// differentiable (this is what the gradient-penalty term relies on).
using GradFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    bool consumed = false; // backward() already ran from this node
    std::shared_ptr<TensorNode> grad;
    std::vector<Tensor> parents;
    GradFn grad_fn; // empty for leaves
    const char* op = "leaf";
};

// Thread-local switch controlling whether new ops record onto the graph.
bool grad_enabled();
void set_grad_enabled(bool on);

} // namespace detail

// Disables graph recording for the current scope.
class NoGradGuard {
  public:
    NoGradGuard() : prev_(detail::grad_enabled()) { detail::set_grad_enabled(false); }
    ~NoGradGuard() { detail::set_grad_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Dense row-major N-d array of doubles, optionally carrying a gradient slot
// and a record of the operation that produced it. Value-semantic handle; the
// underlying buffer is shared and treated as immutable once another op has
// consumed it (parameter updates between training steps mutate leaves only).
class Tensor {
  public:
    Tensor() = default; // undefined tensor

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->data.size()); }
    std::size_t rank() const { return node_->shape.size(); }

    std::span<const double> data() const { return node_->data; }
    // Mutable view; valid on leaves only (optimizer updates, initialization).
    std::span<double> mutable_data();

    double item() const;
    double at(std::int64_t flat) const { return node_->data[static_cast<std::size_t>(flat)]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const { return !node_->grad_fn; }
    const char* op_name() const { return node_->op; }

    // Gradient accumulated by backward(); undefined until populated.
    Tensor grad() const;
    void zero_grad();

    // Detached copy sharing nothing with the graph.
    Tensor detach() const;

    detail::TensorNode* node() const { return node_.get(); }

    friend Tensor make_op(const char* name, Shape shape, std::vector<double> data,
                          std::vector<Tensor> parents, GradFn fn);
    friend void backward(const Tensor& loss, bool create_graph);
    friend std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                                    bool create_graph);

  private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

// Records a new op node. When recording is off or no parent requires a
// gradient, the parents and rule are dropped and the result is a plain leaf.
Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               std::vector<Tensor> parents, GradFn fn);

// Reverse-mode sweep from a scalar loss; populates .grad() on every
// requires_grad leaf reachable from it. With create_graph the sweep itself is
// recorded, making the produced gradients differentiable one level further.
// A given root can only be swept once (re-record by rebuilding the graph).
void backward(const Tensor& loss, bool create_graph = false);

// Gradients of a scalar output w.r.t. an explicit list of inputs. Does not
// touch .grad() slots and may be called repeatedly. Disconnected inputs get
// zero gradients.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph = false);

} // namespace waveforge
