#include "waveforge/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "waveforge/ops.hpp"

namespace waveforge {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (const auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << ',';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

} // namespace detail

static void validate_shape(const Shape& shape, std::size_t data_len) {
    for (const auto d : shape) {
        if (d < 1) {
            throw ShapeError("tensor dimensions must be >= 1, got " + shape_str(shape));
        }
    }
    if (numel(shape) != static_cast<std::int64_t>(data_len)) {
        throw ShapeError("shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data_len));
    }
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape, data.size());
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = static_cast<std::size_t>(numel(shape));
    return from_data(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
    const auto n = static_cast<std::size_t>(numel(shape));
    return from_data(std::move(shape), std::vector<double>(n, 1.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = static_cast<std::size_t>(numel(shape));
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

std::span<double> Tensor::mutable_data() {
    if (node_->grad_fn) {
        throw TapeError("mutable_data: tensor is an op result; it is immutable once recorded");
    }
    return node_->data;
}

double Tensor::item() const {
    if (size() != 1) {
        throw ShapeError("item: tensor has shape " + shape_str(shape()) + ", expected one element");
    }
    return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
}

Tensor Tensor::grad() const {
    if (!node_->grad) {
        return Tensor();
    }
    return Tensor(node_->grad);
}

void Tensor::zero_grad() { node_->grad.reset(); }

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = node_->shape;
    node->data = node_->data;
    return Tensor(std::move(node));
}

Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               std::vector<Tensor> parents, GradFn fn) {
    validate_shape(shape, data.size());
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = name;
    bool track = detail::grad_enabled();
    if (track) {
        track = std::any_of(parents.begin(), parents.end(),
                            [](const Tensor& p) { return p.defined() && p.requires_grad(); });
    }
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->grad_fn = std::move(fn);
    }
    return Tensor(std::move(node));
}

namespace {

// Topological order of the recorded subgraph that can reach `root`.
std::vector<detail::TensorNode*> topo_order(detail::TensorNode* root) {
    std::vector<detail::TensorNode*> order;
    std::unordered_map<detail::TensorNode*, int> state; // 0 new, 1 open, 2 done
    std::vector<detail::TensorNode*> stack{root};
    while (!stack.empty()) {
        detail::TensorNode* n = stack.back();
        auto& st = state[n];
        if (st == 0) {
            st = 1;
            for (const auto& p : n->parents) {
                if (p.defined() && p.requires_grad() && state[p.node()] == 0) {
                    stack.push_back(p.node());
                }
            }
        } else {
            stack.pop_back();
            if (st == 1) {
                st = 2;
                order.push_back(n);
            }
        }
    }
    return order;
}

// Shared sweep for backward() and grad().
void sweep(const Tensor& output, bool create_graph,
           std::unordered_map<detail::TensorNode*, Tensor>& gmap) {
    detail::TensorNode* root = output.node();
    const auto order = topo_order(root);
    gmap[root] = Tensor::ones(root->shape);

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) {
        guard = std::make_unique<NoGradGuard>();
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* n = *it;
        if (!n->grad_fn) {
            continue;
        }
        auto found = gmap.find(n);
        if (found == gmap.end()) {
            continue; // not on a path from the output
        }
        const Tensor gout = found->second;
        auto parent_grads = n->grad_fn(gout);
        if (parent_grads.size() != n->parents.size()) {
            throw TapeError(std::string("grad rule of ") + n->op +
                            " returned wrong number of gradients");
        }
        for (std::size_t i = 0; i < parent_grads.size(); ++i) {
            const Tensor& p = n->parents[i];
            Tensor& g = parent_grads[i];
            if (!p.defined() || !p.requires_grad() || !g.defined()) {
                continue;
            }
            auto slot = gmap.find(p.node());
            if (slot == gmap.end()) {
                gmap.emplace(p.node(), g);
            } else {
                slot->second = ops::add(slot->second, g);
            }
        }
    }
}

} // namespace

void backward(const Tensor& loss, bool create_graph) {
    if (!loss.defined()) {
        throw TapeError("backward: undefined tensor");
    }
    if (loss.size() != 1) {
        throw TapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    detail::TensorNode* root = loss.node();
    if (!root->requires_grad) {
        throw TapeError("backward: loss is not connected to any recorded graph");
    }
    if (root->consumed) {
        throw TapeError("backward: graph below this loss was already consumed; "
                        "re-record the computation before running backward again");
    }
    root->consumed = true;

    std::unordered_map<detail::TensorNode*, Tensor> gmap;
    sweep(loss, create_graph, gmap);

    // Accumulate into grad slots (sum with any existing gradient).
    for (auto& [node, g] : gmap) {
        if (!node->requires_grad || node->grad_fn) {
            continue;
        }
        if (!node->grad) {
            node->grad = std::make_shared<detail::TensorNode>();
            node->grad->shape = node->shape;
            node->grad->data.assign(node->data.size(), 0.0);
        }
        const auto src = g.data();
        auto& dst = node->grad->data;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph) {
    if (!output.defined() || output.size() != 1) {
        throw TapeError("grad: output must be a defined scalar");
    }
    std::unordered_map<detail::TensorNode*, Tensor> gmap;
    if (output.node()->requires_grad) {
        sweep(output, create_graph, gmap);
    }
    std::vector<Tensor> result;
    result.reserve(inputs.size());
    for (const auto& in : inputs) {
        auto it = gmap.find(in.node());
        result.push_back(it != gmap.end() ? it->second : Tensor::zeros(in.shape()));
    }
    return result;
}

} // namespace waveforge
