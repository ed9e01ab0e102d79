// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

// Reverse-mode differentiation over Tensor values.
//
// Every operation records a node holding its value, its inputs and a
// backward rule. Backward rules are written with the same differentiable
// operations, so a gradient computed with `create_graph = true` is itself
// a graph that can be differentiated again (gradient penalties need
// exactly this).

#include "advloss/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace advloss {

class Var;

struct Node : std::enable_shared_from_this<Node> {
    /// Computes gradients for the inputs flagged in `need`; entries for
    /// unflagged inputs may be left undefined.
    using Backward =
        std::function<std::vector<Var>(const Var& self, const Var& grad_out, const std::vector<char>& need)>;

    Tensor value;
    std::vector<Var> inputs;
    Backward backward;
    bool requires_grad = false;
    const char* op = "leaf";
};

/// Shared handle to a graph node. Copies alias the same node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    /// Direct access for in-place parameter updates; never use on a
    /// node that other recorded operations depend on.
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    const char* op() const { return node_->op; }
    Node* node() const noexcept { return node_.get(); }

    /// A constant copy cut off from the graph.
    Var detach() const { return Var(node_->value, false); }

    static Var from_node(std::shared_ptr<Node> node);

private:
    std::shared_ptr<Node> node_;
};

inline Var constant(Tensor value) { return Var(std::move(value), false); }
inline Var parameter(Tensor value) { return Var(std::move(value), true); }

bool grad_enabled() noexcept;

/// Disables recording for its lifetime; operations produce constants.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Records an operation. Falls back to a constant when recording is off
/// or no input requires a gradient.
Var record(Tensor value, std::vector<Var> inputs, Node::Backward backward, const char* op);

/// Gradients of a one-element `output` with respect to each of `wrt`.
/// Inputs that `output` does not depend on get a zero tensor. With
/// `create_graph` the results are differentiable graph nodes.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

} // namespace advloss
