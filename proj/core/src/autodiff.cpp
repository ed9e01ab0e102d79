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

#include "advloss/autodiff.hpp"

#include "advloss/errors.hpp"
#include "advloss/ops.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace advloss {

namespace {
thread_local bool g_grad_enabled = true;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node)
{
    Var v;
    v.node_ = std::move(node);
    return v;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var record(Tensor value, std::vector<Var> inputs, Node::Backward backward, const char* op)
{
    const bool any = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Var& v) { return v.requires_grad(); });
    if (!any) return Var(std::move(value), false);
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->requires_grad = true;
    node->op = op;
    return Var::from_node(std::move(node));
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph)
{
    if (output.size() != 1)
        throw ShapeError("grad() needs a one-element output, got " + to_string(output.shape()));

    std::unordered_set<const Node*> targets;
    for (const auto& w : wrt)
        if (w.defined()) targets.insert(w.node());

    // Post-order over nodes that require gradients, marking those from
    // which a target is reachable.
    std::vector<Node*> order;
    std::unordered_map<const Node*, bool> relevant;
    if (output.requires_grad()) {
        struct Frame {
            Node* node;
            std::size_t next;
        };
        std::vector<Frame> stack{{output.node(), 0}};
        relevant[output.node()] = false;
        while (!stack.empty()) {
            Frame& top = stack.back();
            if (top.next < top.node->inputs.size()) {
                Node* child = top.node->inputs[top.next++].node();
                if (child->requires_grad && !relevant.contains(child)) {
                    relevant[child] = false;
                    stack.push_back({child, 0});
                }
                continue;
            }
            Node* done = top.node;
            bool rel = targets.contains(done);
            for (const auto& in : done->inputs)
                if (in.requires_grad() && relevant[in.node()]) rel = true;
            relevant[done] = rel;
            order.push_back(done);
            stack.pop_back();
        }
    }

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    std::unordered_map<const Node*, Var> grads;
    if (output.requires_grad() && relevant[output.node()])
        grads[output.node()] = constant(Tensor(output.shape(), 1.0));

    // Reverse post-order is a topological order from the output down.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (!node->backward) continue;
        auto found = grads.find(node);
        if (found == grads.end()) continue;
        std::vector<char> need(node->inputs.size(), 0);
        bool any = false;
        for (std::size_t i = 0; i < need.size(); ++i) {
            const Var& in = node->inputs[i];
            need[i] = in.requires_grad() && relevant[in.node()];
            any = any || need[i];
        }
        if (!any) continue;
        Var self = Var::from_node(node->shared_from_this());
        std::vector<Var> in_grads = node->backward(self, found->second, need);
        for (std::size_t i = 0; i < need.size(); ++i) {
            if (!need[i] || !in_grads[i].defined()) continue;
            const Node* key = node->inputs[i].node();
            auto slot = grads.find(key);
            if (slot == grads.end())
                grads.emplace(key, in_grads[i]);
            else
                slot->second = add(slot->second, in_grads[i]);
        }
        if (!targets.contains(node)) grads.erase(node);
    }

    std::vector<Var> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto found = w.defined() ? grads.find(w.node()) : grads.end();
        if (found != grads.end())
            result.push_back(found->second);
        else
            result.push_back(constant(Tensor(w.defined() ? w.shape() : Shape{}, 0.0)));
    }
    return result;
}

} // namespace advloss
