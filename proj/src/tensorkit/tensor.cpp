// Copyright 2026 The OmniSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tensorkit/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "common/error.hpp"

namespace omniseg::tensor {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (int extent : shape) {
    require(extent > 0, ErrorKind::kDimension,
            "tensor extents must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(extent);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& Storage::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  s->data.assign(numel_of(shape), value);
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  require(numel_of(shape) == values.size(), ErrorKind::kDimension,
          "value count " + std::to_string(values.size()) +
              " does not match shape " + shape_str(shape));
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, ErrorKind::kDimension,
          "axis out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  require(numel() == 1, ErrorKind::kUsage,
          "item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return impl_->grad;
}

Tensor Tensor::detach() const {
  return from(impl_->shape, impl_->data, false);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.impl()->producer) return g;
  // Iterative post-order DFS: inputs land before their consumers.
  std::unordered_set<const Storage*> seen;
  std::vector<std::pair<std::shared_ptr<Storage>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  seen.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [node_out, next] = stack.back();
    const auto& inputs = node_out->producer->inputs;
    if (next < inputs.size()) {
      const auto& in = inputs[next++];
      if (in->producer && seen.insert(in.get()).second) {
        stack.emplace_back(in, 0);
      }
      continue;
    }
    g.order_.push_back(node_out);
    stack.pop_back();
  }
  return g;
}

std::vector<std::string> Graph::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& s : order_) names.emplace_back(s->producer->op);
  return names;
}

void Graph::run_backward(bool release_intermediate_grads) const {
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Storage& out = **it;
    if (out.grad.empty()) continue;  // nothing flowed here
    out.producer->backward(out);
  }
  if (release_intermediate_grads) {
    for (const auto& s : order_) {
      s->grad.clear();
      s->grad.shrink_to_fit();
    }
  }
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, ErrorKind::kUsage,
          "backward() needs a scalar loss");
  if (!loss.requires_grad()) return;
  auto& g = loss.impl()->ensure_grad();
  g[0] += 1.0;
  if (!loss.impl()->producer) return;
  Graph::trace(loss).run_backward();
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(Storage& out)> grad_fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
  if (!any) return out;
  auto node = std::make_shared<Node>();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) {
    if (t.defined()) node->inputs.push_back(t.impl());
  }
  node->backward = std::move(grad_fn);
  out.impl()->producer = std::move(node);
  out.impl()->requires_grad = true;
  return out;
}

}  // namespace omniseg::tensor
