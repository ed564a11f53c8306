#include "tsrcan/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tsr {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_node_seq = 0;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

std::uint64_t next_node_seq() { return ++g_node_seq; }

template <typename T>
Tape<T> Tape<T>::collect(const BasicTensor<T>& root) {
  Tape tape;
  if (!root.node()) return tape;
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::shared_ptr<Node<T>>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : n->inputs) {
      if (in->node && seen.insert(in->node.get()).second) stack.push_back(in->node);
    }
    tape.ops.push_back(std::move(n));
  }
  std::sort(tape.ops.begin(), tape.ops.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward(): loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward(): loss does not depend on any tensor that requires grad");
  }
  if (loss.is_leaf()) {
    auto& g = loss.impl()->grad;
    if (g.empty()) g.assign(1, T(0));
    g[0] += T(1);
    return;
  }

  Tape<T> tape = Tape<T>::collect(loss);
  std::unordered_map<const Node<T>*, std::vector<T>> node_grads;
  std::unordered_map<TensorImpl<T>*, std::vector<T>> leaf_grads;
  node_grads[loss.node().get()] = std::vector<T>{T(1)};

  for (auto it = tape.ops.rbegin(); it != tape.ops.rend(); ++it) {
    Node<T>& node = **it;
    auto found = node_grads.find(&node);
    if (found == node_grads.end()) continue;
    std::vector<T> gout = std::move(found->second);
    node_grads.erase(found);

    auto out = node.output.lock();
    if (!out) throw UsageError("backward(): output of op '" + node.op + "' was released");

    std::vector<std::vector<T>*> gin(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      TensorImpl<T>* in = node.inputs[i].get();
      if (!in->requires_grad) continue;
      std::vector<T>& buf = in->node ? node_grads[in->node.get()] : leaf_grads[in];
      if (buf.empty()) buf.assign(in->data.size(), T(0));
      gin[i] = &buf;
    }
    node.backward(out->data, gout, gin);
  }

  for (auto& [impl, g] : leaf_grads) {
    if (impl->grad.empty()) impl->grad.assign(g.size(), T(0));
    for (std::size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
  }
}

template struct Tape<float>;
template struct Tape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace tsr
