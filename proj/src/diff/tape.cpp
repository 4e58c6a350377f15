#include "umff/diff/tape.hpp"

#include <array>

namespace umff::diff {

namespace {

constexpr std::array kOps = {
#define UMFF_OP_VALUE(name) Op::name,
    UMFF_DIFF_OPS(UMFF_OP_VALUE)
#undef UMFF_OP_VALUE
};

constexpr std::array<std::string_view, kOps.size()> kOpNames = {
#define UMFF_OP_NAME(name) #name,
    UMFF_DIFF_OPS(UMFF_OP_NAME)
#undef UMFF_OP_NAME
};

template <typename T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

}  // namespace

std::string_view op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::span<const Op> all_ops() { return kOps; }

template <typename T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + loss.shape().str());
  }
  loss.ensure_grad()[0] += T(1);
  const auto& entries = tape.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

namespace detail {

template <typename T>
void record(Op op, std::vector<Tensor<T>> inputs, Tensor<T>& out, std::function<void()> fn) {
  Tape<T>* tape = active_tape<T>();
  if (tape == nullptr) return;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return;
  out.set_requires_grad(true);
  tape->record(typename Tape<T>::Entry{op, std::move(inputs), out, std::move(fn)});
}

template void record<float>(Op, std::vector<Tensor<float>>, Tensor<float>&, std::function<void()>);
template void record<double>(Op, std::vector<Tensor<double>>, Tensor<double>&,
                             std::function<void()>);

}  // namespace detail

template Tape<float>* active_tape<float>();
template Tape<double>* active_tape<double>();
template class TapeScope<float>;
template class TapeScope<double>;
template void backward<float>(Tensor<float>&, Tape<float>&);
template void backward<double>(Tensor<double>&, Tape<double>&);

}  // namespace umff::diff
