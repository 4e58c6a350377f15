#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "umff/diff/tensor.hpp"

namespace umff::diff {

// Every differentiable operator. Recording on a tape requires an entry
// here, and the gradient-check suite iterates this list, so an operator
// cannot be added without its check.
#define UMFF_DIFF_OPS(X) \
  X(conv2d)              \
  X(relu)                \
  X(add)                 \
  X(sub)                 \
  X(mul)                 \
  X(scale)               \
  X(add_scalar)          \
  X(global_avg_pool)     \
  X(concat_channels)     \
  X(downsample_avg2)     \
  X(upsample_bilinear2)  \
  X(fft2)                \
  X(abs)                 \
  X(sum)                 \
  X(mean)                \
  X(softplus)            \
  X(log_gamma)           \
  X(ggd_nll)

enum class Op {
#define UMFF_OP_ENUM(name) name,
  UMFF_DIFF_OPS(UMFF_OP_ENUM)
#undef UMFF_OP_ENUM
};

std::string_view op_name(Op op);
std::span<const Op> all_ops();

/// Ordered record of executed operations. Entries are appended in
/// execution order, which is a topological order of the graph; backward
/// replays them in reverse.
template <typename T>
class Tape {
 public:
  struct Entry {
    Op op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    // Reads output.grad(), accumulates into the inputs that require grad.
    std::function<void()> backward;
  };

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// The tape operations record onto in the current thread, or nullptr.
template <typename T>
Tape<T>* active_tape();

/// Makes `tape` the active tape for the current thread for the scope's
/// lifetime. Scopes nest.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Seeds d(loss)/d(loss) = 1 and replays `tape` in reverse. Gradients
/// accumulate into existing buffers.
template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape);

namespace detail {

/// Records `out` as produced by `op` when a tape is active and some input
/// requires grad; marks `out` as requiring grad in that case.
template <typename T>
void record(Op op, std::vector<Tensor<T>> inputs, Tensor<T>& out, std::function<void()> fn);

}  // namespace detail

}  // namespace umff::diff
