#ifndef SENET_AUTODIFF_HPP
#define SENET_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "senet/tensor.hpp"

namespace senet::ad {

enum class Mode { train, eval };

// Records the forward graph in execution order; backward replays it in
// exact reverse. Ops register a node only when some input requires a
// gradient, so eval-mode forwards stay allocation-free on the tape side.
class Tape {
 public:
  void record(TensorPtr output, std::function<void()> backward_fn) {
    nodes_.push_back(Node{std::move(output), std::move(backward_fn)});
  }

  // Seeds d(loss)=1 and accumulates into every reachable grad buffer.
  // A second call without reset() throws DoubleBackward.
  void backward(const TensorPtr& loss);

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }
  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    TensorPtr output;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Worker-thread cap for the dense algebra. 1 (the default) guarantees
// bit-reproducible output streams.
void set_parallel_jobs(int jobs);
int parallel_jobs();

// ---- primitives -------------------------------------------------------
// Activations are batch-leading: (B, C, T) for signals, (B, F) for
// feature vectors. Every op validates shapes and throws ShapeMismatch.

// Cross-correlation (no kernel flip), zero padding, odd K.
// x: (B,Cin,T), weight: (Cout,Cin,K), bias: (Cout) -> (B,Cout,T') with
// T' = floor((T + 2p - K)/s) + 1.
TensorPtr conv1d(Tape* tape, const TensorPtr& x, const TensorPtr& weight,
                 const TensorPtr& bias, std::size_t stride, std::size_t padding);

// Per-channel normalization over (B,T). Train mode uses batch statistics
// and updates running stats in place: r <- (1-momentum)*r + momentum*stat
// (unbiased variance for the running update). Eval mode uses the running
// stats as constants.
TensorPtr batch_norm1d(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                       const TensorPtr& beta, const TensorPtr& running_mean,
                       const TensorPtr& running_var, Mode mode, double eps = 1e-5,
                       double momentum = 0.1);

TensorPtr relu(Tape* tape, const TensorPtr& x);

// Numerically stable; output clamped to the open interval (0,1).
TensorPtr sigmoid(Tape* tape, const TensorPtr& x);

// Max over windows with -inf padding semantics; gradient routes to the
// argmax (ties: lowest index). Requires padding <= (kernel-1)/2 so every
// window sees at least one real sample.
TensorPtr max_pool1d(Tape* tape, const TensorPtr& x, std::size_t kernel,
                     std::size_t stride, std::size_t padding);

// (B,C,T) -> (B,C), mean over T; gradient spreads uniformly.
TensorPtr global_avg_pool(Tape* tape, const TensorPtr& x);

// x: (B,Fin), weight: (Fout,Fin), bias: (Fout) or nullptr -> (B,Fout).
TensorPtr dense(Tape* tape, const TensorPtr& x, const TensorPtr& weight,
                const TensorPtr& bias);

// Inverted dropout: train zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval (or rate 0) is the identity.
TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, Mode mode,
                  std::mt19937_64* rng);

// Elementwise sum of two same-shape tensors.
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// y[b,c,t] = x[b,c,t] * s[b,c] with x: (B,C,T), s: (B,C).
TensorPtr scale_channels(Tape* tape, const TensorPtr& x, const TensorPtr& s);

// (B,F1) ++ (B,F2) -> (B,F1+F2).
TensorPtr concat_features(Tape* tape, const TensorPtr& a, const TensorPtr& b);

// Mean binary cross-entropy over all B*C elements, computed from logits
// in the fused log-sum-exp form. Targets must be exactly 0 or 1.
// Gradient w.r.t. logits is (sigmoid(z) - t)/(B*C).
TensorPtr bce_mean(Tape* tape, const TensorPtr& logits, const TensorPtr& targets);

inline void backward(Tape& tape, const TensorPtr& loss) { tape.backward(loss); }

}  // namespace senet::ad

#endif  // SENET_AUTODIFF_HPP
