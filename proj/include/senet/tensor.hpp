#ifndef SENET_TENSOR_HPP
#define SENET_TENSOR_HPP

#include <cstddef>
#include <memory>
#include <numeric>
#include <vector>

namespace senet::ad {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense n-dimensional 64-bit array, row-major. The gradient buffer is
// allocated lazily on first accumulation and may be dropped once the
// backward pass no longer needs it.
class Tensor {
 public:
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, bool req = false)
      : shape(std::move(s)), data(product(shape), 0.0), requires_grad(req) {}

  static TensorPtr create(std::vector<std::size_t> s, bool req = false) {
    return std::make_shared<Tensor>(std::move(s), req);
  }
  static TensorPtr from_values(std::vector<std::size_t> s, std::vector<double> v,
                               bool req = false);
  static TensorPtr scalar(double v, bool req = false);

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  // Gradient buffer, allocated (zeroed) on demand.
  double* grad_data() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
  bool has_grad() const { return grad.size() == data.size(); }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }
  void drop_grad() {
    grad.clear();
    grad.shrink_to_fit();
  }

  static std::size_t product(const std::vector<std::size_t>& s) {
    std::size_t p = 1;
    for (auto d : s) p *= d;
    return p;
  }
};

inline TensorPtr Tensor::from_values(std::vector<std::size_t> s, std::vector<double> v,
                                     bool req) {
  auto t = create(std::move(s), req);
  t->data = std::move(v);
  return t;
}

inline TensorPtr Tensor::scalar(double v, bool req) {
  return from_values({1}, {v}, req);
}

}  // namespace senet::ad

#endif  // SENET_TENSOR_HPP
