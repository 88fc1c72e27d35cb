#include "senet/autodiff.hpp"

#include <Eigen/Core>
#ifdef _OPENMP
#include <omp.h>
#endif
#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <sstream>

#include "senet/errors.hpp"

namespace senet::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::MatrixXd;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;
using MapCol = Eigen::Map<ColMat>;

[[noreturn]] void shape_fail(const std::string& what) { throw ShapeMismatch(what); }

void require(bool ok, const std::string& what) {
  if (!ok) shape_fail(what);
}

std::string shape_str(const TensorPtr& t) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < t->ndim(); ++i) os << (i ? "," : "") << t->dim(i);
  os << ")";
  return os.str();
}

bool wants_grad(Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
  if (!tape) return false;
  for (auto* p : inputs)
    if (*p && (*p)->requires_grad) return true;
  return false;
}

double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    s = e / (1.0 + e);
  }
  // keep the value strictly inside (0,1) so gates and probabilities never
  // saturate to an endpoint
  if (s < DBL_MIN) s = DBL_MIN;
  const double hi = 1.0 - DBL_EPSILON / 2.0;  // largest double below 1
  if (s > hi) s = hi;
  return s;
}

// out-of-range reads are zeros (zero padding)
void im2col(const double* x, std::size_t cin, std::size_t t_in, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t t_out,
            std::size_t batch, double* m) {
  const std::size_t rows = cin * k;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x + b * cin * t_in;
    for (std::size_t t = 0; t < t_out; ++t) {
      double* col = m + (b * t_out + t) * rows;
      const long base = static_cast<long>(t * stride) - static_cast<long>(pad);
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xc = xb + c * t_in;
        double* dst = col + c * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const long idx = base + static_cast<long>(kk);
          dst[kk] = (idx >= 0 && idx < static_cast<long>(t_in)) ? xc[idx] : 0.0;
        }
      }
    }
  }
}

void col2im_add(const double* m, std::size_t cin, std::size_t t_in, std::size_t k,
                std::size_t stride, std::size_t pad, std::size_t t_out,
                std::size_t batch, double* dx) {
  const std::size_t rows = cin * k;
  for (std::size_t b = 0; b < batch; ++b) {
    double* db = dx + b * cin * t_in;
    for (std::size_t t = 0; t < t_out; ++t) {
      const double* col = m + (b * t_out + t) * rows;
      const long base = static_cast<long>(t * stride) - static_cast<long>(pad);
      for (std::size_t c = 0; c < cin; ++c) {
        double* dc = db + c * t_in;
        const double* src = col + c * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const long idx = base + static_cast<long>(kk);
          if (idx >= 0 && idx < static_cast<long>(t_in)) dc[idx] += src[kk];
        }
      }
    }
  }
}

int g_jobs = 1;

}  // namespace

void set_parallel_jobs(int jobs) {
  g_jobs = std::max(1, jobs);
  // record-level loops own the parallelism; nested Eigen threading would
  // oversubscribe the cores
  Eigen::setNbThreads(1);
}

int parallel_jobs() { return g_jobs; }

void Tape::backward(const TensorPtr& loss) {
  if (consumed_) throw DoubleBackward("backward already ran on this tape");
  if (!loss || loss->size() != 1)
    throw ShapeMismatch("backward expects a scalar loss tensor");
  consumed_ = true;
  loss->grad_data()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->has_grad()) it->backward_fn();
    // the producer has consumed this gradient; free it eagerly to keep the
    // peak footprint near the forward activation size
    it->output->drop_grad();
  }
}

TensorPtr conv1d(Tape* tape, const TensorPtr& x, const TensorPtr& weight,
                 const TensorPtr& bias, std::size_t stride, std::size_t padding) {
  require(x && x->ndim() == 3, "conv1d: input must be (B,Cin,T)");
  require(weight && weight->ndim() == 3, "conv1d: weight must be (Cout,Cin,K)");
  require(bias && bias->ndim() == 1, "conv1d: bias must be (Cout)");
  const std::size_t b_total = x->dim(0), cin = x->dim(1), t_in = x->dim(2);
  const std::size_t cout = weight->dim(0), k = weight->dim(2);
  require(weight->dim(1) == cin,
          "conv1d: weight Cin " + shape_str(weight) + " vs input " + shape_str(x));
  require(bias->dim(0) == cout, "conv1d: bias length != Cout");
  require(k % 2 == 1, "conv1d: kernel size must be odd");
  require(stride >= 1, "conv1d: stride must be >= 1");
  require(t_in + 2 * padding >= k, "conv1d: T + 2p < K");

  const std::size_t t_out = (t_in + 2 * padding - k) / stride + 1;
  auto y = Tensor::create({b_total, cout, t_out});

  // One im2col + GEMM per record, writing each (Cout x T') output block in
  // place; per-record y and dy blocks are already row-major matrices, so no
  // transposes are needed anywhere. Records are independent, so the loop
  // parallelizes with a static schedule; weight/bias gradients accumulate
  // into per-thread partials merged in thread order, which keeps every
  // jobs setting deterministic and jobs=1 bit-identical to sequential.
  const std::size_t rows = cin * k;
  const int jobs = std::max(1, std::min<int>(g_jobs, static_cast<int>(b_total)));
  {
    CMapRow wmat(weight->data.data(), cout, rows);
    Eigen::Map<const Eigen::VectorXd> bvec(bias->data.data(), cout);
#pragma omp parallel num_threads(jobs) if (jobs > 1)
    {
      std::vector<double> scratch(rows * t_out);
      MapCol m(scratch.data(), rows, t_out);
#pragma omp for schedule(static)
      for (long bi = 0; bi < static_cast<long>(b_total); ++bi) {
        const auto b = static_cast<std::size_t>(bi);
        im2col(x->data.data() + b * cin * t_in, cin, t_in, k, stride, padding, t_out, 1,
               scratch.data());
        MapRow yb(y->data.data() + b * cout * t_out, cout, t_out);
        yb.noalias() = wmat * m;
        yb.colwise() += bvec;
      }
    }
  }

  if (wants_grad(tape, {&x, &weight, &bias})) {
    y->requires_grad = true;
    tape->record(y, [x, weight, bias, y, stride, padding, b_total, cin, t_in, cout, k,
                     t_out, rows, jobs]() {
      const bool need_dx = x->requires_grad;
      const bool need_dw = weight->requires_grad;
      const bool need_db = bias->requires_grad;
      CMapRow wmat(weight->data.data(), cout, rows);
      double* dx = need_dx ? x->grad_data() : nullptr;
      std::vector<std::vector<double>> dw_part(
          static_cast<std::size_t>(jobs), std::vector<double>(need_dw ? cout * rows : 0, 0.0));
      std::vector<std::vector<double>> db_part(
          static_cast<std::size_t>(jobs), std::vector<double>(need_db ? cout : 0, 0.0));

#pragma omp parallel num_threads(jobs) if (jobs > 1)
      {
#ifdef _OPENMP
        const auto tid = static_cast<std::size_t>(omp_get_thread_num());
#else
        const std::size_t tid = 0;
#endif
        std::vector<double> scratch(rows * t_out);
        MapCol m(scratch.data(), rows, t_out);
        ColMat gcols(rows, t_out);
#pragma omp for schedule(static)
        for (long bi = 0; bi < static_cast<long>(b_total); ++bi) {
          const auto b = static_cast<std::size_t>(bi);
          CMapRow dyb(y->grad.data() + b * cout * t_out, cout, t_out);
          if (need_db) {
            // plain loops: vectorized reductions round differently depending
            // on buffer alignment, which would break bit-reproducibility
            double* db = db_part[tid].data();
            for (std::size_t c = 0; c < cout; ++c) {
              const double* row = y->grad.data() + (b * cout + c) * t_out;
              double acc = 0.0;
              for (std::size_t t = 0; t < t_out; ++t) acc += row[t];
              db[c] += acc;
            }
          }
          if (need_dw) {
            im2col(x->data.data() + b * cin * t_in, cin, t_in, k, stride, padding,
                   t_out, 1, scratch.data());
            MapRow dwp(dw_part[tid].data(), cout, rows);
            dwp.noalias() += dyb * m.transpose();
          }
          if (need_dx) {
            gcols.noalias() = wmat.transpose() * dyb;
            col2im_add(gcols.data(), cin, t_in, k, stride, padding, t_out, 1,
                       dx + b * cin * t_in);
          }
        }
      }

      if (need_dw) {
        double* dw = weight->grad_data();
        for (const auto& part : dw_part)
          for (std::size_t i = 0; i < part.size(); ++i) dw[i] += part[i];
      }
      if (need_db) {
        double* db = bias->grad_data();
        for (const auto& part : db_part)
          for (std::size_t i = 0; i < part.size(); ++i) db[i] += part[i];
      }
    });
  }
  return y;
}

TensorPtr batch_norm1d(Tape* tape, const TensorPtr& x, const TensorPtr& gamma,
                       const TensorPtr& beta, const TensorPtr& running_mean,
                       const TensorPtr& running_var, Mode mode, double eps,
                       double momentum) {
  require(x && x->ndim() == 3, "batch_norm1d: input must be (B,C,T)");
  const std::size_t b = x->dim(0), c = x->dim(1), t = x->dim(2);
  for (const TensorPtr& p : {gamma, beta, running_mean, running_var})
    require(p && p->ndim() == 1 && p->dim(0) == c, "batch_norm1d: per-channel arrays must be (C)");
  const std::size_t n = b * t;
  if (mode == Mode::train && n < 2)
    throw DegenerateBatch("batch_norm1d: train mode needs B*T >= 2");

  auto y = Tensor::create({b, c, t});
  std::vector<double> mean(c), invstd(c);

  if (mode == Mode::train) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      double sum = 0.0;
      for (std::size_t bi = 0; bi < b; ++bi) {
        const double* row = x->data.data() + (bi * c + ci) * t;
        for (std::size_t ti = 0; ti < t; ++ti) sum += row[ti];
      }
      const double mu = sum / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t bi = 0; bi < b; ++bi) {
        const double* row = x->data.data() + (bi * c + ci) * t;
        for (std::size_t ti = 0; ti < t; ++ti) {
          const double d = row[ti] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(n);
      mean[ci] = mu;
      invstd[ci] = 1.0 / std::sqrt(var + eps);
      const double var_unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
      running_mean->data[ci] = (1.0 - momentum) * running_mean->data[ci] + momentum * mu;
      running_var->data[ci] =
          (1.0 - momentum) * running_var->data[ci] + momentum * var_unbiased;
    }
  } else {
    for (std::size_t ci = 0; ci < c; ++ci) {
      mean[ci] = running_mean->data[ci];
      invstd[ci] = 1.0 / std::sqrt(running_var->data[ci] + eps);
    }
  }

  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double* src = x->data.data() + (bi * c + ci) * t;
      double* dst = y->data.data() + (bi * c + ci) * t;
      const double mu = mean[ci], is = invstd[ci];
      const double g = gamma->data[ci], be = beta->data[ci];
      for (std::size_t ti = 0; ti < t; ++ti) dst[ti] = g * (src[ti] - mu) * is + be;
    }

  if (wants_grad(tape, {&x, &gamma, &beta})) {
    y->requires_grad = true;
    const bool train = mode == Mode::train;
    tape->record(y, [x, gamma, beta, y, mean, invstd, b, c, t, train]() {
      const double n = static_cast<double>(b * t);
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double mu = mean[ci], is = invstd[ci], g = gamma->data[ci];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t bi = 0; bi < b; ++bi) {
          const double* dy = y->grad.data() + (bi * c + ci) * t;
          const double* xv = x->data.data() + (bi * c + ci) * t;
          for (std::size_t ti = 0; ti < t; ++ti) {
            sum_dy += dy[ti];
            sum_dy_xhat += dy[ti] * (xv[ti] - mu) * is;
          }
        }
        if (gamma->requires_grad) gamma->grad_data()[ci] += sum_dy_xhat;
        if (beta->requires_grad) beta->grad_data()[ci] += sum_dy;
        if (x->requires_grad) {
          double* dxall = x->grad_data();
          for (std::size_t bi = 0; bi < b; ++bi) {
            const double* dy = y->grad.data() + (bi * c + ci) * t;
            const double* xv = x->data.data() + (bi * c + ci) * t;
            double* dx = dxall + (bi * c + ci) * t;
            if (train) {
              for (std::size_t ti = 0; ti < t; ++ti) {
                const double xhat = (xv[ti] - mu) * is;
                dx[ti] += g * is * (dy[ti] - sum_dy / n - xhat * sum_dy_xhat / n);
              }
            } else {
              for (std::size_t ti = 0; ti < t; ++ti) dx[ti] += g * is * dy[ti];
            }
          }
        }
      }
    });
  }
  return y;
}

TensorPtr relu(Tape* tape, const TensorPtr& x) {
  require(x != nullptr, "relu: null input");
  auto y = Tensor::create(x->shape);
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) y->data[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
  if (wants_grad(tape, {&x})) {
    y->requires_grad = true;
    tape->record(y, [x, y, n]() {
      double* dx = x->grad_data();
      for (std::size_t i = 0; i < n; ++i)
        if (x->data[i] > 0.0) dx[i] += y->grad[i];
    });
  }
  return y;
}

TensorPtr sigmoid(Tape* tape, const TensorPtr& x) {
  require(x != nullptr, "sigmoid: null input");
  auto y = Tensor::create(x->shape);
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) y->data[i] = stable_sigmoid(x->data[i]);
  if (wants_grad(tape, {&x})) {
    y->requires_grad = true;
    tape->record(y, [x, y, n]() {
      double* dx = x->grad_data();
      for (std::size_t i = 0; i < n; ++i) {
        const double s = y->data[i];
        dx[i] += y->grad[i] * s * (1.0 - s);
      }
    });
  }
  return y;
}

TensorPtr max_pool1d(Tape* tape, const TensorPtr& x, std::size_t kernel,
                     std::size_t stride, std::size_t padding) {
  require(x && x->ndim() == 3, "max_pool1d: input must be (B,C,T)");
  require(kernel >= 1 && stride >= 1, "max_pool1d: kernel and stride must be >= 1");
  require(2 * padding <= kernel - 1, "max_pool1d: padding must be <= (kernel-1)/2");
  const std::size_t b = x->dim(0), c = x->dim(1), t = x->dim(2);
  require(t + 2 * padding >= kernel, "max_pool1d: T + 2p < kernel");
  const std::size_t t_out = (t + 2 * padding - kernel) / stride + 1;

  auto y = Tensor::create({b, c, t_out});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(b * c * t_out);
  for (std::size_t bc = 0; bc < b * c; ++bc) {
    const double* src = x->data.data() + bc * t;
    double* dst = y->data.data() + bc * t_out;
    std::uint32_t* am = argmax->data() + bc * t_out;
    for (std::size_t to = 0; to < t_out; ++to) {
      const long start = static_cast<long>(to * stride) - static_cast<long>(padding);
      double best = -HUGE_VAL;
      std::size_t best_i = 0;
      for (std::size_t kk = 0; kk < kernel; ++kk) {
        const long idx = start + static_cast<long>(kk);
        if (idx < 0 || idx >= static_cast<long>(t)) continue;  // -inf padding
        if (src[idx] > best) {
          best = src[idx];
          best_i = static_cast<std::size_t>(idx);
        }
      }
      dst[to] = best;
      am[to] = static_cast<std::uint32_t>(best_i);
    }
  }

  if (wants_grad(tape, {&x})) {
    y->requires_grad = true;
    tape->record(y, [x, y, argmax, b, c, t, t_out]() {
      double* dx = x->grad_data();
      for (std::size_t bc = 0; bc < b * c; ++bc) {
        const double* dy = y->grad.data() + bc * t_out;
        const std::uint32_t* am = argmax->data() + bc * t_out;
        for (std::size_t to = 0; to < t_out; ++to) dx[bc * t + am[to]] += dy[to];
      }
    });
  }
  return y;
}

TensorPtr global_avg_pool(Tape* tape, const TensorPtr& x) {
  require(x && x->ndim() == 3, "global_avg_pool: input must be (B,C,T)");
  const std::size_t b = x->dim(0), c = x->dim(1), t = x->dim(2);
  require(t >= 1, "global_avg_pool: empty time axis");
  auto y = Tensor::create({b, c});
  for (std::size_t bc = 0; bc < b * c; ++bc) {
    const double* src = x->data.data() + bc * t;
    double sum = 0.0;
    for (std::size_t ti = 0; ti < t; ++ti) sum += src[ti];
    y->data[bc] = sum / static_cast<double>(t);
  }
  if (wants_grad(tape, {&x})) {
    y->requires_grad = true;
    tape->record(y, [x, y, b, c, t]() {
      double* dx = x->grad_data();
      const double inv = 1.0 / static_cast<double>(t);
      for (std::size_t bc = 0; bc < b * c; ++bc) {
        const double g = y->grad[bc] * inv;
        double* dst = dx + bc * t;
        for (std::size_t ti = 0; ti < t; ++ti) dst[ti] += g;
      }
    });
  }
  return y;
}

TensorPtr dense(Tape* tape, const TensorPtr& x, const TensorPtr& weight,
                const TensorPtr& bias) {
  require(x && x->ndim() == 2, "dense: input must be (B,Fin)");
  require(weight && weight->ndim() == 2, "dense: weight must be (Fout,Fin)");
  const std::size_t b = x->dim(0), fin = x->dim(1), fout = weight->dim(0);
  require(weight->dim(1) == fin,
          "dense: weight " + shape_str(weight) + " vs input " + shape_str(x));
  if (bias) require(bias->ndim() == 1 && bias->dim(0) == fout, "dense: bias length != Fout");

  auto y = Tensor::create({b, fout});
  {
    CMapRow xm(x->data.data(), b, fin);
    CMapRow wm(weight->data.data(), fout, fin);
    MapRow ym(y->data.data(), b, fout);
    ym.noalias() = xm * wm.transpose();
    if (bias) {
      Eigen::Map<const Eigen::VectorXd> bv(bias->data.data(), fout);
      ym.rowwise() += bv.transpose();
    }
  }

  if (wants_grad(tape, {&x, &weight, &bias})) {
    y->requires_grad = true;
    tape->record(y, [x, weight, bias, y, b, fin, fout]() {
      CMapRow dy(y->grad.data(), b, fout);
      if (x->requires_grad) {
        CMapRow wm(weight->data.data(), fout, fin);
        MapRow dx(x->grad_data(), b, fin);
        dx.noalias() += dy * wm;
      }
      if (weight->requires_grad) {
        CMapRow xm(x->data.data(), b, fin);
        MapRow dw(weight->grad_data(), fout, fin);
        dw.noalias() += dy.transpose() * xm;
      }
      if (bias && bias->requires_grad) {
        // plain loop for the same alignment-stable rounding as conv1d
        double* db = bias->grad_data();
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < fout; ++j) db[j] += y->grad[i * fout + j];
      }
    });
  }
  return y;
}

TensorPtr dropout(Tape* tape, const TensorPtr& x, double rate, Mode mode,
                  std::mt19937_64* rng) {
  require(x != nullptr, "dropout: null input");
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (mode == Mode::eval || rate == 0.0) return x;  // exact identity
  require(rng != nullptr, "dropout: train mode needs an rng");

  const std::size_t n = x->size();
  auto mask = std::make_shared<std::vector<std::uint8_t>>(n);
  auto y = Tensor::create(x->shape);
  const double scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool keep = uni(*rng) >= rate;
    (*mask)[i] = keep;
    y->data[i] = keep ? x->data[i] * scale : 0.0;
  }
  if (wants_grad(tape, {&x})) {
    y->requires_grad = true;
    tape->record(y, [x, y, mask, scale, n]() {
      double* dx = x->grad_data();
      for (std::size_t i = 0; i < n; ++i)
        if ((*mask)[i]) dx[i] += y->grad[i] * scale;
    });
  }
  return y;
}

TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  require(a && b, "add: null input");
  require(a->shape == b->shape,
          "add: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  auto y = Tensor::create(a->shape);
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) y->data[i] = a->data[i] + b->data[i];
  if (wants_grad(tape, {&a, &b})) {
    y->requires_grad = true;
    tape->record(y, [a, b, y, n]() {
      if (a->requires_grad) {
        double* da = a->grad_data();
        for (std::size_t i = 0; i < n; ++i) da[i] += y->grad[i];
      }
      if (b->requires_grad) {
        double* db = b->grad_data();
        for (std::size_t i = 0; i < n; ++i) db[i] += y->grad[i];
      }
    });
  }
  return y;
}

TensorPtr scale_channels(Tape* tape, const TensorPtr& x, const TensorPtr& s) {
  require(x && x->ndim() == 3, "scale_channels: x must be (B,C,T)");
  require(s && s->ndim() == 2, "scale_channels: s must be (B,C)");
  const std::size_t b = x->dim(0), c = x->dim(1), t = x->dim(2);
  require(s->dim(0) == b && s->dim(1) == c,
          "scale_channels: " + shape_str(x) + " vs " + shape_str(s));
  auto y = Tensor::create({b, c, t});
  for (std::size_t bc = 0; bc < b * c; ++bc) {
    const double sv = s->data[bc];
    const double* src = x->data.data() + bc * t;
    double* dst = y->data.data() + bc * t;
    for (std::size_t ti = 0; ti < t; ++ti) dst[ti] = src[ti] * sv;
  }
  if (wants_grad(tape, {&x, &s})) {
    y->requires_grad = true;
    tape->record(y, [x, s, y, b, c, t]() {
      for (std::size_t bc = 0; bc < b * c; ++bc) {
        const double* dy = y->grad.data() + bc * t;
        if (x->requires_grad) {
          const double sv = s->data[bc];
          double* dx = x->grad_data() + bc * t;
          for (std::size_t ti = 0; ti < t; ++ti) dx[ti] += dy[ti] * sv;
        }
        if (s->requires_grad) {
          const double* xv = x->data.data() + bc * t;
          double acc = 0.0;
          for (std::size_t ti = 0; ti < t; ++ti) acc += dy[ti] * xv[ti];
          s->grad_data()[bc] += acc;
        }
      }
    });
  }
  return y;
}

TensorPtr concat_features(Tape* tape, const TensorPtr& a, const TensorPtr& b) {
  require(a && a->ndim() == 2 && b && b->ndim() == 2, "concat_features: inputs must be (B,F)");
  require(a->dim(0) == b->dim(0), "concat_features: batch sizes differ");
  const std::size_t bn = a->dim(0), f1 = a->dim(1), f2 = b->dim(1);
  auto y = Tensor::create({bn, f1 + f2});
  for (std::size_t i = 0; i < bn; ++i) {
    std::memcpy(y->data.data() + i * (f1 + f2), a->data.data() + i * f1,
                f1 * sizeof(double));
    std::memcpy(y->data.data() + i * (f1 + f2) + f1, b->data.data() + i * f2,
                f2 * sizeof(double));
  }
  if (wants_grad(tape, {&a, &b})) {
    y->requires_grad = true;
    tape->record(y, [a, b, y, bn, f1, f2]() {
      for (std::size_t i = 0; i < bn; ++i) {
        const double* dy = y->grad.data() + i * (f1 + f2);
        if (a->requires_grad) {
          double* da = a->grad_data() + i * f1;
          for (std::size_t j = 0; j < f1; ++j) da[j] += dy[j];
        }
        if (b->requires_grad) {
          double* db = b->grad_data() + i * f2;
          for (std::size_t j = 0; j < f2; ++j) db[j] += dy[f1 + j];
        }
      }
    });
  }
  return y;
}

TensorPtr bce_mean(Tape* tape, const TensorPtr& logits, const TensorPtr& targets) {
  require(logits && logits->ndim() == 2, "bce_mean: logits must be (B,C)");
  require(targets && targets->shape == logits->shape,
          "bce_mean: target shape " + shape_str(targets) + " vs logits " +
              shape_str(logits));
  const std::size_t n = logits->size();
  for (std::size_t i = 0; i < n; ++i)
    require(targets->data[i] == 0.0 || targets->data[i] == 1.0,
            "bce_mean: targets must be exactly 0 or 1");

  // loss per element: max(z,0) - z*t + log1p(exp(-|z|))
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits->data[i], t = targets->data[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  auto y = Tensor::scalar(total / static_cast<double>(n));

  if (wants_grad(tape, {&logits})) {
    y->requires_grad = true;
    tape->record(y, [logits, targets, y, n]() {
      const double g = y->grad[0] / static_cast<double>(n);
      double* dz = logits->grad_data();
      for (std::size_t i = 0; i < n; ++i)
        dz[i] += g * (stable_sigmoid(logits->data[i]) - targets->data[i]);
    });
  }
  return y;
}

}  // namespace senet::ad
