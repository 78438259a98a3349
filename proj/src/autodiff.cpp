#include "chemrel/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "chemrel/error.hpp"

namespace chemrel::ad {

namespace detail {

struct TensorData {
  Shape shape;
  std::shared_ptr<std::vector<double>> values;
  std::vector<double> grad;
  bool requires_grad = false;
};

}  // namespace detail

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void check_finite(const Tensor& t, std::string_view op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(fmt::format("{}: non-finite value in output", op));
    }
  }
}

void require_rank2(const Tensor& t, std::string_view op) {
  if (t.shape().size() > 2) {
    throw DimensionError(fmt::format("{}: expected rank <= 2, got {}", op, shape_str(t.shape())));
  }
}

// Output of an op whose inputs are `inputs`.
Tensor make_output(std::size_t rows, std::size_t cols, std::initializer_list<const Tensor*> inputs) {
  bool grad = false;
  for (const Tensor* t : inputs) grad = grad || t->requires_grad();
  return Tensor::zeros({rows, cols}, grad);
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = product(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (product(shape) != values.size()) {
    throw DimensionError(fmt::format("tensor shape {} holds {} values, got {}", shape_str(shape),
                                     product(shape), values.size()));
  }
  auto data = std::make_shared<detail::TensorData>();
  data->shape = std::move(shape);
  data->values = std::make_shared<std::vector<double>>(std::move(values));
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return data_->shape; }
std::size_t Tensor::size() const { return data_->values->size(); }

std::size_t Tensor::rows() const {
  const auto& s = data_->shape;
  if (s.size() < 2) return 1;
  return s[s.size() - 2];
}

std::size_t Tensor::cols() const {
  const auto& s = data_->shape;
  if (s.empty()) return 1;
  return s.back();
}

std::span<const double> Tensor::values() const { return *data_->values; }
std::span<double> Tensor::mutable_values() { return *data_->values; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item(): tensor is not a scalar");
  return (*data_->values)[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return (*data_->values)[r * cols() + c]; }

bool Tensor::requires_grad() const { return data_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { data_->requires_grad = flag; }

bool Tensor::has_grad() const { return !data_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (data_->grad.empty()) data_->grad.assign(size(), 0.0);
  return data_->grad;
}

std::span<double> Tensor::grad_buffer() const {
  if (data_->grad.empty()) data_->grad.assign(size(), 0.0);
  return data_->grad;
}

void Tensor::zero_grad() const { std::fill(data_->grad.begin(), data_->grad.end(), 0.0); }

Tensor Tensor::detach() const {
  auto data = std::make_shared<detail::TensorData>();
  data->shape = data_->shape;
  data->values = data_->values;
  return Tensor(std::move(data));
}

void Tape::record(Backward fn) {
  if (consumed_) throw StaleTapeError("tape already consumed by backward(); re-run forward");
  ops_.push_back(std::move(fn));
}

void Tape::backward(const Tensor& output) {
  if (consumed_) throw StaleTapeError("backward() called twice on one forward sweep");
  if (output.size() != 1) throw DimensionError("backward(): output must be a scalar");
  consumed_ = true;
  if (!output.requires_grad()) return;
  Tensor seed = output;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError(fmt::format("matmul: inner dimensions differ ({} vs {})", shape_str(a.shape()),
                                     shape_str(b.shape())));
  }
  Tensor out = make_output(m, n, {&a, &b});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &ov[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  check_finite(out, "matmul");
  if (out.requires_grad()) {
    tape.record([a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        auto bv = b.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        auto av = a.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
          }
      }
    });
  }
  return out;
}

Tensor matmul_transposed(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_transposed");
  require_rank2(b, "matmul_transposed");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError(fmt::format("matmul_transposed: inner dimensions differ ({} vs {})",
                                     shape_str(a.shape()), shape_str(b.shape())));
  }
  Tensor out = make_output(m, n, {&a, &b});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      ov[i * n + j] = acc;
    }
  check_finite(out, "matmul_transposed");
  if (out.requires_grad()) {
    tape.record([a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        auto bv = b.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        auto av = a.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
          }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = make_output(n, m, {&x});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = xv[i * n + j];
  if (out.requires_grad()) {
    tape.record([x, out, m, n]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(
        fmt::format("add: shapes differ ({} vs {})", shape_str(a.shape()), shape_str(b.shape())));
  }
  Tensor out = make_output(a.rows(), a.cols(), {&a, &b});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  check_finite(out, "add");
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    throw DimensionError(fmt::format("add_row: bias has {} entries, rows have {}", bias.size(), n));
  }
  Tensor out = make_output(m, n, {&x, &bias});
  auto xv = x.values();
  auto bv = bias.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] + bv[j];
  check_finite(out, "add_row");
  if (out.requires_grad()) {
    tape.record([x, bias, out, m, n]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(
        fmt::format("mul: shapes differ ({} vs {})", shape_str(a.shape()), shape_str(b.shape())));
  }
  Tensor out = make_output(a.rows(), a.cols(), {&a, &b});
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  check_finite(out, "mul");
  if (out.requires_grad()) {
    tape.record([a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        auto bv = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        auto av = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  Tensor out = make_output(x.rows(), x.cols(), {&x});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * factor;
  check_finite(out, "scale");
  if (out.requires_grad()) {
    tape.record([x, out, factor]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out = make_output(1, 1, {&x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out.mutable_values()[0] = acc;
  check_finite(out, "sum");
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : x.grad_buffer()) v += g;
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols(), {&x});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      auto xv = x.values();
      // Subgradient 0 at the kink.
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x, std::span<const bool> masked_keys) {
  require_rank2(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (!masked_keys.empty() && masked_keys.size() != n) {
    throw DimensionError(fmt::format("softmax_rows: mask has {} entries, rows have {}",
                                     masked_keys.size(), n));
  }
  const auto is_masked = [&](std::size_t j) { return !masked_keys.empty() && masked_keys[j]; };
  for (double v : x.values()) {
    if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
  }
  Tensor out = make_output(m, n, {&x});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!is_masked(j)) mx = std::max(mx, xv[i * n + j]);
    if (!std::isfinite(mx)) throw InvalidInputError("softmax_rows: every key is masked");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = is_masked(j) ? 0.0 : std::exp(xv[i * n + j] - mx);
      ov[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) ov[i * n + j] /= total;
  }
  if (out.requires_grad()) {
    tape.record([x, out, m, n]() mutable {
      auto g = out.grad();
      auto y = out.values();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError(fmt::format("layer_norm: gain/bias sizes {}/{} differ from width {}",
                                     gain.size(), bias.size(), n));
  }
  Tensor out = make_output(m, n, {&x, &gain, &bias});
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  auto ov = out.mutable_values();
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mean) * inv_std[i];
      ov[i * n + j] = gv[j] * xhat[i * n + j] + bv[j];
    }
  }
  check_finite(out, "layer_norm");
  if (out.requires_grad()) {
    tape.record([x, gain, bias, out, m, n, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)]() mutable {
      auto g = out.grad();
      auto gv = gain.values();
      if (gain.requires_grad()) {
        auto gg = gain.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
      if (x.requires_grad()) {
        auto gx = x.grad_buffer();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gv[j];
            sum_d += d;
            sum_dx += d * xhat[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gv[j];
            gx[i * n + j] += inv_std[i] * (d - inv_n * sum_d - xhat[i * n + j] * inv_n * sum_dx);
          }
        }
      }
    });
  }
  return out;
}

double huber_value(double pred, double target, double delta) {
  const double d = std::abs(pred - target);
  return d <= delta ? 0.5 * d * d : delta * (d - 0.5 * delta);
}

Tensor huber_loss(Tape& tape, const Tensor& pred, double target, double delta) {
  if (pred.size() != 1) throw DimensionError("huber_loss: prediction must be a scalar");
  if (!(delta > 0.0)) throw InvalidInputError("huber_loss: delta must be positive");
  Tensor out = make_output(1, 1, {&pred});
  out.mutable_values()[0] = huber_value(pred.item(), target, delta);
  check_finite(out, "huber_loss");
  if (out.requires_grad()) {
    tape.record([pred, out, target, delta]() mutable {
      const double d = pred.item() - target;
      const double local = std::abs(d) <= delta ? d : (d > 0 ? delta : -delta);
      pred.grad_buffer()[0] += out.grad()[0] * local;
    });
  }
  return out;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t n = table.cols();
  for (std::size_t id : ids) {
    if (id >= table.rows()) {
      throw DimensionError(fmt::format("gather_rows: id {} out of range {}", id, table.rows()));
    }
  }
  Tensor out = make_output(ids.size(), n, {&table});
  auto tv = table.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(&tv[ids[i] * n], n, &ov[i * n]);
  if (out.requires_grad()) {
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    tape.record([table, out, rows = std::move(rows), n]() mutable {
      auto g = out.grad();
      auto gt = table.grad_buffer();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) gt[rows[i] * n + j] += g[i * n + j];
    });
  }
  return out;
}

Tensor select_row(Tape& tape, const Tensor& x, std::size_t row) {
  const std::size_t ids[] = {row};
  return gather_rows(tape, x, ids);
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin + count > n) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) exceeds width {}", begin, begin + count, n));
  }
  Tensor out = make_output(m, count, {&x});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&xv[i * n + begin], count, &ov[i * count]);
  if (out.requires_grad()) {
    tape.record([x, out, m, n, begin, count]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += g[i * count + j];
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool grad = false;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.cols();
    grad = grad || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, n}, grad);
  auto ov = out.mutable_values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pv = p.values();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(&pv[i * w], w, &ov[i * n + offset]);
    offset += w;
  }
  if (grad) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record([inputs = std::move(inputs), out, m, n]() mutable {
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& p : inputs) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto gp = p.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * n + offset + j];
        }
        offset += w;
      }
    });
  }
  return out;
}

}  // namespace chemrel::ad
