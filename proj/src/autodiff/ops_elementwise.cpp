#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "mre/errors.hpp"
#include "mre/ops.hpp"

namespace mre {

namespace {

using detail::grad_sink;
using detail::Node;

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;  // per output axis, 0 where broadcast
  std::vector<std::size_t> b_strides;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t offset = out.size() - shape.size();
  std::size_t stride = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[offset + i] = shape[i] == 1 ? 0 : stride;
    stride *= shape[i];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ConfigError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    plan.out[i] = std::max(da, db);
  }
  plan.a_strides = aligned_strides(a, plan.out);
  plan.b_strides = aligned_strides(b, plan.out);
  return plan;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  std::size_t n = shape_numel(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  std::size_t rank = plan.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  // Innermost axis handled as a tight loop.
  std::size_t inner = rank ? plan.out[rank - 1] : 1;
  std::size_t sa = rank ? plan.a_strides[rank - 1] : 0;
  std::size_t sb = rank ? plan.b_strides[rank - 1] : 0;
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * sa, ib + k * sb);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      ia += plan.a_strides[ax];
      ib += plan.b_strides[ax];
      if (idx[ax] < plan.out[ax]) break;
      ia -= plan.a_strides[ax] * idx[ax];
      ib -= plan.b_strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <typename Fwd, typename Da, typename Db>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  std::vector<double> out(shape_numel(plan.out));
  auto ad = a.data();
  auto bd = b.data();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = fwd(ad[i], bd[j]); });
  return make_op_result(name, plan.out, std::move(out), {a, b}, [a, b, plan, da, db](const Node& self) {
    double* ga = grad_sink(a);
    double* gb = grad_sink(b);
    auto ad = a.data();
    auto bd = b.data();
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      double g = self.grad[o];
      if (ga) ga[i] += g * da(ad[i], bd[j], self.data[o]);
      if (gb) gb[j] += g * db(ad[i], bd[j], self.data[o]);
    });
  });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
  return make_op_result(name, a.shape(), std::move(out), {a}, [a, deriv](const Node& self) {
    double* ga = grad_sink(a);
    auto ad = a.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ga[i] += self.grad[i] * deriv(ad[i], self.data[i]);
  });
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  BroadcastPlan plan = plan_broadcast(a.shape(), shape);
  if (plan.out != shape) {
    throw ConfigError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(shape_numel(shape));
  auto ad = a.data();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = ad[i]; });
  return make_op_result("broadcast_to", shape, std::move(out), {a}, [a, plan](const Node& self) {
    double* ga = grad_sink(a);
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += self.grad[o]; });
  });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ConfigError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);
  return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Node& self) {
    CMap g(self.grad.data(), m, n);
    if (double* ga = grad_sink(a)) MMap(ga, m, k).noalias() += g * CMap(b.data().data(), k, n).transpose();
    if (double* gb = grad_sink(b)) MMap(gb, k, n).noalias() += CMap(a.data().data(), m, k).transpose() * g;
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ConfigError("transpose expects a matrix, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MMap(out.data(), n, m) = CMap(a.data().data(), m, n).transpose();
  return make_op_result("transpose", {n, m}, std::move(out), {a}, [a, m, n](const Node& self) {
    MMap(grad_sink(a), m, n) += CMap(self.grad.data(), n, m).transpose();
  });
}

}  // namespace mre
