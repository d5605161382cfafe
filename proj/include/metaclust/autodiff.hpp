#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "metaclust/params.hpp"
#include "metaclust/tape.hpp"

namespace metaclust {

// Builds a 1x1 tape value from one parameter set. The node order matches the
// ParamSet entry order.
using ScalarFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Builds a 1x1 tape value from two parameter sets (w, theta).
using BilinearFn =
    std::function<Value(Tape&, const std::vector<Value>&, const std::vector<Value>&)>;

namespace detail {

inline std::vector<Value> push_leaves(Tape& t, const ParamSet& p) {
  std::vector<Value> nodes;
  nodes.reserve(p.count());
  for (std::size_t i = 0; i < p.count(); ++i) nodes.push_back(t.leaf(p.mat(i)));
  return nodes;
}

inline ParamSet read_like(Tape& t, const ParamSet& shape, const std::vector<Value>& vals) {
  ParamSet out;
  for (std::size_t i = 0; i < shape.count(); ++i) out.add(shape.name(i), t.val(vals[i]));
  return out;
}

}  // namespace detail

// Pushes each entry of a ParamSet as a differentiable leaf, in entry order.
inline std::vector<Value> autodiff_leaves(Tape& t, const ParamSet& p) {
  return detail::push_leaves(t, p);
}

inline double eval_scalar(const ScalarFn& fn, const ParamSet& params) {
  Tape t;
  auto nodes = detail::push_leaves(t, params);
  return t.val(fn(t, nodes))(0, 0);
}

// Exact reverse-mode gradient of fn at params.
inline ParamSet grad(const ScalarFn& fn, const ParamSet& params) {
  Tape t;
  auto nodes = detail::push_leaves(t, params);
  Value out = fn(t, nodes);
  auto adj = t.backward(out, nodes);
  return detail::read_like(t, params, adj);
}

// Gradient over theta of outer(w - eta * grad_w inner(w, theta)): the inner
// SGD step is recorded on the tape, so the second backward pass composes the
// adjoints of the first one (double backprop).
inline ParamSet meta_grad(const BilinearFn& inner_fn, const ScalarFn& outer_fn,
                          const ParamSet& w, const ParamSet& theta, double eta) {
  if (eta < 0.0) throw std::invalid_argument("meta_grad: eta must be >= 0");
  Tape t;
  auto w_nodes = detail::push_leaves(t, w);
  auto th_nodes = detail::push_leaves(t, theta);
  Value inner = inner_fn(t, w_nodes, th_nodes);
  auto gw = t.backward(inner, w_nodes);
  std::vector<Value> w_stepped;
  w_stepped.reserve(w_nodes.size());
  for (std::size_t i = 0; i < w_nodes.size(); ++i)
    w_stepped.push_back(t.sub(w_nodes[i], t.scale(gw[i], eta)));
  Value outer = outer_fn(t, w_stepped);
  auto gth = t.backward(outer, th_nodes);
  return detail::read_like(t, theta, gth);
}

// Value of outer(w - eta * grad_w inner(w, theta)); used by the meta
// finite-difference oracle and by tests.
inline double eval_meta_objective(const BilinearFn& inner_fn, const ScalarFn& outer_fn,
                                  const ParamSet& w, const ParamSet& theta, double eta) {
  Tape t;
  auto w_nodes = detail::push_leaves(t, w);
  auto th_nodes = detail::push_leaves(t, theta);
  Value inner = inner_fn(t, w_nodes, th_nodes);
  auto gw = t.backward(inner, w_nodes);
  std::vector<Value> w_stepped;
  w_stepped.reserve(w_nodes.size());
  for (std::size_t i = 0; i < w_nodes.size(); ++i)
    w_stepped.push_back(t.sub(w_nodes[i], t.scale(gw[i], eta)));
  return t.val(outer_fn(t, w_stepped))(0, 0);
}

namespace detail {

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace detail

// Central finite differences per coordinate against grad(); returns the worst
// relative error (with a small absolute floor so near-zero entries do not
// blow up the ratio).
inline double finite_diff_check(const ScalarFn& fn, const ParamSet& params,
                                double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("finite_diff_check: epsilon <= 0");
  const Eigen::VectorXd g = grad(fn, params).flatten();
  Eigen::VectorXd flat = params.flatten();
  double worst = 0.0;
  ParamSet probe = params;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + epsilon;
    probe.unflatten(flat);
    const double fp = eval_scalar(fn, probe);
    flat[i] = saved - epsilon;
    probe.unflatten(flat);
    const double fm = eval_scalar(fn, probe);
    flat[i] = saved;
    const double fd = (fp - fm) / (2.0 * epsilon);
    worst = std::max(worst, detail::rel_error(fd, g[i]));
  }
  probe.unflatten(flat);
  return worst;
}

// Same oracle for the meta gradient: numeric central differences over theta of
// eval_meta_objective vs meta_grad.
inline double meta_finite_diff_check(const BilinearFn& inner_fn, const ScalarFn& outer_fn,
                                     const ParamSet& w, const ParamSet& theta, double eta,
                                     double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("meta_finite_diff_check: epsilon <= 0");
  const Eigen::VectorXd g = meta_grad(inner_fn, outer_fn, w, theta, eta).flatten();
  Eigen::VectorXd flat = theta.flatten();
  double worst = 0.0;
  ParamSet probe = theta;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + epsilon;
    probe.unflatten(flat);
    const double fp = eval_meta_objective(inner_fn, outer_fn, w, probe, eta);
    flat[i] = saved - epsilon;
    probe.unflatten(flat);
    const double fm = eval_meta_objective(inner_fn, outer_fn, w, probe, eta);
    flat[i] = saved;
    const double fd = (fp - fm) / (2.0 * epsilon);
    worst = std::max(worst, detail::rel_error(fd, g[i]));
  }
  return worst;
}

}  // namespace metaclust
