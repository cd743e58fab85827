#include "mvtri/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace mvtri::ad {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap as_mat(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap as_mat(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(const Tensor&, GradStore&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool grad = false;
  if (grad_enabled())
    for (const auto& p : parents) grad = grad || p->requires_grad;
  if (grad) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
}

void check_rowvec(const Var& x, const Var& v, const char* op) {
  if (v->value.size() != x->value.cols())
    throw std::invalid_argument(std::string(op) + ": vector length " + v->value.shape_str() +
                                " does not match columns of " + x->value.shape_str());
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  out.add_(b->value);
  Node* ap = a.get();
  Node* bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](const Tensor& g, GradStore& s) {
    if (ap->requires_grad) s.grad(ap).add_(g);
    if (bp->requires_grad) s.grad(bp).add_(g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  const double* bd = b->value.data();
  double* od = out.data();
  for (int64_t i = 0, n = out.size(); i < n; ++i) od[i] -= bd[i];
  Node* ap = a.get();
  Node* bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](const Tensor& g, GradStore& s) {
    if (ap->requires_grad) s.grad(ap).add_(g);
    if (bp->requires_grad) {
      Tensor& gb = s.grad(bp);
      const double* gd = g.data();
      double* d = gb.data();
      for (int64_t i = 0, n = gb.size(); i < n; ++i) d[i] -= gd[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  const double* bd = b->value.data();
  double* od = out.data();
  for (int64_t i = 0, n = out.size(); i < n; ++i) od[i] *= bd[i];
  Node* ap = a.get();
  Node* bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](const Tensor& g, GradStore& s) {
    const double* gd = g.data();
    if (ap->requires_grad) {
      Tensor& ga = s.grad(ap);
      const double* bv = bp->value.data();
      double* d = ga.data();
      for (int64_t i = 0, n = ga.size(); i < n; ++i) d[i] += gd[i] * bv[i];
    }
    if (bp->requires_grad) {
      Tensor& gb = s.grad(bp);
      const double* av = ap->value.data();
      double* d = gb.data();
      for (int64_t i = 0, n = gb.size(); i < n; ++i) d[i] += gd[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a->value;
  out.scale_(s);
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap, s](const Tensor& g, GradStore& st) {
    Tensor& ga = st.grad(ap);
    const double* gd = g.data();
    double* d = ga.data();
    for (int64_t i = 0, n = ga.size(); i < n; ++i) d[i] += gd[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  double* od = out.data();
  for (int64_t i = 0, n = out.size(); i < n; ++i) od[i] += s;
  Node* ap = a.get();
  return make_node(std::move(out), {a},
                   [ap](const Tensor& g, GradStore& st) { st.grad(ap).add_(g); });
}

Var add_rowvec(const Var& x, const Var& v) {
  check_rowvec(x, v, "add_rowvec");
  Tensor out = x->value;
  const int64_t rows = out.rows(), cols = out.cols();
  const double* vd = v->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    double* o = out.row(r);
    for (int64_t c = 0; c < cols; ++c) o[c] += vd[c];
  }
  Node* xp = x.get();
  Node* vp = v.get();
  return make_node(std::move(out), {x, v}, [xp, vp](const Tensor& g, GradStore& s) {
    if (xp->requires_grad) s.grad(xp).add_(g);
    if (vp->requires_grad) {
      Tensor& gv = s.grad(vp);
      double* d = gv.data();
      const int64_t rows = g.rows(), cols = g.cols();
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g.row(r);
        for (int64_t c = 0; c < cols; ++c) d[c] += gr[c];
      }
    }
  });
}

Var mul_rowvec(const Var& x, const Var& v) {
  check_rowvec(x, v, "mul_rowvec");
  Tensor out = x->value;
  const int64_t rows = out.rows(), cols = out.cols();
  const double* vd = v->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    double* o = out.row(r);
    for (int64_t c = 0; c < cols; ++c) o[c] *= vd[c];
  }
  Node* xp = x.get();
  Node* vp = v.get();
  return make_node(std::move(out), {x, v}, [xp, vp](const Tensor& g, GradStore& s) {
    const int64_t rows = g.rows(), cols = g.cols();
    if (xp->requires_grad) {
      Tensor& gx = s.grad(xp);
      const double* vd = vp->value.data();
      for (int64_t r = 0; r < rows; ++r) {
        double* d = gx.row(r);
        const double* gr = g.row(r);
        for (int64_t c = 0; c < cols; ++c) d[c] += gr[c] * vd[c];
      }
    }
    if (vp->requires_grad) {
      Tensor& gv = s.grad(vp);
      double* d = gv.data();
      const double* xd = xp->value.data();
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g.row(r);
        const double* xr = xd + r * cols;
        for (int64_t c = 0; c < cols; ++c) d[c] += gr[c] * xr[c];
      }
    }
  });
}

Var repeat_rows(const Var& v, int64_t n) {
  const int64_t cols = v->value.size();
  Tensor out({n, cols});
  for (int64_t r = 0; r < n; ++r)
    std::copy(v->value.data(), v->value.data() + cols, out.row(r));
  Node* vp = v.get();
  return make_node(std::move(out), {v}, [vp, n, cols](const Tensor& g, GradStore& s) {
    Tensor& gv = s.grad(vp);
    double* d = gv.data();
    for (int64_t r = 0; r < n; ++r) {
      const double* gr = g.row(r);
      for (int64_t c = 0; c < cols; ++c) d[c] += gr[c];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions " + av.shape_str() + " vs " +
                                bv.shape_str());
  Tensor out({av.rows(), bv.cols()});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  Node* ap = a.get();
  Node* bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp](const Tensor& g, GradStore& s) {
    if (ap->requires_grad) {
      Tensor& ga = s.grad(ap);
      as_mat(ga).noalias() += as_mat(g) * as_mat(bp->value).transpose();
    }
    if (bp->requires_grad) {
      Tensor& gb = s.grad(bp);
      as_mat(gb).noalias() += as_mat(ap->value).transpose() * as_mat(g);
    }
  });
}

Var transpose(const Var& a) {
  const Tensor& av = a->value;
  if (av.rank() != 2) throw std::invalid_argument("transpose: rank-2 required");
  Tensor out({av.cols(), av.rows()});
  as_mat(out) = as_mat(av).transpose();
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap](const Tensor& g, GradStore& s) {
    Tensor& ga = s.grad(ap);
    as_mat(ga) += as_mat(g).transpose();
  });
}

namespace {

template <typename Fwd, typename Dfx>
Var unary_op(const Var& a, Fwd fwd, Dfx dfx) {
  Tensor out = a->value;
  double* od = out.data();
  for (int64_t i = 0, n = out.size(); i < n; ++i) od[i] = fwd(od[i]);
  Node* ap = a.get();
  return make_node(std::move(out), {a}, [ap, dfx](const Tensor& g, GradStore& s) {
    Tensor& ga = s.grad(ap);
    const double* gd = g.data();
    const double* xd = ap->value.data();
    double* d = ga.data();
    for (int64_t i = 0, n = ga.size(); i < n; ++i) d[i] += gd[i] * dfx(xd[i]);
  });
}

}  // namespace

Var relu(const Var& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary_op(
      a,
      [](double x) {
        double u = k * (x + c * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x) {
        double u = k * (x + c * x * x * x);
        double t = std::tanh(u);
        double du = k * (1.0 + 3.0 * c * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Var silu(const Var& a) {
  return unary_op(
      a,
      [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x) {
        double sg = 1.0 / (1.0 + std::exp(-x));
        return sg * (1.0 + x * (1.0 - sg));
      });
}

Var sigmoid(const Var& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        double sg = 1.0 / (1.0 + std::exp(-x));
        return sg * (1.0 - sg);
      });
}

Var softplus(const Var& a) {
  return unary_op(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var layer_norm_rows(const Var& x, double eps) {
  const Tensor& xv = x->value;
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (cols < 1) throw std::invalid_argument("layer_norm_rows: empty rows");
  Tensor out(xv.shape());
  Tensor inv_std({rows});
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.row(r);
    double mean = 0.0;
    for (int64_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      double d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* o = out.row(r);
    for (int64_t c = 0; c < cols; ++c) o[c] = (xr[c] - mean) * is;
  }
  Node* xp = x.get();
  Node* self = nullptr;
  auto node = make_node(std::move(out), {x}, nullptr);
  self = node.get();
  if (node->requires_grad) {
    node->backprop = [xp, self, inv_std](const Tensor& g, GradStore& s) {
      // d/dx of y = (x - mean) * inv_std, propagated through mean and var
      Tensor& gx = s.grad(xp);
      const Tensor& y = self->value;
      const int64_t rows = y.rows(), cols = y.cols();
      const double n = static_cast<double>(cols);
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g.row(r);
        const double* yr = y.row(r);
        double* d = gx.row(r);
        double sum_g = 0.0, sum_gy = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          sum_g += gr[c];
          sum_gy += gr[c] * yr[c];
        }
        const double is = inv_std[r];
        for (int64_t c = 0; c < cols; ++c)
          d[c] += is * (gr[c] - sum_g / n - yr[c] * sum_gy / n);
      }
    };
  }
  return node;
}

Var softmax_rows(const Var& x) {
  const Tensor& xv = x->value;
  const int64_t rows = xv.rows(), cols = xv.cols();
  Tensor out(xv.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.row(r);
    double m = xr[0];
    for (int64_t c = 1; c < cols; ++c) m = std::max(m, xr[c]);
    double z = 0.0;
    double* o = out.row(r);
    for (int64_t c = 0; c < cols; ++c) {
      o[c] = std::exp(xr[c] - m);
      z += o[c];
    }
    for (int64_t c = 0; c < cols; ++c) o[c] /= z;
  }
  Node* xp = x.get();
  auto node = make_node(std::move(out), {x}, nullptr);
  Node* self = node.get();
  if (node->requires_grad) {
    node->backprop = [xp, self](const Tensor& g, GradStore& s) {
      Tensor& gx = s.grad(xp);
      const Tensor& y = self->value;
      const int64_t rows = y.rows(), cols = y.cols();
      for (int64_t r = 0; r < rows; ++r) {
        const double* gr = g.row(r);
        const double* yr = y.row(r);
        double* d = gx.row(r);
        double dot = 0.0;
        for (int64_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
        for (int64_t c = 0; c < cols; ++c) d[c] += yr[c] * (gr[c] - dot);
      }
    };
  }
  return node;
}

Var reshape(const Var& x, std::vector<int64_t> shape) {
  Tensor out = x->value.reshaped(shape);
  Node* xp = x.get();
  return make_node(std::move(out), {x}, [xp](const Tensor& g, GradStore& s) {
    Tensor& gx = s.grad(xp);
    const double* gd = g.data();
    double* d = gx.data();
    for (int64_t i = 0, n = gx.size(); i < n; ++i) d[i] += gd[i];
  });
}

Var slice_cols(const Var& x, int64_t c0, int64_t len) {
  const Tensor& xv = x->value;
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (c0 < 0 || c0 + len > cols) throw std::out_of_range("slice_cols: range");
  Tensor out({rows, len});
  for (int64_t r = 0; r < rows; ++r)
    std::copy(xv.row(r) + c0, xv.row(r) + c0 + len, out.row(r));
  Node* xp = x.get();
  return make_node(std::move(out), {x}, [xp, c0, len](const Tensor& g, GradStore& s) {
    Tensor& gx = s.grad(xp);
    const int64_t rows = g.rows();
    const int64_t cols = gx.cols();
    for (int64_t r = 0; r < rows; ++r) {
      const double* gr = g.row(r);
      double* d = gx.data() + r * cols + c0;
      for (int64_t c = 0; c < len; ++c) d[c] += gr[c];
    }
  });
}

Var slice_rows(const Var& x, int64_t r0, int64_t len) {
  const Tensor& xv = x->value;
  const int64_t rows = xv.rows(), cols = xv.cols();
  if (r0 < 0 || r0 + len > rows) throw std::out_of_range("slice_rows: range");
  Tensor out({len, cols});
  std::copy(xv.row(r0), xv.row(r0) + len * cols, out.data());
  Node* xp = x.get();
  return make_node(std::move(out), {x}, [xp, r0, len](const Tensor& g, GradStore& s) {
    Tensor& gx = s.grad(xp);
    const int64_t cols = gx.cols();
    const double* gd = g.data();
    double* d = gx.row(r0);
    for (int64_t i = 0, n = len * cols; i < n; ++i) d[i] += gd[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int64_t cols = parts[0]->value.cols();
  int64_t rows = 0;
  for (const auto& p : parts) {
    if (p->value.cols() != cols)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += p->value.rows();
  }
  Tensor out({rows, cols});
  int64_t r = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data(), p->value.data() + p->value.size(), out.row(r));
    r += p->value.rows();
  }
  std::vector<Var> parents = parts;
  return make_node(std::move(out), parents, [parents, cols](const Tensor& g, GradStore& s) {
    int64_t r = 0;
    for (const auto& p : parents) {
      const int64_t n = p->value.size();
      if (p->requires_grad) {
        Tensor& gp = s.grad(p.get());
        const double* gd = g.data() + r * cols;
        double* d = gp.data();
        for (int64_t i = 0; i < n; ++i) d[i] += gd[i];
      }
      r += p->value.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int64_t rows = parts[0]->value.rows();
  int64_t cols = 0;
  for (const auto& p : parts) {
    if (p->value.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p->value.cols();
  }
  Tensor out({rows, cols});
  int64_t c = 0;
  for (const auto& p : parts) {
    const int64_t pc = p->value.cols();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(p->value.row(r), p->value.row(r) + pc, out.row(r) + c);
    c += pc;
  }
  std::vector<Var> parents = parts;
  return make_node(std::move(out), parents, [parents, rows](const Tensor& g, GradStore& s) {
    int64_t c = 0;
    for (const auto& p : parents) {
      const int64_t pc = p->value.cols();
      if (p->requires_grad) {
        Tensor& gp = s.grad(p.get());
        for (int64_t r = 0; r < rows; ++r) {
          const double* gr = g.row(r) + c;
          double* d = gp.row(r);
          for (int64_t i = 0; i < pc; ++i) d[i] += gr[i];
        }
      }
      c += pc;
    }
  });
}

Var gather_rows(const Var& table, std::vector<int64_t> indices) {
  const Tensor& tv = table->value;
  const int64_t rows = tv.rows(), cols = tv.cols();
  Tensor out({static_cast<int64_t>(indices.size()), cols});
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t idx = indices[i];
    if (idx < 0 || idx >= rows) throw std::out_of_range("gather_rows: index");
    std::copy(tv.row(idx), tv.row(idx) + cols, out.row(static_cast<int64_t>(i)));
  }
  Node* tp = table.get();
  return make_node(std::move(out), {table},
                   [tp, indices = std::move(indices), cols](const Tensor& g, GradStore& s) {
                     Tensor& gt = s.grad(tp);
                     for (size_t i = 0; i < indices.size(); ++i) {
                       const double* gr = g.row(static_cast<int64_t>(i));
                       double* d = gt.row(indices[i]);
                       for (int64_t c = 0; c < cols; ++c) d[c] += gr[c];
                     }
                   });
}

Var sum_all(const Var& x) {
  Tensor out = Tensor::scalar(x->value.sum());
  Node* xp = x.get();
  return make_node(std::move(out), {x}, [xp](const Tensor& g, GradStore& s) {
    Tensor& gx = s.grad(xp);
    const double gv = g[0];
    double* d = gx.data();
    for (int64_t i = 0, n = gx.size(); i < n; ++i) d[i] += gv;
  });
}

Var mean_all(const Var& x) {
  const double n = static_cast<double>(x->value.size());
  return scale(sum_all(x), 1.0 / n);
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  const int64_t n = a->value.size();
  double acc = 0.0;
  const double* ad = a->value.data();
  const double* bd = b->value.data();
  for (int64_t i = 0; i < n; ++i) {
    double d = ad[i] - bd[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  Node* ap = a.get();
  Node* bp = b.get();
  return make_node(std::move(out), {a, b}, [ap, bp, n](const Tensor& g, GradStore& s) {
    const double k = 2.0 * g[0] / static_cast<double>(n);
    const double* av = ap->value.data();
    const double* bv = bp->value.data();
    if (ap->requires_grad) {
      double* d = s.grad(ap).data();
      for (int64_t i = 0; i < n; ++i) d[i] += k * (av[i] - bv[i]);
    }
    if (bp->requires_grad) {
      double* d = s.grad(bp).data();
      for (int64_t i = 0; i < n; ++i) d[i] -= k * (av[i] - bv[i]);
    }
  });
}

}  // namespace mvtri::ad
