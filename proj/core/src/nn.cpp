#include "mvtri/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mvtri::ad {

Var ParamStore::add(const std::string& name, Tensor init) {
  for (const auto& [n, v] : items_)
    if (n == name) throw std::invalid_argument("param already registered: " + name);
  Var v = make_param(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return v;
  return nullptr;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& [name, v] : items_) n += v->value.size();
  return n;
}

Tensor trunc_normal(std::vector<int64_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  double* d = t.data();
  for (int64_t i = 0, n = t.size(); i < n; ++i) {
    double x;
    do {
      x = rng.normal();
    } while (std::abs(x) > 2.0);
    d[i] = x * stddev;
  }
  return t;
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
               Init init, Rng& rng) {
  Tensor w = init == Init::Zero ? Tensor::zeros({in, out}) : trunc_normal({in, out}, 0.02, rng);
  weight = ps.add(prefix + ".weight", std::move(w));
  bias = ps.add(prefix + ".bias", Tensor::zeros({out}));
}

Attention::Attention(ParamStore& ps, const std::string& prefix, int64_t q_dim,
                     int64_t kv_dim, int64_t width, int head_dim, Rng& rng) {
  heads = static_cast<int>(width / head_dim);
  if (heads < 1) heads = 1;
  if (width % heads != 0)
    throw std::invalid_argument("attention: width not divisible by head count");
  q = Linear(ps, prefix + ".q", q_dim, width, Init::TruncNormal, rng);
  k = Linear(ps, prefix + ".k", kv_dim, width, Init::TruncNormal, rng);
  v = Linear(ps, prefix + ".v", kv_dim, width, Init::TruncNormal, rng);
  out = Linear(ps, prefix + ".out", width, width, Init::TruncNormal, rng);
}

Var Attention::operator()(const Var& x_q, const Var& x_kv) const {
  const int64_t width = q.out_features();
  const int64_t dh = width / heads;
  Var qx = q(x_q);
  Var kx = k(x_kv);
  Var vx = v(x_kv);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = slice_cols(qx, h * dh, dh);
    Var kh = slice_cols(kx, h * dh, dh);
    Var vh = slice_cols(vx, h * dh, dh);
    Var att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
    ctx.push_back(matmul(att, vh));
  }
  return out(heads == 1 ? ctx[0] : concat_cols(ctx));
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix, int64_t width, int64_t hidden,
         Rng& rng) {
  fc1 = Linear(ps, prefix + ".fc1", width, hidden, Init::TruncNormal, rng);
  fc2 = Linear(ps, prefix + ".fc2", hidden, width, Init::TruncNormal, rng);
}

AdaLnZero::AdaLnZero(ParamStore& ps, const std::string& prefix, int64_t cond_dim,
                     int64_t width, Rng& rng) {
  proj = Linear(ps, prefix + ".mod", cond_dim, 3 * width, Init::Zero, rng);
}

AdaLnZero::Mod AdaLnZero::operator()(const Var& cond, int64_t rows) const {
  const int64_t width = proj.out_features() / 3;
  Var m = proj(silu(cond));
  if (m->value.rows() == 1 && rows != 1) m = repeat_rows(reshape(m, {3 * width}), rows);
  if (m->value.rows() != rows)
    throw std::invalid_argument("adaLN: conditioning rows mismatch");
  return Mod{slice_cols(m, 0, width), slice_cols(m, width, width),
             slice_cols(m, 2 * width, width)};
}

}  // namespace mvtri::ad
