#pragma once

#include <string>
#include <vector>

#include "mvtri/ops.hpp"
#include "mvtri/rng.hpp"

namespace mvtri::ad {

// Ordered registry of named parameters. The order is the definition order,
// which fixes the checkpoint layout and the optimizer state layout.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  Var find(const std::string& name) const;
  int64_t total_size() const;

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

// Truncated normal (resampled beyond two standard deviations), the
// transformer init used throughout.
Tensor trunc_normal(std::vector<int64_t> shape, double stddev, Rng& rng);

enum class Init { TruncNormal, Zero };

struct Linear {
  Var weight;  // (in, out); y = x @ weight + bias
  Var bias;    // (out)

  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, Init init,
         Rng& rng);
  Var operator()(const Var& x) const { return add_rowvec(matmul(x, weight), bias); }
  int64_t in_features() const { return weight->value.dim(0); }
  int64_t out_features() const { return weight->value.dim(1); }
};

// Multi-head scaled dot-product attention, pre-norm convention is handled
// by the caller. Queries and keys/values may come from different streams.
struct Attention {
  Linear q, k, v, out;
  int heads = 1;

  Attention() = default;
  Attention(ParamStore& ps, const std::string& prefix, int64_t q_dim, int64_t kv_dim,
            int64_t width, int head_dim, Rng& rng);
  Var operator()(const Var& x_q, const Var& x_kv) const;
};

struct Mlp {
  Linear fc1, fc2;

  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& prefix, int64_t width, int64_t hidden, Rng& rng);
  Var operator()(const Var& x) const { return fc2(gelu(fc1(x))); }
};

// adaLN-Zero conditioning: a zero-initialized projection of the conditioning
// vector yields per-block (shift, scale, gate). Zero init makes every
// modulated sub-block the identity at initialization.
struct AdaLnZero {
  Linear proj;  // (cond_dim, 3*width), zero-initialized

  AdaLnZero() = default;
  AdaLnZero(ParamStore& ps, const std::string& prefix, int64_t cond_dim, int64_t width,
            Rng& rng);

  struct Mod {
    Var shift, scale, gate;  // each (rows, width)
  };
  // cond: (1, cond_dim) or a per-row (rows, cond_dim) conditioning stream
  Mod operator()(const Var& cond, int64_t rows) const;
};

// x + gate .* Block(LN(x) .* (1 + scale) + shift)
template <typename BlockFn>
Var adaln_block(const Var& x, const AdaLnZero::Mod& mod, BlockFn block) {
  Var h = layer_norm_rows(x);
  h = add(mul(h, add_scalar(mod.scale, 1.0)), mod.shift);
  return add(x, mul(block(h), mod.gate));
}

}  // namespace mvtri::ad
