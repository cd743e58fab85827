#include "mvtri/text_embedder.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace mvtri {

using ad::Var;

const std::vector<std::string>& caption_vocabulary() {
  static const std::vector<std::string> kVocab = {
      "a",    "above",  "an",     "and",   "behind", "below",  "blue",
      "box",  "cyan",   "front",  "green", "in",     "left",   "magenta",
      "of",   "orange", "purple", "red",   "right",  "scene",  "sphere",
      "with", "yellow",
  };
  return kVocab;
}

TextCondition tokenize_text(const std::string& prompt) {
  const auto& vocab = caption_vocabulary();
  TextCondition cond;
  std::istringstream is(prompt);
  for (std::string w; is >> w;) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto it = std::lower_bound(vocab.begin(), vocab.end(), w);
    if (it == vocab.end() || *it != w)
      throw std::invalid_argument("text: word outside the caption vocabulary: '" + w + "'");
    cond.token_ids.push_back(static_cast<int>(it - vocab.begin()));
  }
  if (cond.token_ids.empty()) throw std::invalid_argument("text: empty prompt");
  if (static_cast<int>(cond.token_ids.size()) > kMaxTextTokens)
    throw std::invalid_argument("text: prompt longer than the token limit");
  return cond;
}

TextEmbedder::TextEmbedder(ad::ParamStore& ps, int width, Rng& rng) : width_(width) {
  const int64_t vocab = static_cast<int64_t>(caption_vocabulary().size());
  table_ = ps.add("text.table", ad::trunc_normal({vocab, width}, 0.02, rng));
  positions_ = ps.add("text.pos", ad::trunc_normal({kMaxTextTokens, width}, 0.02, rng));
  null_embedding_ = ps.add("text.null", ad::trunc_normal({1, width}, 0.02, rng));
  for (int b = 0; b < 2; ++b) {
    Block blk;
    std::string prefix = "text.block" + std::to_string(b);
    blk.attn = ad::Attention(ps, prefix + ".attn", width, width, width, 64, rng);
    blk.mlp = ad::Mlp(ps, prefix + ".mlp", width, 4 * width, rng);
    blocks_.push_back(blk);
  }
}

Var TextEmbedder::embed(const TextCondition& cond) const {
  if (cond.null_flag) return null_embedding_;
  if (cond.token_ids.empty()) throw std::invalid_argument("text: empty condition");
  std::vector<int64_t> ids(cond.token_ids.begin(), cond.token_ids.end());
  const int64_t len = static_cast<int64_t>(ids.size());
  Var h = ad::gather_rows(table_, ids);
  h = ad::add(h, ad::slice_rows(positions_, 0, len));
  for (const Block& blk : blocks_) {
    Var n = ad::layer_norm_rows(h);
    h = ad::add(h, blk.attn(n, n));
    h = ad::add(h, blk.mlp(ad::layer_norm_rows(h)));
  }
  return h;
}

}  // namespace mvtri
