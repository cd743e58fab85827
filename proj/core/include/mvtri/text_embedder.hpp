#pragma once

#include <string>
#include <vector>

#include "mvtri/nn.hpp"

namespace mvtri {

inline constexpr int kMaxTextTokens = 77;

// Caption text condition. null_flag marks the dropped (unconditional)
// embedding used for classifier-free guidance.
struct TextCondition {
  std::vector<int> token_ids;
  bool null_flag = false;
};

// Whitespace vocabulary of the caption grammar, sorted, fixed.
const std::vector<std::string>& caption_vocabulary();

// Tokenize a prompt against the grammar vocabulary. Unknown words throw.
TextCondition tokenize_text(const std::string& prompt);

// Embedding table + learned positions + a 2-block self-attention encoder.
// A dedicated learned null embedding implements conditioning dropout.
class TextEmbedder {
 public:
  TextEmbedder() = default;
  TextEmbedder(ad::ParamStore& ps, int width, Rng& rng);

  // (len, width) token embeddings inside the current graph; for a null
  // condition this is the single learned null row.
  ad::Var embed(const TextCondition& cond) const;
  int width() const { return width_; }

 private:
  int width_ = 0;
  ad::Var table_;
  ad::Var positions_;
  ad::Var null_embedding_;
  struct Block {
    ad::Attention attn;
    ad::Mlp mlp;
  };
  std::vector<Block> blocks_;
};

}  // namespace mvtri
