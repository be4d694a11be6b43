#pragma once

#include <vector>

#include "model/model.hpp"

namespace ehrgen {

// Incremental single-sequence inference with a per-layer key/value cache. Copying a
// session forks the cached state (used to branch simulations from a shared prefix).
// The model must outlive the session and stay unmodified while it is in use.
class InferenceSession {
 public:
  explicit InferenceSession(const Model& model);

  void feed(TokenId token);  // throws ValidationError past the context window
  size_t length() const { return length_; }
  // Final-layer-norm hidden state at the last fed position.
  const std::vector<double>& hidden() const { return hidden_; }
  // Next-token logits at the last fed position.
  void logits(std::vector<double>& out) const;
  std::vector<double> logits() const;

 private:
  struct Layer {
    const ad::Tensor *ln1_g, *ln1_b, *w_qkv, *b_qkv, *w_o, *b_o, *ln2_g, *ln2_b, *w_ff1, *b_ff1, *w_ff2, *b_ff2;
  };

  const Model* model_;
  std::vector<Layer> layers_;
  const ad::Tensor *emb_, *lnf_g_, *lnf_b_;
  std::vector<std::vector<double>> keys_, values_;  // per layer, row-major [length x d]
  std::vector<double> hidden_;
  size_t length_ = 0;
};

}  // namespace ehrgen
