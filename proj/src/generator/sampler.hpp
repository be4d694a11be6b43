#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "codec/vocabulary.hpp"
#include "common/rng.hpp"
#include "model/session.hpp"

namespace ehrgen {

// Autoregressive next-token source. Implemented by the transformer and by small rigged
// chains used as exact oracles.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual size_t vocab_size() const = 0;
  virtual size_t max_length() const = 0;
  virtual void reset() = 0;
  virtual void feed(TokenId token) = 0;
  virtual size_t length() const = 0;
  virtual void logits(std::vector<double>& out) const = 0;
  // Independent copy of the current state.
  virtual std::unique_ptr<Decoder> clone() const = 0;
};

class ModelDecoder final : public Decoder {
 public:
  explicit ModelDecoder(const Model& model) : model_(&model), session_(model) {}
  size_t vocab_size() const override { return model_->config().vocab_size; }
  size_t max_length() const override { return model_->config().context_window; }
  void reset() override { session_ = InferenceSession(*model_); }
  void feed(TokenId token) override { session_.feed(token); }
  size_t length() const override { return session_.length(); }
  void logits(std::vector<double>& out) const override { session_.logits(out); }
  std::unique_ptr<Decoder> clone() const override { return std::make_unique<ModelDecoder>(*this); }

 private:
  const Model* model_;
  InferenceSession session_;
};

// First-order chain: logits after token i are log P[i][*]. Zero probabilities become -inf.
class MarkovDecoder final : public Decoder {
 public:
  explicit MarkovDecoder(std::vector<std::vector<double>> transition, size_t max_length = 1 << 20);
  size_t vocab_size() const override { return log_p_.size(); }
  size_t max_length() const override { return max_length_; }
  void reset() override { last_ = -1, length_ = 0; }
  void feed(TokenId token) override;
  size_t length() const override { return length_; }
  void logits(std::vector<double>& out) const override;
  std::unique_ptr<Decoder> clone() const override { return std::make_unique<MarkovDecoder>(*this); }

 private:
  std::vector<std::vector<double>> log_p_;
  size_t max_length_;
  TokenId last_ = -1;
  size_t length_ = 0;
};

struct SamplingConfig {
  std::string name = "default";
  double temperature = 1.0;
  size_t top_k = 0;  // 0 = off
  double top_p = 1.0;
  double repetition_penalty = 1.0;
  size_t max_tokens = 512;  // total length including the prompt
  size_t min_tokens = 20;   // pool filter
  std::string checkpoint;   // optional per-expert checkpoint path
  uint64_t seed = 0;

  void validate() const;
};

// Decoding controls in fixed order: repetition penalty, temperature, top-k, top-p.
// Returns the normalized distribution that is sampled from.
std::vector<double> next_token_distribution(std::span<const double> logits, std::span<const TokenId> history,
                                            const SamplingConfig& cfg);
TokenId sample_from(std::span<const double> probs, Rng& rng);

struct SampledSequence {
  std::vector<TokenId> ids;  // prompt included
  bool hit_max_tokens = false;
};

// Feeds the prompt, then samples until end_id or cfg.max_tokens (capped by the decoder's window).
SampledSequence sample_sequence(Decoder& decoder, std::span<const TokenId> prompt, const SamplingConfig& cfg,
                                TokenId end_id, Rng& rng);

}  // namespace ehrgen
