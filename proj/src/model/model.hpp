#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "codec/vocabulary.hpp"
#include "common/rng.hpp"
#include "tensor/graph.hpp"

namespace ehrgen {

struct ModelConfig {
  size_t vocab_size = 0;
  size_t embed_dim = 48;  // divisible by 3 and by n_heads
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t context_window = 512;
  double dropout_rate = 0.0;
  int max_td_year_class = 10;

  // Throws ValidationError naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr int kTdMonthClasses = 13;  // 0..12
inline constexpr int kTdDayClasses = 30;    // 0..29
inline constexpr double kTteOffsetDays = 0.5;
inline constexpr double kPositiveFloor = 1e-6;

// Supervision for one ATT position of a packed row.
struct AttTarget {
  size_t position = 0;
  int64_t delta_days = 0;
};

// One packed row: concatenated segments, next-token targets (-1 = none) and ATT targets.
struct Batch {
  std::vector<TokenId> ids;
  ad::Segments segments;
  std::vector<int32_t> ntp_targets;
  std::vector<AttTarget> att;

  size_t tokens() const { return ids.size(); }
};

// Appends `ids` as a new segment; ATT positions are taken from the vocabulary classes and
// `att_days` (true interval per position, -1/absent falls back to the token's own value).
void append_segment(Batch& batch, const Vocabulary& vocab, std::span<const TokenId> ids,
                    std::span<const int64_t> att_days = {});

struct LossBreakdown {
  double total = 0.0;
  double ntp = 0.0;  // components already divided by `tokens`
  double td = 0.0;
  double tte = 0.0;
  double ntp_sum = 0.0;
  size_t tokens = 0;
  size_t ntp_targets = 0;
  size_t att_positions = 0;
  size_t clamped_years = 0;

  double ntp_per_target() const { return ntp_targets ? ntp_sum / static_cast<double>(ntp_targets) : 0.0; }
};

// Decoder-only transformer without positional embeddings: pre-norm blocks, GELU
// feed-forward, tied next-token head, TD heads over thirds of the hidden state, Gamma TTE head.
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, uint64_t seed);
  Model(const ModelConfig& cfg, std::vector<ad::Parameter> params);  // checks names and shapes

  const ModelConfig& config() const { return cfg_; }
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }
  std::vector<ad::Parameter*> parameter_ptrs();
  ad::Parameter& param(std::string_view name);
  const ad::Parameter& param(std::string_view name) const;
  size_t parameter_count() const;
  uint64_t weights_hash() const;

  struct Bound {
    std::vector<ad::Var> vars;
  };
  Bound bind(ad::Graph& g);

  // Final-layer-norm hidden states [n x d]. Rejects rows longer than the context window per segment.
  ad::Var hidden(ad::Graph& g, const Bound& b, std::span<const TokenId> ids, const ad::Segments& segments,
                 Rng* dropout_rng) const;
  ad::Var ntp_logits(ad::Graph& g, const Bound& b, ad::Var hidden) const;
  // TD cross-entropy summed over rows of h_att; year classes clamp to max_td_year_class.
  ad::Var td_loss(ad::Graph& g, const Bound& b, ad::Var h_att, std::span<const int64_t> deltas,
                  size_t* clamped) const;
  // Gamma NLL summed over rows of h_att at t = delta + 0.5.
  ad::Var tte_loss(ad::Graph& g, const Bound& b, ad::Var h_att, std::span<const int64_t> deltas) const;
  // (alpha, beta) rows for each hidden row.
  ad::Var tte_params(ad::Graph& g, const Bound& b, ad::Var h_att) const;

  struct LossResult {
    ad::Var total;
    LossBreakdown parts;
  };
  // (sum NTP + sum over ATT of TD + TTE) / token count.
  LossResult total_loss(ad::Graph& g, const Bound& b, const Batch& batch, Rng* dropout_rng) const;

 private:
  void init_layout();
  size_t index(std::string_view name) const;

  ModelConfig cfg_;
  std::vector<ad::Parameter> params_;
};

// Canonical parameter names and shapes for a config, in storage order.
std::vector<std::pair<std::string, std::pair<size_t, size_t>>> parameter_layout(const ModelConfig& cfg);

// Loss of a batch without keeping gradients.
LossBreakdown evaluate_batch(Model& model, const Batch& batch);

// Final-layer hidden state at the last position.
std::vector<double> extract_representation(const Model& model, std::span<const TokenId> ids);

}  // namespace ehrgen
