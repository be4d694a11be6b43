#include "generator/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "common/errors.hpp"

namespace ehrgen {

MarkovDecoder::MarkovDecoder(std::vector<std::vector<double>> transition, size_t max_length)
    : max_length_(max_length) {
  for (auto& row : transition) {
    if (row.size() != transition.size()) throw ValidationError("markov: transition matrix must be square");
    double s = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("markov: transition rows must sum to 1");
    for (double& p : row) p = p > 0 ? std::log(p) : -INFINITY;
  }
  log_p_ = std::move(transition);
}

void MarkovDecoder::feed(TokenId token) {
  if (token < 0 || static_cast<size_t>(token) >= log_p_.size()) throw ValidationError("markov: token out of range");
  if (length_ >= max_length_) throw ValidationError("markov: length limit reached");
  last_ = token;
  ++length_;
}

void MarkovDecoder::logits(std::vector<double>& out) const {
  if (last_ < 0) throw ValidationError("markov: no tokens fed");
  out = log_p_[static_cast<size_t>(last_)];
}

void SamplingConfig::validate() const {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ValidationError("sampling config '" + name + "': " + field + " " + why);
  };
  if (!(temperature > 0)) fail("temperature", "must be positive");
  if (!(top_p > 0 && top_p <= 1)) fail("top_p", "must be in (0, 1]");
  if (!(repetition_penalty >= 1)) fail("repetition_penalty", "must be >= 1");
  if (max_tokens == 0) fail("max_tokens", "must be positive");
}

std::vector<double> next_token_distribution(std::span<const double> logits, std::span<const TokenId> history,
                                            const SamplingConfig& cfg) {
  const size_t n = logits.size();
  if (n == 0) throw ValidationError("sampler: empty logits");
  std::vector<double> z(logits.begin(), logits.end());

  if (cfg.repetition_penalty != 1.0) {
    std::unordered_set<TokenId> seen(history.begin(), history.end());
    for (TokenId t : seen) {
      if (t < 0 || static_cast<size_t>(t) >= n) continue;
      double& l = z[static_cast<size_t>(t)];
      l = l > 0 ? l / cfg.repetition_penalty : l * cfg.repetition_penalty;
    }
  }
  for (double& l : z) l /= cfg.temperature;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return z[a] > z[b]; });
  size_t keep = n;
  if (cfg.top_k > 0) keep = std::min(keep, cfg.top_k);

  const double mx = z[order[0]];
  if (!std::isfinite(mx)) throw ValidationError("sampler: no token has finite probability");
  std::vector<double> p(n, 0.0);
  double total = 0.0;
  for (size_t r = 0; r < keep; ++r) total += (p[order[r]] = std::exp(z[order[r]] - mx));

  if (cfg.top_p < 1.0) {
    double cum = 0.0;
    size_t r = 0;
    for (; r < keep; ++r) {
      cum += p[order[r]] / total;
      if (cum >= cfg.top_p) break;
    }
    const size_t nucleus = std::min(keep, r + 1);
    for (size_t q = nucleus; q < keep; ++q) p[order[q]] = 0.0;
    keep = nucleus;
    total = 0.0;
    for (size_t q = 0; q < keep; ++q) total += p[order[q]];
  }
  for (double& v : p) v /= total;
  return p;
}

TokenId sample_from(std::span<const double> probs, Rng& rng) {
  double u = uniform01(rng);
  size_t last = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    last = i;
    if (u < probs[i]) return static_cast<TokenId>(i);
    u -= probs[i];
  }
  return static_cast<TokenId>(last);  // rounding remainder
}

SampledSequence sample_sequence(Decoder& decoder, std::span<const TokenId> prompt, const SamplingConfig& cfg,
                                TokenId end_id, Rng& rng) {
  cfg.validate();
  if (prompt.empty()) throw ValidationError("sampler: empty prompt");
  const size_t limit = std::min(cfg.max_tokens, decoder.max_length());
  SampledSequence out;
  out.ids.assign(prompt.begin(), prompt.end());
  for (TokenId t : prompt) decoder.feed(t);
  std::vector<double> logits;
  while (true) {
    if (out.ids.size() >= limit) {
      out.hit_max_tokens = true;
      break;
    }
    decoder.logits(logits);
    auto probs = next_token_distribution(logits, out.ids, cfg);
    TokenId next = sample_from(probs, rng);
    out.ids.push_back(next);
    if (next == end_id) break;
    if (out.ids.size() < limit) decoder.feed(next);
  }
  return out;
}

}  // namespace ehrgen
