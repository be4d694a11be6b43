#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tensor/graph.hpp"

namespace ehrgen {

struct LogicSample {
  int x1 = 0, x2 = 0;
  int t1 = 0, t2 = 0;  // 0 <= t1 <= t2 <= kMaxTime
  int y = 0;
};

inline constexpr int kMaxTime = 28;

// First matching rule on the interval dt = t2 - t1:
// dt % 4 == 0 and x1 -> !x2; dt % 3 == 0 and !x1 -> x2; dt <= 7 -> xor; dt <= 14 -> and; else or.
int logic_label(int x1, int x2, int t1, int t2);
// Index (1..5) of the rule that fired.
int logic_rule(int x1, int x2, int t1, int t2);

// Uniform over bits and over admissible (t1, t2) pairs.
std::vector<LogicSample> sample_logic_dataset(size_t n, uint64_t seed);

struct HandcraftedTrace {
  std::array<int, 6> a1{};
  std::array<int, 4> a2{};
  int y = 0;
};

// Two step-activation layers routing (x1, x2) to an XOR gate when dt <= 7 and to an AND gate otherwise.
HandcraftedTrace handcrafted_forward(int x1, int dt, int x2);

struct EncoderConfig {
  size_t embed_dim = 16;
  size_t layers = 2;
  size_t heads = 2;
  size_t intermediate = 32;
  double dropout = 0.0;
  uint64_t steps = 20000;
  size_t batch_size = 128;
  uint64_t eval_every = 100;
  double lr = 1e-3;
  double weight_decay = 0.01;
  size_t n_samples = 1000;
  // One embedding table indexed by raw value, so x = v and t = v share a row.
  bool shared_value_rows = true;

  void validate() const;
};

enum class TimeInput { TimeToken, Summation };

// Post-norm bidirectional encoder with learned positions; the classifier reads a prepended
// classification position.
class LogicEncoder {
 public:
  LogicEncoder(const EncoderConfig& cfg, TimeInput mode, uint64_t seed);

  // Class logits [batch x 2].
  ad::Var logits(ad::Graph& g, std::span<const LogicSample* const> batch);
  double accuracy(std::span<const LogicSample> data);
  std::vector<ad::Parameter*> parameters();
  TimeInput mode() const { return mode_; }

 private:
  ad::Parameter& p(const std::string& name);

  EncoderConfig cfg_;
  TimeInput mode_;
  std::vector<ad::Parameter> params_;
};

struct ComparisonCurves {
  std::vector<uint64_t> steps;
  std::vector<double> acc_timetoken;
  std::vector<double> acc_sum;
  double base_rate = 0.0;  // fraction of positive labels

  // First evaluated step where the time-token accuracy reaches `level`.
  std::optional<size_t> first_reaching(double level) const;
  std::string to_csv() const;       // step,acc_timetoken,acc_sum
  std::string to_long_csv() const;  // step,model,accuracy
};

ComparisonCurves run_comparison(const EncoderConfig& cfg, uint64_t seed, unsigned threads = 1);

}  // namespace ehrgen
