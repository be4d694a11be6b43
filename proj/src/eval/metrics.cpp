#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "common/errors.hpp"
#include "common/rng.hpp"
#include "common/stats.hpp"

namespace ehrgen {

namespace {

struct Counts {
  uint64_t pos = 0, neg = 0;
};

// Distinct score groups in descending score order.
std::vector<Counts> groups_desc(std::span<const double> scores, std::span<const int> labels, Counts& total) {
  if (scores.size() != labels.size()) throw ValidationError("metrics: scores and labels differ in length");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<Counts> groups;
  total = {};
  for (size_t k = 0; k < order.size(); ++k) {
    const size_t i = order[k];
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("metrics: labels must be 0 or 1");
    if (k == 0 || scores[i] != scores[order[k - 1]]) groups.emplace_back();
    (labels[i] ? groups.back().pos : groups.back().neg)++;
    (labels[i] ? total.pos : total.neg)++;
  }
  if (total.pos == 0 || total.neg == 0) throw ValidationError("metrics: need at least one positive and one negative");
  return groups;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  Counts total;
  auto groups = groups_desc(scores, labels, total);
  // Twice the concordant-pair count, kept integral: each tie contributes 1 instead of 2.
  uint64_t twice = 0, neg_below = total.neg;
  for (const auto& g : groups) {
    neg_below -= g.neg;
    twice += 2 * g.pos * neg_below + g.pos * g.neg;
  }
  return static_cast<double>(twice) / static_cast<double>(2 * total.pos * total.neg);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  Counts total;
  auto groups = groups_desc(scores, labels, total);
  std::vector<uint64_t> tp(groups.size()), fp(groups.size());
  uint64_t t = 0, f = 0;
  for (size_t k = 0; k < groups.size(); ++k) {
    t += groups[k].pos;
    f += groups[k].neg;
    tp[k] = t;
    fp[k] = f;
  }
  std::vector<double> envelope(groups.size());
  double best = 0.0;
  for (size_t k = groups.size(); k-- > 0;) {
    best = std::max(best, static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k]));
    envelope[k] = best;
  }
  double area = 0.0;
  uint64_t prev_tp = 0;
  for (size_t k = 0; k < groups.size(); ++k) {
    area += static_cast<double>(tp[k] - prev_tp) / static_cast<double>(total.pos) * envelope[k];
    prev_tp = tp[k];
  }
  return area;
}

ClassificationMetrics evaluate_scores(std::span<const double> scores, std::span<const int> labels, size_t n_bootstrap,
                                      uint64_t seed) {
  ClassificationMetrics m;
  m.n = scores.size();
  m.positives = static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
  m.auroc.estimate = auroc(scores, labels);
  m.auprc.estimate = auprc(scores, labels);
  if (n_bootstrap == 0) {
    m.auroc.lo = m.auroc.hi = m.auroc.estimate;
    m.auprc.lo = m.auprc.hi = m.auprc.estimate;
    return m;
  }
  Rng rng = make_rng(seed, {0x626f6f74});
  std::uniform_int_distribution<size_t> pick(0, scores.size() - 1);
  std::vector<double> roc, prc, s(scores.size());
  std::vector<int> l(scores.size());
  while (roc.size() < n_bootstrap) {
    size_t pos = 0;
    for (size_t i = 0; i < s.size(); ++i) {
      const size_t j = pick(rng);
      s[i] = scores[j];
      l[i] = labels[j];
      pos += l[i];
    }
    if (pos == 0 || pos == s.size()) continue;
    roc.push_back(auroc(s, l));
    prc.push_back(auprc(s, l));
  }
  auto fill = [](MetricCI& ci, const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    ci.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    ci.lo = quantile(v, 0.025);
    ci.hi = quantile(v, 0.975);
  };
  fill(m.auroc, roc);
  fill(m.auprc, prc);
  return m;
}

std::string ClassificationMetrics::csv_header() {
  return "task,n,positives,auroc,auroc_sd,auroc_lo,auroc_hi,auprc,auprc_sd,auprc_lo,auprc_hi\n";
}

std::string ClassificationMetrics::to_csv(const std::string& label) const {
  std::ostringstream o;
  o.precision(8);
  o << label << ',' << n << ',' << positives << ',' << auroc.estimate << ',' << auroc.sd << ',' << auroc.lo << ','
    << auroc.hi << ',' << auprc.estimate << ',' << auprc.sd << ',' << auprc.lo << ',' << auprc.hi << '\n';
  return o.str();
}

}  // namespace ehrgen
