#include "privacy/privacy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "common/config.hpp"
#include "common/csv.hpp"
#include "common/errors.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace ehrgen {

void BinaryProfile::set(size_t i, bool on) {
  if (i >= dim_) throw ValidationError("profile feature " + std::to_string(i) + " out of range");
  const uint64_t bit = uint64_t{1} << (i % 64);
  if (on)
    words_[i / 64] |= bit;
  else
    words_[i / 64] &= ~bit;
}

size_t BinaryProfile::count() const {
  size_t n = 0;
  for (uint64_t w : words_) n += static_cast<size_t>(std::popcount(w));
  return n;
}

size_t hamming(const BinaryProfile& a, const BinaryProfile& b) {
  if (a.dim() != b.dim()) throw ValidationError("profiles differ in dimension");
  size_t d = 0;
  for (size_t i = 0; i < a.words().size(); ++i) d += static_cast<size_t>(std::popcount(a.words()[i] ^ b.words()[i]));
  return d;
}

size_t hamming_masked(const BinaryProfile& a, const BinaryProfile& b, const BinaryProfile& mask) {
  if (a.dim() != b.dim() || a.dim() != mask.dim()) throw ValidationError("profiles differ in dimension");
  size_t d = 0;
  for (size_t i = 0; i < a.words().size(); ++i)
    d += static_cast<size_t>(std::popcount((a.words()[i] ^ b.words()[i]) & mask.words()[i]));
  return d;
}

BinaryProfile profile_from_bits(const std::vector<int>& bits) {
  BinaryProfile p(bits.size());
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) p.set(i);
  return p;
}

ProfileSchema ProfileSchema::build(std::span<const EventTables* const> tables) {
  std::set<int64_t> g, r, c;
  std::set<int> dec;
  for (const EventTables* t : tables) {
    for (const auto& p : t->persons) {
      g.insert(p.gender_concept_id);
      r.insert(p.race_concept_id);
      dec.insert(p.birth_year - ((p.birth_year % 10) + 10) % 10);
    }
    for (const auto& e : t->events) c.insert(e.concept_id);
  }
  return {{g.begin(), g.end()}, {r.begin(), r.end()}, {dec.begin(), dec.end()}, {c.begin(), c.end()}};
}

std::vector<std::string> ProfileSchema::feature_names() const {
  std::vector<std::string> out;
  for (auto v : genders) out.push_back("gender:" + std::to_string(v));
  for (auto v : races) out.push_back("race:" + std::to_string(v));
  for (auto v : birth_decades) out.push_back("birth_decade:" + std::to_string(v));
  for (auto v : concepts) out.push_back("concept:" + std::to_string(v));
  return out;
}

size_t ProfileSchema::feature(const std::string& name) const {
  const auto names = feature_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("unknown profile feature '" + name + "'");
  return static_cast<size_t>(it - names.begin());
}

std::vector<BinaryProfile> profiles_from_tables(const EventTables& tables, const ProfileSchema& schema) {
  auto offset_of = [](const auto& sorted, auto v) -> std::optional<size_t> {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
    if (it == sorted.end() || *it != v) return std::nullopt;
    return static_cast<size_t>(it - sorted.begin());
  };
  const size_t race0 = schema.genders.size(), dec0 = race0 + schema.races.size(),
               con0 = dec0 + schema.birth_decades.size();
  std::map<std::string, size_t> row;
  std::vector<BinaryProfile> out;
  for (const auto& p : tables.persons) {
    row[p.person_id] = out.size();
    BinaryProfile b(schema.dim());
    if (auto i = offset_of(schema.genders, p.gender_concept_id)) b.set(*i);
    if (auto i = offset_of(schema.races, p.race_concept_id)) b.set(race0 + *i);
    if (auto i = offset_of(schema.birth_decades, p.birth_year - ((p.birth_year % 10) + 10) % 10)) b.set(dec0 + *i);
    out.push_back(std::move(b));
  }
  for (const auto& e : tables.events) {
    auto r = row.find(e.person_id);
    if (r == row.end()) continue;
    if (auto i = offset_of(schema.concepts, e.concept_id)) out[r->second].set(con0 + *i);
  }
  return out;
}

namespace {

// Canonical order first so the draw does not depend on input order.
std::vector<BinaryProfile> subsample(std::span<const BinaryProfile> set, size_t n, Rng rng) {
  std::vector<BinaryProfile> v(set.begin(), set.end());
  std::sort(v.begin(), v.end());
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(std::min(n, v.size()));
  return v;
}

void check_dims(std::span<const BinaryProfile> s, size_t dim, const char* what) {
  for (const auto& p : s)
    if (p.dim() != dim) throw ValidationError(std::string(what) + ": profiles differ in dimension");
}

// Nearest distance from each query to the reference set, skipping index `self` when same_set.
std::vector<size_t> nearest(std::span<const BinaryProfile> q, std::span<const BinaryProfile> ref, bool same_set,
                            unsigned threads) {
  std::vector<size_t> d(q.size());
  parallel_for(q.size(), threads, [&](size_t i) {
    size_t best = std::numeric_limits<size_t>::max();
    for (size_t j = 0; j < ref.size(); ++j) {
      if (same_set && i == j) continue;
      best = std::min(best, hamming(q[i], ref[j]));
    }
    d[i] = best;
  });
  return d;
}

}  // namespace

double adversarial_accuracy(std::span<const BinaryProfile> a, std::span<const BinaryProfile> b, unsigned threads) {
  if (a.size() != b.size()) throw ValidationError("adversarial_accuracy: sets must have equal size");
  if (a.size() < 2) throw ValidationError("adversarial_accuracy: need at least two records per set");
  const auto ab = nearest(a, b, false, threads), aa = nearest(a, a, true, threads);
  const auto ba = nearest(b, a, false, threads), bb = nearest(b, b, true, threads);
  double left = 0.0, right = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    left += ab[i] > aa[i];
    right += ba[i] > bb[i];
  }
  const double n = static_cast<double>(a.size());
  return 0.5 * (left / n + right / n);
}

double nnaa_risk(std::span<const BinaryProfile> train, std::span<const BinaryProfile> eval,
                 std::span<const BinaryProfile> synthetic, size_t n, uint64_t seed, unsigned threads) {
  n = std::min({n, train.size(), eval.size(), synthetic.size()});
  if (n < 10) throw ValidationError("nnaa_risk: sample size " + std::to_string(n) + " is below 10");
  const size_t dim = train.front().dim();
  check_dims(train, dim, "nnaa_risk");
  check_dims(eval, dim, "nnaa_risk");
  check_dims(synthetic, dim, "nnaa_risk");
  const auto t = subsample(train, n, make_rng(seed, {0x6e6e, 1}));
  const auto e = subsample(eval, n, make_rng(seed, {0x6e6e, 2}));
  const auto s = subsample(synthetic, n, make_rng(seed, {0x6e6e, 3}));
  return adversarial_accuracy(e, s, threads) - adversarial_accuracy(t, s, threads);
}

MembershipResult membership_inference(std::span<const BinaryProfile> targets, std::span<const int> is_member,
                                      std::span<const BinaryProfile> synthetic, unsigned threads) {
  if (synthetic.empty()) throw ValidationError("membership_inference: synthetic set is empty");
  if (targets.empty() || targets.size() != is_member.size())
    throw ValidationError("membership_inference: need one membership label per target");
  const auto d = nearest(targets, synthetic, false, threads);
  size_t members = 0;
  for (int m : is_member) members += m != 0;
  if (members == 0) throw ValidationError("membership_inference: no member targets");

  MembershipResult r;
  r.baseline_f1 = 2.0 * static_cast<double>(members) / static_cast<double>(members + targets.size());
  std::set<size_t> taus(d.begin(), d.end());
  for (size_t tau : taus) {
    size_t tp = 0, fp = 0;
    for (size_t i = 0; i < d.size(); ++i) {
      if (d[i] > tau) continue;
      if (is_member[i])
        ++tp;
      else
        ++fp;
    }
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + members);
    if (f1 > r.best_f1) {
      r.best_f1 = f1;
      r.best_threshold = tau;
    }
  }
  r.score = std::max(0.0, r.best_f1 - r.baseline_f1);
  return r;
}

AttributeResult attribute_inference(std::span<const BinaryProfile> targets, std::span<const BinaryProfile> synthetic,
                                    std::span<const size_t> key_attrs, std::span<const size_t> sensitive_attrs,
                                    unsigned threads) {
  if (targets.empty() || synthetic.empty()) throw ValidationError("attribute_inference: empty target or synthetic set");
  if (key_attrs.empty() || sensitive_attrs.empty())
    throw ValidationError("attribute_inference: key and sensitive attribute sets must be nonempty");
  const size_t dim = targets.front().dim();
  check_dims(targets, dim, "attribute_inference");
  check_dims(synthetic, dim, "attribute_inference");
  BinaryProfile mask(dim);
  for (size_t k : key_attrs) mask.set(k);
  for (size_t s : sensitive_attrs) {
    if (s >= dim) throw ValidationError("attribute_inference: sensitive attribute out of range");
    if (mask.get(s)) throw ValidationError("attribute_inference: key and sensitive attributes overlap");
  }
  const size_t m = sensitive_attrs.size();

  // Fallback when the tied neighbours split evenly.
  std::vector<bool> synth_majority(m);
  for (size_t j = 0; j < m; ++j) {
    size_t ones = 0;
    for (const auto& s : synthetic) ones += s.get(sensitive_attrs[j]);
    synth_majority[j] = 2 * ones > synthetic.size();
  }

  std::vector<std::vector<char>> correct(targets.size(), std::vector<char>(m, 0));
  parallel_for(targets.size(), threads, [&](size_t i) {
    size_t best = std::numeric_limits<size_t>::max();
    std::vector<size_t> tied;
    for (size_t k = 0; k < synthetic.size(); ++k) {
      const size_t d = hamming_masked(targets[i], synthetic[k], mask);
      if (d < best) {
        best = d;
        tied.clear();
      }
      if (d == best) tied.push_back(k);
    }
    for (size_t j = 0; j < m; ++j) {
      size_t ones = 0;
      for (size_t k : tied) ones += synthetic[k].get(sensitive_attrs[j]);
      const bool pred = 2 * ones == tied.size() ? synth_majority[j] : 2 * ones > tied.size();
      correct[i][j] = pred == targets[i].get(sensitive_attrs[j]);
    }
  });

  AttributeResult r;
  const double n = static_cast<double>(targets.size());
  double wsum = 0.0;
  for (size_t j = 0; j < m; ++j) {
    double ones = 0.0, hits = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
      ones += targets[i].get(sensitive_attrs[j]);
      hits += correct[i][j];
    }
    const double p = ones / n;
    r.accuracy.push_back(hits / n);
    r.baseline.push_back(std::max(p, 1.0 - p));
    double h = 0.0;
    for (double q : {p, 1.0 - p})
      if (q > 0) h -= q * std::log2(q);
    r.weights.push_back(h);
    wsum += h;
  }
  for (double& w : r.weights) w = wsum > 0 ? w / wsum : 1.0 / static_cast<double>(m);
  double score = 0.0;
  for (size_t j = 0; j < m; ++j) score += r.weights[j] * (r.accuracy[j] - r.baseline[j]);
  r.score = std::max(0.0, score);
  return r;
}

IdentityResult identity_disclosure(std::span<const BinaryProfile> population, std::span<const BinaryProfile> synthetic,
                                   std::span<const size_t> quasi_identifiers, double match_tolerance) {
  if (quasi_identifiers.empty()) throw ValidationError("identity_disclosure: quasi-identifier set is empty");
  IdentityResult r;
  if (synthetic.empty()) return r;
  const size_t dim = synthetic.front().dim();
  check_dims(population, dim, "identity_disclosure");
  check_dims(synthetic, dim, "identity_disclosure");
  BinaryProfile qi(dim), rest(dim);
  for (size_t q : quasi_identifiers) qi.set(q);
  for (size_t i = 0; i < dim; ++i) rest.set(i, !qi.get(i));
  const size_t n_rest = rest.count();

  auto key = [&](const BinaryProfile& p) {
    std::vector<uint64_t> k(p.words().size());
    for (size_t w = 0; w < k.size(); ++w) k[w] = p.words()[w] & qi.words()[w];
    return k;
  };
  std::map<std::vector<uint64_t>, std::vector<size_t>> groups;
  for (size_t i = 0; i < population.size(); ++i) groups[key(population[i])].push_back(i);

  double total = 0.0;
  for (const auto& s : synthetic) {
    auto g = groups.find(key(s));
    if (g == groups.end() || g->second.size() != 1) continue;
    const auto& match = population[g->second.front()];
    const double agree =
        n_rest == 0 ? 1.0 : 1.0 - static_cast<double>(hamming_masked(s, match, rest)) / static_cast<double>(n_rest);
    if (agree >= match_tolerance) {
      ++r.disclosures;
      total += 1.0 / static_cast<double>(g->second.size());
    }
  }
  r.score = total / static_cast<double>(synthetic.size());
  return r;
}

void PrivacyConfig::validate() const {
  if (sample_size < 10) throw ValidationError("privacy config: sample_size must be at least 10");
  if (!(match_tolerance >= 0.0 && match_tolerance <= 1.0))
    throw ValidationError("privacy config: match_tolerance must lie in [0, 1]");
  for (const auto& s : sensitive_attributes)
    if (std::find(key_attributes.begin(), key_attributes.end(), s) != key_attributes.end())
      throw ValidationError("privacy config: '" + s + "' is both a key and a sensitive attribute");
}

PrivacyConfig PrivacyConfig::parse(const std::string& yaml_text, const std::string& source) {
  YAML::Node n = parse_yaml(yaml_text, source);
  check_keys(n,
             {"sample_size", "seed", "match_tolerance", "key_attributes", "sensitive_attributes", "quasi_identifiers",
              "default_sensitive_count"},
             source);
  PrivacyConfig c;
  c.sample_size = yaml_get(n, "sample_size", c.sample_size, source);
  c.seed = yaml_get(n, "seed", c.seed, source);
  c.match_tolerance = yaml_get(n, "match_tolerance", c.match_tolerance, source);
  c.key_attributes = yaml_get(n, "key_attributes", c.key_attributes, source);
  c.sensitive_attributes = yaml_get(n, "sensitive_attributes", c.sensitive_attributes, source);
  c.quasi_identifiers = yaml_get(n, "quasi_identifiers", c.quasi_identifiers, source);
  c.default_sensitive_count = yaml_get(n, "default_sensitive_count", c.default_sensitive_count, source);
  c.validate();
  return c;
}

PrivacyConfig PrivacyConfig::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

ResolvedAttributes resolve_attributes(const PrivacyConfig& cfg, const ProfileSchema& schema,
                                      std::span<const BinaryProfile> train) {
  cfg.validate();
  ResolvedAttributes r;
  for (const auto& s : cfg.sensitive_attributes) r.sensitive.push_back(schema.feature(s));
  for (const auto& s : cfg.key_attributes) r.keys.push_back(schema.feature(s));
  for (const auto& s : cfg.quasi_identifiers) r.quasi_identifiers.push_back(schema.feature(s));

  const size_t demo = schema.demographic_dim();
  if (r.sensitive.empty() && !train.empty()) {
    std::vector<std::pair<double, size_t>> ranked;
    for (size_t f = demo; f < schema.dim(); ++f) {
      if (std::find(r.keys.begin(), r.keys.end(), f) != r.keys.end()) continue;
      double ones = 0.0;
      for (const auto& p : train) ones += p.get(f);
      ranked.push_back({std::abs(ones / static_cast<double>(train.size()) - 0.5), f});
    }
    std::sort(ranked.begin(), ranked.end());
    for (size_t i = 0; i < std::min(cfg.default_sensitive_count, ranked.size()); ++i)
      r.sensitive.push_back(ranked[i].second);
    std::sort(r.sensitive.begin(), r.sensitive.end());
  }
  if (r.keys.empty())
    for (size_t f = 0; f < schema.dim(); ++f)
      if (std::find(r.sensitive.begin(), r.sensitive.end(), f) == r.sensitive.end()) r.keys.push_back(f);
  if (r.quasi_identifiers.empty())
    for (size_t f = 0; f < demo; ++f) r.quasi_identifiers.push_back(f);
  return r;
}

PrivacyReport run_privacy_audit(std::span<const BinaryProfile> train, std::span<const BinaryProfile> eval,
                                std::span<const BinaryProfile> synthetic, const ResolvedAttributes& attrs,
                                const PrivacyConfig& cfg, unsigned threads) {
  cfg.validate();
  PrivacyReport rep;
  rep.nnaa = nnaa_risk(train, eval, synthetic, cfg.sample_size, cfg.seed, threads);

  const size_t half = std::min({cfg.sample_size / 2, train.size(), eval.size()});
  auto members = subsample(train, half, make_rng(cfg.seed, {0x6d656d, 1}));
  auto others = subsample(eval, half, make_rng(cfg.seed, {0x6d656d, 2}));
  std::vector<BinaryProfile> targets = members;
  targets.insert(targets.end(), others.begin(), others.end());
  std::vector<int> truth(targets.size(), 0);
  std::fill(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(members.size()), 1);
  rep.membership = membership_inference(targets, truth, synthetic, threads);

  if (!attrs.sensitive.empty()) {
    auto known = subsample(train, cfg.sample_size, make_rng(cfg.seed, {0x61747472}));
    rep.attribute = attribute_inference(known, synthetic, attrs.keys, attrs.sensitive, threads);
  }
  rep.identity = identity_disclosure(train, synthetic, attrs.quasi_identifiers, cfg.match_tolerance);
  return rep;
}

bool PrivacyReport::pass() const {
  return nnaa < kPrivacyRiskThreshold && membership.score < kPrivacyRiskThreshold &&
         attribute.score < kPrivacyRiskThreshold && identity.score < kPrivacyRiskThreshold;
}

std::string PrivacyReport::to_csv() const {
  std::ostringstream o;
  o.precision(6);
  o << "metric,score,threshold,status\n";
  auto row = [&](const char* name, double v) {
    o << name << ',' << v << ',' << kPrivacyRiskThreshold << ',' << (v < kPrivacyRiskThreshold ? "PASS" : "FAIL")
      << '\n';
  };
  row("nnaa_risk", nnaa);
  row("membership_inference", membership.score);
  row("attribute_inference", attribute.score);
  row("identity_disclosure", identity.score);
  o << "overall,,," << (pass() ? "PASS" : "FAIL") << '\n';
  return o.str();
}

}  // namespace ehrgen
