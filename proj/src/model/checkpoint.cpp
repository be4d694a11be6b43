#include "model/checkpoint.hpp"

#include <cstring>
#include <type_traits>

#include "common/csv.hpp"
#include "common/errors.hpp"

namespace ehrgen {

namespace {

constexpr char kMagic[8] = {'E', 'H', 'R', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(std::string_view s) {
    pod<uint64_t>(s.size());
    buf_.append(s);
  }
  void tensor(const ad::Tensor& t) {
    pod<uint64_t>(t.rows);
    pod<uint64_t>(t.cols);
    buf_.append(reinterpret_cast<const char*>(t.data.data()), t.size() * sizeof(double));
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string source) : buf_(std::move(bytes)), source_(std::move(source)) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    auto n = pod<uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  ad::Tensor tensor() {
    auto r = pod<uint64_t>();
    auto c = pod<uint64_t>();
    if (r != 0 && c > (uint64_t{1} << 40) / r) fail("tensor shape is implausible");
    need(r * c * sizeof(double));
    ad::Tensor t(r, c);
    std::memcpy(t.data.data(), buf_.data() + pos_, t.size() * sizeof(double));
    pos_ += t.size() * sizeof(double);
    return t;
  }
  bool done() const { return pos_ == buf_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw ValidationError("checkpoint " + source_ + ": " + why);
  }

 private:
  void need(uint64_t n) const {
    if (n > buf_.size() - pos_) fail("truncated file");
  }
  std::string buf_;
  std::string source_;
  size_t pos_ = 0;
};

}  // namespace

PromptDistribution PromptDistribution::from_corpus(std::span<const TokenSequence> corpus) {
  PromptDistribution p;
  for (const auto& s : corpus) {
    auto pre = demographic_prefix(s);
    p.add({pre[0], pre[1], pre[2], pre[3]});
  }
  return p;
}

uint64_t PromptDistribution::total() const {
  uint64_t n = 0;
  for (const auto& [k, c] : counts_) n += c;
  return n;
}

PromptDistribution::Prefix PromptDistribution::sample(Rng& rng) const {
  if (counts_.empty()) throw ValidationError("prompt distribution is empty");
  uint64_t r = std::uniform_int_distribution<uint64_t>(0, total() - 1)(rng);
  for (const auto& [k, c] : counts_) {
    if (r < c) return k;
    r -= c;
  }
  return counts_.rbegin()->first;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  const auto& c = model.config();
  w.pod<uint64_t>(c.vocab_size);
  w.pod<uint64_t>(c.embed_dim);
  w.pod<uint64_t>(c.n_layers);
  w.pod<uint64_t>(c.n_heads);
  w.pod<uint64_t>(c.context_window);
  w.pod<double>(c.dropout_rate);
  w.pod<int64_t>(c.max_td_year_class);
  w.pod<uint64_t>(seed);
  w.str(vocab.serialize());
  w.pod<uint64_t>(vocab.hash());

  const auto& params = model.parameters();
  w.pod<uint64_t>(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.tensor(p.value);
  }
  w.pod<uint64_t>(optimizer.step);
  w.pod<uint8_t>(optimizer.m.empty() ? 0 : 1);
  if (!optimizer.m.empty())
    for (size_t i = 0; i < params.size(); ++i) {
      w.tensor(optimizer.m.at(i));
      w.tensor(optimizer.v.at(i));
    }
  w.pod(trainer.epoch);
  w.pod(trainer.batch_cursor);
  w.pod(trainer.global_step);
  w.pod(trainer.best_eval);
  w.pod(trainer.bad_epochs);
  w.pod<uint8_t>(trainer.finished);

  w.pod<uint64_t>(prompts.counts().size());
  for (const auto& [k, n] : prompts.counts()) {
    for (const auto& s : k) w.str(s);
    w.pod(n);
  }
  write_file_atomic(path, w.bytes());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  Reader r(read_file(path), path.string());
  for (char m : kMagic)
    if (r.pod<char>() != m) r.fail("not a checkpoint file");
  if (auto v = r.pod<uint32_t>(); v != kVersion) r.fail("unsupported version " + std::to_string(v));
  Checkpoint ck;
  ModelConfig c;
  c.vocab_size = r.pod<uint64_t>();
  c.embed_dim = r.pod<uint64_t>();
  c.n_layers = r.pod<uint64_t>();
  c.n_heads = r.pod<uint64_t>();
  c.context_window = r.pod<uint64_t>();
  c.dropout_rate = r.pod<double>();
  c.max_td_year_class = static_cast<int>(r.pod<int64_t>());
  ck.seed = r.pod<uint64_t>();
  ck.vocab = Vocabulary::parse(r.str(), path.string());
  if (r.pod<uint64_t>() != ck.vocab.hash()) r.fail("vocabulary hash mismatch");
  if (ck.vocab.size() != c.vocab_size) r.fail("vocabulary size does not match model config");

  std::vector<ad::Parameter> params(r.pod<uint64_t>());
  for (auto& p : params) {
    p.name = r.str();
    p.value = r.tensor();
  }
  ck.model = Model(c, std::move(params));
  ck.optimizer.step = r.pod<uint64_t>();
  if (r.pod<uint8_t>()) {
    for (size_t i = 0; i < ck.model.parameters().size(); ++i) {
      ck.optimizer.m.push_back(r.tensor());
      ck.optimizer.v.push_back(r.tensor());
    }
  }
  ck.trainer.epoch = r.pod<uint64_t>();
  ck.trainer.batch_cursor = r.pod<uint64_t>();
  ck.trainer.global_step = r.pod<uint64_t>();
  ck.trainer.best_eval = r.pod<double>();
  ck.trainer.bad_epochs = r.pod<uint64_t>();
  ck.trainer.finished = r.pod<uint8_t>() != 0;
  const auto n = r.pod<uint64_t>();
  for (uint64_t i = 0; i < n; ++i) {
    PromptDistribution::Prefix k;
    for (auto& s : k) s = r.str();
    ck.prompts.add(k, r.pod<uint64_t>());
  }
  if (!r.done()) r.fail("trailing bytes");
  return ck;
}

}  // namespace ehrgen
