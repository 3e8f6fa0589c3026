#pragma once

// Deterministic synthetic denoisers. They stand in for a mask-predicting
// model: given a partially masked grid, a conditioning and a timestep they
// emit per-position vocabulary logits and synthetic attention maps. Both
// kinds are pure functions of their inputs, which is what the inversion
// guarantees (and the tests) rely on.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dik/rng.hpp"
#include "dik/types.hpp"

namespace dik {

// Per-(layer, head) non-negative attention maps over grid positions.
class AttentionStack {
 public:
  AttentionStack(int layers, int heads, int height, int width, std::vector<double> values)
      : layers_(layers), heads_(heads), height_(height), width_(width),
        values_(std::move(values)) {
    detail::check_dims(height_, width_, "AttentionStack");
    detail::require(layers_ > 0 && heads_ > 0,
                    "AttentionStack: layers and heads must be positive, got " +
                        std::to_string(layers_) + "/" + std::to_string(heads_));
    detail::require(values_.size() == static_cast<std::size_t>(layers_) * heads_ *
                                          height_ * width_,
                    "AttentionStack: values length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(layers_) + "x" +
                        std::to_string(heads_) + "x" + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < values_.size(); ++i)
      detail::require(std::isfinite(values_[i]) && values_[i] >= 0.0,
                      "AttentionStack: values[" + std::to_string(i) +
                          "] must be finite and non-negative");
  }

  int layers() const { return layers_; }
  int heads() const { return heads_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int map_count() const { return layers_ * heads_; }

  double at(int layer, int head, int y, int x) const {
    return values_[((static_cast<std::size_t>(layer) * heads_ + head) * height_ + y) *
                       width_ + x];
  }
  std::span<const double> values() const { return values_; }

 private:
  int layers_;
  int heads_;
  int height_;
  int width_;
  std::vector<double> values_;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual int vocab_size() const = 0;
  virtual int attention_layers() const = 0;
  virtual int attention_heads() const = 0;

  // t runs in [1, total_steps]; logits are finite for every input.
  virtual LogitField predict_logits(const TokenGrid& grid, const Conditioning& cond,
                                    int t, int total_steps) const = 0;
  virtual AttentionStack predict_attention(const TokenGrid& grid, const Conditioning& cond,
                                           int t, int total_steps) const = 0;

 protected:
  void check_inputs(const TokenGrid& grid, int t, int total_steps) const {
    detail::require(grid.vocab_size() == vocab_size(),
                    "denoiser: grid vocab_size " + std::to_string(grid.vocab_size()) +
                        " does not match model vocab_size " + std::to_string(vocab_size()));
    detail::require(total_steps >= 1, "denoiser: total_steps must be at least 1, got " +
                                          std::to_string(total_steps));
    detail::require(t >= 1 && t <= total_steps,
                    "denoiser: timestep " + std::to_string(t) + " outside [1," +
                        std::to_string(total_steps) + "]");
  }

  // Concept set = prompt tokens that fall inside the vocabulary.
  std::set<Token> concept_set(const Conditioning& cond) const {
    std::set<Token> out;
    for (Token t : cond.prompt)
      if (t >= 0 && t < vocab_size()) out.insert(t);
    return out;
  }

  // Binary token/concept affinity times a fixed positive per-head weight.
  AttentionStack affinity_attention(const TokenGrid& grid, const Conditioning& cond) const {
    const auto concepts = concept_set(cond);
    const int layers = attention_layers();
    const int heads = attention_heads();
    std::vector<double> values(static_cast<std::size_t>(layers) * heads * grid.size());
    std::size_t i = 0;
    for (int l = 0; l < layers; ++l)
      for (int k = 0; k < heads; ++k) {
        const double weight = 1.0 + 0.5 * l + 0.25 * k;
        for (int p = 0; p < grid.size(); ++p, ++i)
          values[i] = concepts.count(grid.at(p)) ? weight : 0.0;
      }
    return AttentionStack(layers, heads, grid.height(), grid.width(), std::move(values));
  }
};

// Logits are a keyed hash of the token neighbourhood (Chebyshev radius
// `locality_radius`, out-of-bounds cells read as a sentinel), the prompt
// digest, the timestep bucket floor(4t/T) and the position's parity class,
// mapped into [-4,4]. When the neighbourhood intersects the conditioning's
// concept set, the first concept token gets a +6 bonus, which gives the
// conditioning a visible, testable pull.
class LocalHashDenoiser : public Denoiser {
 public:
  LocalHashDenoiser(int vocab_size, int locality_radius = 1, int attention_layers = 2,
                    int attention_heads = 2)
      : vocab_(vocab_size), radius_(locality_radius), layers_(attention_layers),
        heads_(attention_heads) {
    detail::require(vocab_ > 0, "LocalHashDenoiser: vocab_size must be positive");
    detail::require(radius_ >= 0, "LocalHashDenoiser: locality_radius must be >= 0");
    detail::require(layers_ > 0 && heads_ > 0,
                    "LocalHashDenoiser: attention shape must be positive");
  }

  int vocab_size() const override { return vocab_; }
  int attention_layers() const override { return layers_; }
  int attention_heads() const override { return heads_; }
  int locality_radius() const { return radius_; }

  LogitField predict_logits(const TokenGrid& grid, const Conditioning& cond,
                            int t, int total_steps) const override {
    check_inputs(grid, t, total_steps);
    const auto concepts = concept_set(cond);
    const Token preferred = concepts.empty() ? -1 : *concepts.begin();
    const std::uint64_t cond_digest = cond.digest();
    const int bucket = (4 * t) / total_steps;

    std::vector<double> values(static_cast<std::size_t>(grid.size()) * vocab_);
    for (int y = 0; y < grid.height(); ++y)
      for (int x = 0; x < grid.width(); ++x) {
        std::uint64_t h = detail::splitmix64(cond_digest ^ 0xa5a5a5a5a5a5a5a5ULL);
        bool touches_concept = false;
        for (int dy = -radius_; dy <= radius_; ++dy)
          for (int dx = -radius_; dx <= radius_; ++dx) {
            const int ny = y + dy;
            const int nx = x + dx;
            const std::int64_t cell =
                (ny >= 0 && ny < grid.height() && nx >= 0 && nx < grid.width())
                    ? grid.at(ny, nx)
                    : -1;
            h = detail::splitmix64(h ^ static_cast<std::uint64_t>(cell));
            if (cell >= 0 && concepts.count(static_cast<Token>(cell)))
              touches_concept = true;
          }
        const int parity = (y % 2) * 2 + (x % 2);
        h = detail::splitmix64(h ^ static_cast<std::uint64_t>(bucket * 4 + parity));

        double* row = values.data() + static_cast<std::size_t>(grid.index(y, x)) * vocab_;
        for (int v = 0; v < vocab_; ++v) {
          const std::uint64_t hv = detail::splitmix64(h ^ static_cast<std::uint64_t>(v));
          const double unit = (static_cast<double>(hv >> 11) + 0.5) * 0x1.0p-53;
          row[v] = -4.0 + 8.0 * unit;
        }
        if (touches_concept && preferred >= 0) row[preferred] += 6.0;
      }
    return LogitField(grid.height(), grid.width(), vocab_, std::move(values));
  }

  AttentionStack predict_attention(const TokenGrid& grid, const Conditioning& cond,
                                   int t, int total_steps) const override {
    check_inputs(grid, t, total_steps);
    return affinity_attention(grid, cond);
  }

 private:
  int vocab_;
  int radius_;
  int layers_;
  int heads_;
};

// Categorical table fitted by counting: the class of a position is a digest
// of its 8 surrounding cells (out-of-bounds as sentinel), and the table
// maps each observed class to center-token counts. Prediction emits
// log of the add-one-smoothed class distribution; unseen classes fall back
// to the smoothed uniform. Conditioning shifts nothing here - the table is
// what it is - but attention still follows the concept set.
class EmpiricalDenoiser : public Denoiser {
 public:
  using CountTable = std::map<std::uint64_t, std::vector<std::uint64_t>>;

  EmpiricalDenoiser(int vocab_size, CountTable table, int attention_layers = 2,
                    int attention_heads = 2)
      : vocab_(vocab_size), layers_(attention_layers), heads_(attention_heads),
        table_(std::move(table)) {
    detail::require(vocab_ > 0, "EmpiricalDenoiser: vocab_size must be positive");
    detail::require(layers_ > 0 && heads_ > 0,
                    "EmpiricalDenoiser: attention shape must be positive");
    for (const auto& [key, counts] : table_)
      detail::require(static_cast<int>(counts.size()) == vocab_,
                      "EmpiricalDenoiser: count row for class " + to_hex(key) +
                          " has length " + std::to_string(counts.size()) +
                          ", expected " + std::to_string(vocab_));
  }

  static std::uint64_t context_class(const TokenGrid& grid, int y, int x) {
    std::uint64_t h = 0x9d8f3c2b1a0e5d47ULL;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy == 0 && dx == 0) continue;
        const int ny = y + dy;
        const int nx = x + dx;
        const std::int64_t cell =
            (ny >= 0 && ny < grid.height() && nx >= 0 && nx < grid.width())
                ? grid.at(ny, nx)
                : -1;
        h = detail::splitmix64(h ^ static_cast<std::uint64_t>(cell));
      }
    return h;
  }

  static EmpiricalDenoiser fit(const std::vector<TokenGrid>& corpus,
                               int attention_layers = 2, int attention_heads = 2) {
    detail::require(!corpus.empty(), "EmpiricalDenoiser::fit: empty corpus");
    const int vocab = corpus.front().vocab_size();
    CountTable table;
    for (const auto& grid : corpus) {
      detail::require(grid.vocab_size() == vocab,
                      "EmpiricalDenoiser::fit: corpus grids disagree on vocab_size (" +
                          std::to_string(grid.vocab_size()) + " vs " +
                          std::to_string(vocab) + ")");
      detail::require(!grid.contains_mask_token(),
                      "EmpiricalDenoiser::fit: corpus grids must be mask-free");
      for (int y = 0; y < grid.height(); ++y)
        for (int x = 0; x < grid.width(); ++x) {
          auto& counts = table[context_class(grid, y, x)];
          if (counts.empty()) counts.assign(vocab, 0);
          ++counts[grid.at(y, x)];
        }
    }
    return EmpiricalDenoiser(vocab, std::move(table), attention_layers, attention_heads);
  }

  int vocab_size() const override { return vocab_; }
  int attention_layers() const override { return layers_; }
  int attention_heads() const override { return heads_; }
  const CountTable& table() const { return table_; }

  LogitField predict_logits(const TokenGrid& grid, const Conditioning& cond,
                            int t, int total_steps) const override {
    check_inputs(grid, t, total_steps);
    (void)cond;
    std::vector<double> values(static_cast<std::size_t>(grid.size()) * vocab_);
    static const std::vector<std::uint64_t> kUnseen;
    for (int y = 0; y < grid.height(); ++y)
      for (int x = 0; x < grid.width(); ++x) {
        const auto it = table_.find(context_class(grid, y, x));
        const auto& counts = it == table_.end() ? kUnseen : it->second;
        std::uint64_t total = 0;
        for (std::uint64_t c : counts) total += c;
        double* row = values.data() + static_cast<std::size_t>(grid.index(y, x)) * vocab_;
        for (int v = 0; v < vocab_; ++v) {
          const double count = counts.empty() ? 0.0 : static_cast<double>(counts[v]);
          row[v] = std::log((count + 1.0) / (static_cast<double>(total) + vocab_));
        }
      }
    return LogitField(grid.height(), grid.width(), vocab_, std::move(values));
  }

  AttentionStack predict_attention(const TokenGrid& grid, const Conditioning& cond,
                                   int t, int total_steps) const override {
    check_inputs(grid, t, total_steps);
    return affinity_attention(grid, cond);
  }

 private:
  int vocab_;
  int layers_;
  int heads_;
  CountTable table_;
};

inline std::vector<double> softmax_row(std::span<const double> logits) {
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - top);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

// Softmax probability of the token each position currently holds; at mask
// positions, the maximum softmax probability (the model's best guess).
inline ConfidenceMap confidence_map(const LogitField& field, const TokenGrid& grid) {
  detail::require(field.height() == grid.height() && field.width() == grid.width(),
                  "confidence_map: field and grid shapes differ");
  detail::require(field.vocab_size() == grid.vocab_size(),
                  "confidence_map: field vocab_size " + std::to_string(field.vocab_size()) +
                      " does not match grid vocab_size " +
                      std::to_string(grid.vocab_size()));
  std::vector<double> values(grid.size());
  for (int p = 0; p < grid.size(); ++p) {
    const auto probs = softmax_row(field.row(p));
    const Token held = grid.at(p);
    if (held == grid.mask_token())
      values[p] = *std::max_element(probs.begin(), probs.end());
    else
      values[p] = probs[held];
    values[p] = std::clamp(values[p], 0.0, 1.0);
  }
  return ConfidenceMap(grid.height(), grid.width(), std::move(values));
}

enum class DenoiserKind { local_hash, empirical };

// Buildable description of a denoiser, serializable for reproducible runs.
// An empirical spec carries either a fitted count table or a corpus
// directory to fit from at build time.
struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::local_hash;
  int vocab_size = 32;
  int locality_radius = 1;
  int attention_layers = 2;
  int attention_heads = 2;
  EmpiricalDenoiser::CountTable table;  // empirical only
  std::string corpus_dir;               // empirical only, alternative to table

  static DenoiserSpec local_hash(int vocab, int radius = 1) {
    DenoiserSpec spec;
    spec.kind = DenoiserKind::local_hash;
    spec.vocab_size = vocab;
    spec.locality_radius = radius;
    return spec;
  }

  std::shared_ptr<const Denoiser> build() const {
    if (kind == DenoiserKind::local_hash)
      return std::make_shared<LocalHashDenoiser>(vocab_size, locality_radius,
                                                 attention_layers, attention_heads);
    detail::require(!table.empty(),
                    "DenoiserSpec: empirical denoiser needs a fitted table or corpus");
    return std::make_shared<EmpiricalDenoiser>(vocab_size, table, attention_layers,
                                               attention_heads);
  }
};

}  // namespace dik
