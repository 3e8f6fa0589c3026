#pragma once

// Core value types: token grids, binary masks, logit/score/confidence
// fields, conditioning. Invariants are enforced at construction; all types
// behave as immutable values (derive new ones instead of mutating).

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dik {

using Token = std::int32_t;

struct Point {
  int y = 0;
  int x = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Box {
  int y0 = 0;
  int x0 = 0;
  int y1 = 0;
  int x1 = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

inline void check_dims(int height, int width, const char* what) {
  require(height > 0 && width > 0,
          std::string(what) + ": dimensions must be positive, got " +
              std::to_string(height) + "x" + std::to_string(width));
}

}  // namespace detail

// Ties resolve to the lowest index, everywhere argmax appears.
inline int argmax_lowest(std::span<const double> values) {
  detail::require(!values.empty(), "argmax_lowest: empty range");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

// H x W grid of vocabulary indices in row-major order, origin top-left.
// mask_token lies outside the vocabulary so an argmax over vocabulary
// logits can never produce it.
class TokenGrid {
 public:
  TokenGrid(int height, int width, int vocab_size, Token mask_token,
            std::vector<Token> tokens)
      : height_(height),
        width_(width),
        vocab_(vocab_size),
        mask_(mask_token),
        tokens_(std::move(tokens)) {
    detail::check_dims(height_, width_, "TokenGrid");
    detail::require(vocab_ > 0, "TokenGrid: vocab_size must be positive, got " +
                                    std::to_string(vocab_));
    detail::require(mask_ >= vocab_,
                    "TokenGrid: mask_token " + std::to_string(mask_) +
                        " must lie outside the vocabulary [0," +
                        std::to_string(vocab_) + ")");
    detail::require(static_cast<int>(tokens_.size()) == height_ * width_,
                    "TokenGrid: tokens length " + std::to_string(tokens_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const Token t = tokens_[i];
      detail::require((t >= 0 && t < vocab_) || t == mask_,
                      "TokenGrid: tokens[" + std::to_string(i) + "] = " +
                          std::to_string(t) + " is neither in [0," +
                          std::to_string(vocab_) + ") nor the mask token " +
                          std::to_string(mask_));
    }
  }

  static TokenGrid filled(int height, int width, int vocab_size, Token fill) {
    return TokenGrid(height, width, vocab_size, vocab_size,
                     std::vector<Token>(static_cast<std::size_t>(height) * width, fill));
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int vocab_size() const { return vocab_; }
  Token mask_token() const { return mask_; }
  int size() const { return height_ * width_; }

  int index(int y, int x) const { return y * width_ + x; }
  Token at(int y, int x) const { return tokens_[index(y, x)]; }
  Token at(int idx) const { return tokens_[idx]; }
  std::span<const Token> tokens() const { return tokens_; }

  bool contains_mask_token() const {
    for (Token t : tokens_)
      if (t == mask_) return true;
    return false;
  }

  // Same shape and vocabulary, different cells.
  TokenGrid with_tokens(std::vector<Token> tokens) const {
    return TokenGrid(height_, width_, vocab_, mask_, std::move(tokens));
  }

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;

 private:
  int height_;
  int width_;
  int vocab_;
  Token mask_;
  std::vector<Token> tokens_;
};

// Binary region mask over a grid, row-major.
class GroundingMask {
 public:
  GroundingMask(int height, int width, std::vector<std::uint8_t> bits)
      : height_(height), width_(width), bits_(std::move(bits)) {
    detail::check_dims(height_, width_, "GroundingMask");
    detail::require(static_cast<int>(bits_.size()) == height_ * width_,
                    "GroundingMask: bits length " + std::to_string(bits_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      detail::require(bits_[i] == 0 || bits_[i] == 1,
                      "GroundingMask: bits[" + std::to_string(i) + "] = " +
                          std::to_string(bits_[i]) + " is not 0/1");
      popcount_ += bits_[i];
    }
  }

  static GroundingMask zeros(int height, int width) {
    return GroundingMask(height, width,
                         std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0));
  }
  static GroundingMask ones(int height, int width) {
    return GroundingMask(height, width,
                         std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 1));
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  int popcount() const { return popcount_; }

  int index(int y, int x) const { return y * width_ + x; }
  bool test(int y, int x) const { return bits_[index(y, x)] != 0; }
  bool test(int idx) const { return bits_[idx] != 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  friend bool operator==(const GroundingMask&, const GroundingMask&) = default;

 private:
  int height_;
  int width_;
  int popcount_ = 0;
  std::vector<std::uint8_t> bits_;
};

namespace detail {
inline void check_same_shape(const GroundingMask& a, const GroundingMask& b,
                             const char* what) {
  require(a.height() == b.height() && a.width() == b.width(),
          std::string(what) + ": mask shapes differ (" + std::to_string(a.height()) +
              "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
              "x" + std::to_string(b.width()) + ")");
}
}  // namespace detail

inline GroundingMask mask_and(const GroundingMask& a, const GroundingMask& b) {
  detail::check_same_shape(a, b, "mask_and");
  std::vector<std::uint8_t> bits(a.size());
  for (int i = 0; i < a.size(); ++i) bits[i] = a.test(i) && b.test(i);
  return GroundingMask(a.height(), a.width(), std::move(bits));
}

inline GroundingMask mask_or(const GroundingMask& a, const GroundingMask& b) {
  detail::check_same_shape(a, b, "mask_or");
  std::vector<std::uint8_t> bits(a.size());
  for (int i = 0; i < a.size(); ++i) bits[i] = a.test(i) || b.test(i);
  return GroundingMask(a.height(), a.width(), std::move(bits));
}

// a AND NOT b
inline GroundingMask mask_diff(const GroundingMask& a, const GroundingMask& b) {
  detail::check_same_shape(a, b, "mask_diff");
  std::vector<std::uint8_t> bits(a.size());
  for (int i = 0; i < a.size(); ++i) bits[i] = a.test(i) && !b.test(i);
  return GroundingMask(a.height(), a.width(), std::move(bits));
}

inline GroundingMask mask_complement(const GroundingMask& a) {
  std::vector<std::uint8_t> bits(a.size());
  for (int i = 0; i < a.size(); ++i) bits[i] = !a.test(i);
  return GroundingMask(a.height(), a.width(), std::move(bits));
}

inline bool mask_subset(const GroundingMask& a, const GroundingMask& b) {
  detail::check_same_shape(a, b, "mask_subset");
  for (int i = 0; i < a.size(); ++i)
    if (a.test(i) && !b.test(i)) return false;
  return true;
}

// Dense H x W x vocab field of finite prediction logits.
class LogitField {
 public:
  LogitField(int height, int width, int vocab_size, std::vector<double> values)
      : height_(height), width_(width), vocab_(vocab_size), values_(std::move(values)) {
    detail::check_dims(height_, width_, "LogitField");
    detail::require(vocab_ > 0, "LogitField: vocab_size must be positive");
    detail::require(values_.size() ==
                        static_cast<std::size_t>(height_) * width_ * vocab_,
                    "LogitField: values length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_) + "x" + std::to_string(vocab_));
    for (std::size_t i = 0; i < values_.size(); ++i)
      detail::require(std::isfinite(values_[i]),
                      "LogitField: values[" + std::to_string(i) + "] is not finite");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int vocab_size() const { return vocab_; }

  double at(int y, int x, int v) const {
    return values_[(static_cast<std::size_t>(y) * width_ + x) * vocab_ + v];
  }
  std::span<const double> row(int y, int x) const {
    return std::span<const double>(values_)
        .subspan((static_cast<std::size_t>(y) * width_ + x) * vocab_, vocab_);
  }
  std::span<const double> row(int idx) const {
    return std::span<const double>(values_)
        .subspan(static_cast<std::size_t>(idx) * vocab_, vocab_);
  }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const LogitField&, const LogitField&) = default;

 private:
  int height_;
  int width_;
  int vocab_;
  std::vector<double> values_;
};

// Per-position selection scores on the extended real line. +inf marks
// forced positions, -inf marks ineligible ones; NaN is rejected.
class ScoreField {
 public:
  ScoreField(int height, int width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    detail::check_dims(height_, width_, "ScoreField");
    detail::require(static_cast<int>(values_.size()) == height_ * width_,
                    "ScoreField: values length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < values_.size(); ++i)
      detail::require(!std::isnan(values_[i]),
                      "ScoreField: values[" + std::to_string(i) + "] is NaN");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  double at(int idx) const { return values_[idx]; }
  double at(int y, int x) const { return values_[y * width_ + x]; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const ScoreField&, const ScoreField&) = default;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

// Per-position probabilities in [0,1].
class ConfidenceMap {
 public:
  ConfidenceMap(int height, int width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    detail::check_dims(height_, width_, "ConfidenceMap");
    detail::require(static_cast<int>(values_.size()) == height_ * width_,
                    "ConfidenceMap: values length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < values_.size(); ++i)
      detail::require(values_[i] >= 0.0 && values_[i] <= 1.0,
                      "ConfidenceMap: values[" + std::to_string(i) + "] = " +
                          std::to_string(values_[i]) + " outside [0,1]");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  double at(int idx) const { return values_[idx]; }
  double at(int y, int x) const { return values_[y * width_ + x]; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const ConfidenceMap&, const ConfidenceMap&) = default;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

// Grayscale view of a grid, values in [0,255].
class IntensityGrid {
 public:
  IntensityGrid(int height, int width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    detail::check_dims(height_, width_, "IntensityGrid");
    detail::require(static_cast<int>(values_.size()) == height_ * width_,
                    "IntensityGrid: values length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < values_.size(); ++i)
      detail::require(std::isfinite(values_[i]) && values_[i] >= 0.0 &&
                          values_[i] <= 255.0,
                      "IntensityGrid: values[" + std::to_string(i) + "] = " +
                          std::to_string(values_[i]) + " outside [0,255]");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  double at(int idx) const { return values_[idx]; }
  double at(int y, int x) const { return values_[y * width_ + x]; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const IntensityGrid&, const IntensityGrid&) = default;

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

// Fixed token -> intensity palette: floor(token * 255 / (vocab_size - 1)).
inline IntensityGrid to_intensity(const TokenGrid& grid) {
  detail::require(grid.vocab_size() >= 2,
                  "to_intensity: vocab_size must be at least 2 for the palette, got " +
                      std::to_string(grid.vocab_size()));
  detail::require(!grid.contains_mask_token(),
                  "to_intensity: grid contains mask tokens, which have no intensity");
  std::vector<double> values(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const long long t = grid.at(i);
    values[i] = static_cast<double>((t * 255) / (grid.vocab_size() - 1));
  }
  return IntensityGrid(grid.height(), grid.width(), std::move(values));
}

enum class Role { source, target };

// What the denoiser is conditioned on. The prompt is an opaque token
// sequence the denoiser interprets; the role is pipeline bookkeeping and
// never influences predictions. An empty prompt is the neutral
// (background) conditioning.
struct Conditioning {
  std::vector<Token> prompt;
  Role role = Role::source;

  static Conditioning neutral(Role r = Role::source) { return Conditioning{{}, r}; }

  std::uint64_t digest() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (Token t : prompt) {
      for (int b = 0; b < 4; ++b) {
        h ^= (static_cast<std::uint32_t>(t) >> (8 * b)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
    return h;
  }

  friend bool operator==(const Conditioning&, const Conditioning&) = default;
};

// 64-bit FNV-1a over the token array; ties edit stacks to their source grid.
inline std::uint64_t grid_checksum(const TokenGrid& grid) {
  std::uint64_t h = 14695981039346656037ULL;
  for (Token t : grid.tokens()) {
    for (int b = 0; b < 4; ++b) {
      h ^= (static_cast<std::uint32_t>(t) >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

inline std::string to_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

inline std::uint64_t parse_hex(const std::string& text) {
  detail::require(text.size() == 16, "parse_hex: expected 16 hex digits, got \"" + text + "\"");
  std::uint64_t value = 0;
  for (char c : text) {
    value <<= 4;
    if (c >= '0' && c <= '9')
      value |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      value |= static_cast<std::uint64_t>(c - 'a' + 10);
    else
      throw std::invalid_argument("parse_hex: invalid hex digit '" + std::string(1, c) + "'");
  }
  return value;
}

inline std::uint64_t string_digest(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace dik
