#ifndef BCPNN_CONNECTIVITY_HPP
#define BCPNN_CONNECTIVITY_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace bcpnn {

/// Hypercolumn-level connectivity between a source and a target layer.
/// Every target hypercolumn has exactly k active source hypercolumns.
class ConnectivityMask {
public:
  ConnectivityMask() = default;

  static ConnectivityMask full(std::size_t n_src_hc, std::size_t n_tgt_hc) {
    ConnectivityMask m(n_src_hc, n_tgt_hc, n_src_hc);
    std::vector<std::size_t> all(n_src_hc);
    for (std::size_t i = 0; i < n_src_hc; ++i) all[i] = i;
    for (std::size_t t = 0; t < n_tgt_hc; ++t) m.set_sources(t, all);
    return m;
  }

  /// Empty mask of the given shape; every target must be assigned with
  /// set_sources before use.
  ConnectivityMask(std::size_t n_src_hc, std::size_t n_tgt_hc, std::size_t k)
      : n_src_(n_src_hc), n_tgt_(n_tgt_hc), k_(k),
        active_(n_src_hc * n_tgt_hc, 0), sources_(n_tgt_hc) {
    if (k == 0) throw ConfigError("connectivity mask needs k >= 1 active sources per target");
    if (k > n_src_hc) throw ConfigError("connectivity mask: k exceeds source hypercolumn count");
  }

  std::size_t n_src_hc() const noexcept { return n_src_; }
  std::size_t n_tgt_hc() const noexcept { return n_tgt_; }
  std::size_t k() const noexcept { return k_; }

  bool active(std::size_t src_hc, std::size_t tgt_hc) const noexcept {
    return active_[src_hc * n_tgt_ + tgt_hc] != 0;
  }

  /// Active source hypercolumns of one target, ascending.
  std::span<const std::size_t> sources(std::size_t tgt_hc) const noexcept { return sources_[tgt_hc]; }

  void set_sources(std::size_t tgt_hc, std::vector<std::size_t> srcs) {
    std::sort(srcs.begin(), srcs.end());
    if (srcs.size() != k_ || std::adjacent_find(srcs.begin(), srcs.end()) != srcs.end() ||
        (!srcs.empty() && srcs.back() >= n_src_))
      throw ValidationError("target hypercolumn " + std::to_string(tgt_hc) + " needs exactly k distinct valid sources");
    for (auto s : sources_[tgt_hc]) active_[s * n_tgt_ + tgt_hc] = 0;
    for (auto s : srcs) active_[s * n_tgt_ + tgt_hc] = 1;
    sources_[tgt_hc] = std::move(srcs);
  }

  std::size_t active_count(std::size_t tgt_hc) const {
    std::size_t c = 0;
    for (std::size_t s = 0; s < n_src_; ++s) c += active(s, tgt_hc) ? 1 : 0;
    return c;
  }

  /// Row-major (source-major) bit packing, LSB first within each byte.
  std::vector<unsigned char> pack_bits() const {
    std::vector<unsigned char> out((active_.size() + 7) / 8, 0);
    for (std::size_t b = 0; b < active_.size(); ++b)
      if (active_[b]) out[b / 8] |= static_cast<unsigned char>(1u << (b % 8));
    return out;
  }

  static ConnectivityMask unpack_bits(std::size_t n_src_hc, std::size_t n_tgt_hc, std::size_t k,
                                      std::span<const unsigned char> bits) {
    if (bits.size() != (n_src_hc * n_tgt_hc + 7) / 8) throw LengthError("mask bit payload has wrong length");
    ConnectivityMask m(n_src_hc, n_tgt_hc, k);
    std::vector<std::vector<std::size_t>> srcs(n_tgt_hc);
    for (std::size_t s = 0; s < n_src_hc; ++s)
      for (std::size_t t = 0; t < n_tgt_hc; ++t) {
        const std::size_t b = s * n_tgt_hc + t;
        if (bits[b / 8] & (1u << (b % 8))) srcs[t].push_back(s);
      }
    for (std::size_t t = 0; t < n_tgt_hc; ++t) m.set_sources(t, std::move(srcs[t]));
    return m;
  }

  friend bool operator==(const ConnectivityMask& a, const ConnectivityMask& b) {
    return a.n_src_ == b.n_src_ && a.n_tgt_ == b.n_tgt_ && a.k_ == b.k_ && a.active_ == b.active_;
  }

private:
  std::size_t n_src_ = 0;
  std::size_t n_tgt_ = 0;
  std::size_t k_ = 0;
  std::vector<unsigned char> active_;
  std::vector<std::vector<std::size_t>> sources_;
};

} // namespace bcpnn

#endif
