#pragma once

// Separated +-1 address codes for the hard-selection attention gadget.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcrsim/fixed.hpp"

namespace pcrsim::codes {

using fixed::FixedVector;
using fixed::Precision;

// Length multiplier in m = max(m0(s), kLengthFactor * ceil(log2(n + 3))).
inline constexpr std::size_t kLengthFactor = 24;
// Samples drawn for one codeword before the search gives up.
inline constexpr int kMaxResamples = 64;

using Word = std::vector<int>;  // entries in {-1, +1}

// True iff [exp([-sqrt(2m)/3]_s)]_s = 0.
bool separation_holds(std::size_t m, Precision p);

// Smallest m with separation_holds; the condition is checked to stay true up
// to m0_horizon(m0).
std::size_t compute_m0(Precision p);
inline std::size_t m0_horizon(std::size_t m0) { return 4 * m0; }

std::size_t code_length(std::size_t n, Precision p);

std::size_t hamming(const Word& a, const Word& b);

class CodeTable {
 public:
  CodeTable(std::size_t n, Precision p, std::uint64_t seed, std::vector<Word> words);

  std::size_t n() const { return n_; }
  std::size_t m() const { return words_.front().size(); }
  Precision precision() const { return p_; }
  std::uint64_t seed() const { return seed_; }

  // Address codeword E(l), 1 <= l <= n.
  const Word& address(std::size_t l) const;
  const Word& mark() const { return words_[n_]; }
  const Word& blank() const { return words_[n_ + 1]; }
  const Word& dummy() const { return words_[n_ + 2]; }
  const std::vector<Word>& words() const { return words_; }

  std::size_t min_distance() const;
  // Required separation ceil(m / 3).
  std::size_t required_distance() const { return (m() + 2) / 3; }

  std::string to_text() const;
  static CodeTable from_text(const std::string& text);

  friend bool operator==(const CodeTable&, const CodeTable&) = default;

 private:
  std::size_t n_;
  Precision p_;
  std::uint64_t seed_;
  std::vector<Word> words_;  // addresses 1..n, then MARK, BLANK, DUMMY
};

// Throws CodeSearchExhausted if some codeword needs more than kMaxResamples
// draws.
CodeTable build_code(std::size_t n, Precision p, std::uint64_t seed);
// Same search with an explicit length, for callers that retry with larger m.
CodeTable build_code_with_length(std::size_t n, std::size_t m, Precision p, std::uint64_t seed);

// (c1, 1, c2, 1, ..., cm, 1) and (d1, -1, ..., dm, -1).
FixedVector interleave_query(const Word& c, Precision p);
FixedVector interleave_key(const Word& d, Precision p);

}  // namespace pcrsim::codes
