#include "pcrsim/codes.hpp"

#include <bit>
#include <random>
#include <sstream>

namespace pcrsim::codes {

namespace {

std::size_t ceil_log2(std::size_t x) {
  std::size_t b = 0;
  while ((std::size_t{1} << b) < x) ++b;
  return b;
}

using Packed = std::vector<std::uint64_t>;

Packed pack(const Word& w) {
  Packed out((w.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0) out[i / 64] |= std::uint64_t{1} << (i % 64);
  return out;
}

std::size_t packed_distance(const Packed& a, const Packed& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<std::size_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

// Raw engine bits only, so the table is identical on every platform.
Word sample_word(std::mt19937_64& rng, std::size_t m) {
  Word w(m);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i % 64 == 0) bits = rng();
    w[i] = (bits >> (i % 64)) & 1 ? 1 : -1;
  }
  return w;
}

std::string label(std::size_t index, std::size_t n) {
  if (index < n) return std::to_string(index + 1);
  static const char* names[] = {"MARK", "BLANK", "DUMMY"};
  return names[index - n];
}

}  // namespace

bool separation_holds(std::size_t m, Precision p) {
  const std::int64_t z = fixed::round_signed_sqrt(-1, fixed::BigInt(2 * m), fixed::BigInt(9), p);
  return fixed::kernel::exp(z, p) == 0;
}

std::size_t compute_m0(Precision p) {
  std::size_t m = 1;
  while (!separation_holds(m, p)) ++m;
  for (std::size_t k = m + 1; k <= m0_horizon(m); ++k) {
    if (!separation_holds(k, p)) throw Error("separation condition not monotone at m=" + std::to_string(k));
  }
  return m;
}

std::size_t code_length(std::size_t n, Precision p) {
  return std::max(compute_m0(p), kLengthFactor * ceil_log2(n + 3));
}

std::size_t hamming(const Word& a, const Word& b) {
  if (a.size() != b.size()) throw DimensionMismatch("codewords of different length");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

CodeTable::CodeTable(std::size_t n, Precision p, std::uint64_t seed, std::vector<Word> words)
    : n_(n), p_(p), seed_(seed), words_(std::move(words)) {
  if (n == 0) throw EmptyInput("code table needs n >= 1");
  if (words_.size() != n + 3) throw DimensionMismatch("code table needs n + 3 words");
  for (const auto& w : words_) {
    if (w.size() != words_.front().size() || w.empty()) throw DimensionMismatch("codewords of different length");
    for (int x : w)
      if (x != 1 && x != -1) throw FormatError("codeword entries must be +-1");
  }
}

const Word& CodeTable::address(std::size_t l) const {
  if (l == 0 || l > n_) throw DimensionMismatch("address out of range");
  return words_[l - 1];
}

std::size_t CodeTable::min_distance() const {
  std::vector<Packed> packed;
  for (const auto& w : words_) packed.push_back(pack(w));
  std::size_t best = m();
  for (std::size_t i = 0; i < packed.size(); ++i)
    for (std::size_t j = i + 1; j < packed.size(); ++j) best = std::min(best, packed_distance(packed[i], packed[j]));
  return best;
}

std::string CodeTable::to_text() const {
  std::ostringstream out;
  out << "code-table v1 n=" << n_ << " m=" << m() << " s=" << p_.bits() << " seed=" << seed_ << "\n";
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << label(i, n_) << ' ';
    for (int x : words_[i]) out << (x > 0 ? '+' : '-');
    out << '\n';
  }
  return out.str();
}

CodeTable CodeTable::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version, ns, ms, ss, seeds;
  if (!(in >> magic >> version >> ns >> ms >> ss >> seeds) || magic != "code-table" || version != "v1") {
    throw FormatError("bad code table header");
  }
  const auto value = [](const std::string& field, const char* key) {
    const std::string prefix = std::string(key) + "=";
    if (field.rfind(prefix, 0) != 0) throw FormatError("expected " + prefix);
    try {
      return std::stoull(field.substr(prefix.size()));
    } catch (const std::exception&) {
      throw FormatError("bad number in " + field);
    }
  };
  const std::size_t n = value(ns, "n");
  const std::size_t m = value(ms, "m");
  const Precision p(static_cast<int>(value(ss, "s")));
  const std::uint64_t seed = value(seeds, "seed");
  std::vector<Word> words;
  for (std::size_t i = 0; i < n + 3; ++i) {
    std::string name, bits;
    if (!(in >> name >> bits)) throw FormatError("code table truncated");
    if (name != label(i, n)) throw FormatError("expected row " + label(i, n) + ", got " + name);
    if (bits.size() != m) throw FormatError("row " + name + " has wrong length");
    Word w;
    for (char c : bits) {
      if (c != '+' && c != '-') throw FormatError("row " + name + " has a character other than +/-");
      w.push_back(c == '+' ? 1 : -1);
    }
    words.push_back(std::move(w));
  }
  return CodeTable(n, p, seed, std::move(words));
}

CodeTable build_code_with_length(std::size_t n, std::size_t m, Precision p, std::uint64_t seed) {
  if (n == 0) throw EmptyInput("code table needs n >= 1");
  const std::size_t need = (m + 2) / 3;
  std::mt19937_64 rng(seed);
  std::vector<Word> words;
  std::vector<Packed> packed;
  for (std::size_t i = 0; i < n + 3; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxResamples && !placed; ++attempt) {
      Word w = sample_word(rng, m);
      Packed pw = pack(w);
      bool ok = true;
      for (const auto& q : packed) {
        if (packed_distance(pw, q) < need) {
          ok = false;
          break;
        }
      }
      if (ok) {
        words.push_back(std::move(w));
        packed.push_back(std::move(pw));
        placed = true;
      }
    }
    if (!placed) {
      throw CodeSearchExhausted("no codeword " + label(i, n) + " at distance " + std::to_string(need) +
                                " after " + std::to_string(kMaxResamples) + " draws (m=" + std::to_string(m) + ")");
    }
  }
  return CodeTable(n, p, seed, std::move(words));
}

CodeTable build_code(std::size_t n, Precision p, std::uint64_t seed) {
  return build_code_with_length(n, code_length(n, p), p, seed);
}

FixedVector interleave_query(const Word& c, Precision p) {
  FixedVector v(p, 2 * c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    v.set_numerator(2 * i, c[i] * p.unit());
    v.set_numerator(2 * i + 1, p.unit());
  }
  return v;
}

FixedVector interleave_key(const Word& d, Precision p) {
  FixedVector v(p, 2 * d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    v.set_numerator(2 * i, d[i] * p.unit());
    v.set_numerator(2 * i + 1, -p.unit());
  }
  return v;
}

}  // namespace pcrsim::codes
