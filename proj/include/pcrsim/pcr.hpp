#pragma once

// Parity-Conditioned Retrieval: YES iff Y_j xor parity(Y) = 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pcrsim::pcr {

using Bits = std::vector<std::uint8_t>;

enum class Symbol { kZero, kOne, kMark, kBlank };

const char* to_string(Symbol s);

struct PcrInstance {
  Bits y;
  std::size_t j = 1;  // 1-based

  std::size_t n() const { return y.size(); }
  // Throws EmptyInput / DimensionMismatch when n = 0 or j is out of range.
  void validate() const;

  // "Y=10;j=2"
  std::string to_string() const;
  static PcrInstance parse(const std::string& text);

  friend bool operator==(const PcrInstance&, const PcrInstance&) = default;
};

std::uint8_t parity(const Bits& y);

// B(Y_1) ... B(Y_n) Q(j), length 3n.
std::vector<Symbol> encode_prompt(const PcrInstance& inst);

// true = YES
bool ground_truth(const PcrInstance& inst);

// R_j(Y) = Y_j xor parity(Y).
Bits response_vector(const Bits& y);

// Table Y1 = 0, Y_{i+1} = x_i, queried at j = 1: the answer is parity(x).
PcrInstance parity_projection(const Bits& x);

// Table with index t in [0, 2^n), bit i is bit (n - 1 - i) of t, so
// enumeration is lexicographic in Y.
Bits table_from_index(std::uint64_t t, std::size_t n);

// Visits all (Y, j) in lexicographic order of Y, then j.
void for_each_instance(std::size_t n, const std::function<void(const PcrInstance&)>& visit);

std::string bits_to_string(const Bits& y);

}  // namespace pcrsim::pcr
