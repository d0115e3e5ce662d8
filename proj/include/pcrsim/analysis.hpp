#pragma once

// Exhaustive correctness runs, the pure-GDN state census and the pure-GA
// parity probe.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcrsim/nn_core.hpp"
#include "pcrsim/pcr.hpp"

namespace pcrsim::analysis {

struct Failure {
  pcr::PcrInstance instance;
  bool expected = false;  // true = YES
  // YES, NO, BUDGET_EXCEEDED, or INVALID:<token> for an emission outside
  // the scratch alphabet and the answers.
  std::string got;
  std::size_t scratch = 0;

  friend bool operator==(const Failure&, const Failure&) = default;
};

struct VerificationReport {
  std::string decoder;  // DecoderSpec label
  std::string mode;     // "exhaustive" or "ga-parity-probe"
  std::size_t n = 0;
  int s = 0;
  std::size_t budget = 0;
  std::size_t total = 0;
  std::vector<Failure> failures;
  std::size_t max_scratch = 0;
  double wall_seconds = 0;  // not part of the serialized report unless asked

  bool passed() const { return failures.empty(); }
  nlohmann::json to_json(bool include_timing = false) const;
  // One row per failure after a header; a summary row when there are none.
  std::string to_csv() const;
};

// Runs greedy decoding on all 2^n * n instances. Work is split over `jobs`
// threads; the report does not depend on the split.
VerificationReport exhaustive_verify(const nn::DecoderSpec& spec, std::size_t n, std::size_t budget,
                                     std::size_t jobs = 1);

struct Witness {
  pcr::Bits y;
  pcr::Bits y_prime;
  std::size_t j = 0;

  friend bool operator==(const Witness&, const Witness&) = default;
};

struct CensusReport {
  std::string decoder;
  std::size_t n = 0;
  int s = 0;
  std::size_t tables = 0;
  // Index of the state class of every table, in enumeration order; classes
  // are numbered by first appearance.
  std::vector<std::uint32_t> class_of_table;
  std::vector<std::size_t> class_sizes;
  std::vector<Witness> witnesses;
  std::size_t state_scalars = 0;       // D
  std::size_t realized_alphabet = 0;   // distinct scalar values observed
  std::uint64_t format_alphabet = 0;   // |F_s|
  std::size_t distinct_response_vectors = 0;

  std::size_t distinct_states() const { return class_sizes.size(); }
  // Number of distinct states needed to separate all response vectors.
  double required_log2() const { return static_cast<double>(n) - 1; }
  bool states_bound_holds() const;    // |{S(Y)}| >= 2^(n-1)
  bool realized_bound_holds() const;  // D log2 |Q_realized| >= n - 1
  bool format_bound_holds() const;    // D log2 |F_s| >= n - 1

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

// Enumerates all 2^n tables (n <= 20), snapshotting the recurrent state after
// B(Y_1) ... B(Y_n). Throws NotPureGdn.
CensusReport state_census(const nn::DecoderSpec& spec, std::size_t n);

struct WitnessCheck {
  nn::Answer answer = nn::Answer::kBudgetExceeded;
  nn::Answer answer_prime = nn::Answer::kBudgetExceeded;
  bool truth = false;
  bool truth_prime = false;

  // Identical decoder answers while the correct answers differ.
  bool confirmed() const { return answer == answer_prime && truth != truth_prime; }
};

WitnessCheck execute_witness(const nn::DecoderSpec& spec, const Witness& w, std::size_t budget = 0);

// Runs the decoder on every parity projection (Y_1 = 0, Y_{i+1} = x_i, j = 1)
// of r-bit strings. Throws NotPureGa.
VerificationReport ga_parity_probe(const nn::DecoderSpec& spec, std::size_t r, std::size_t budget);

}  // namespace pcrsim::analysis
