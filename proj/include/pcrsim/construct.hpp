#pragma once

// Explicit solvers: the two-coordinate GDN parity cell and the hybrid
// decoder (one GDN layer, two GA layers) for Parity-Conditioned Retrieval.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcrsim/codes.hpp"
#include "pcrsim/nn_core.hpp"
#include "pcrsim/pcr.hpp"

namespace pcrsim::construct {

using fixed::FixedVector;
using fixed::Precision;

// Extra positions beyond the 3n prompt tokens.
inline constexpr std::size_t kContextHeadroom = 16;

enum class Macro { kZ, kG, kF };

const char* to_string(Macro m);

struct MacroParams {
  std::int64_t alpha;  // numerators
  std::int64_t beta;
  std::array<std::int64_t, 2> key;
  std::int64_t value;
};

struct ParityCellParams {
  Precision p;
  std::int64_t delta;  // numerator of 2^-s, always 1
  std::int64_t kappa;  // numerator of [1/sqrt 2]_s
  MacroParams z, g, f;
  FixedVector p0, p1, h0, h1;
  FixedVector query;  // (1, 0)

  const MacroParams& macro(Macro m) const { return m == Macro::kZ ? z : m == Macro::kG ? g : f; }
};

ParityCellParams parity_cell_params(Precision p);

struct IdentityCheck {
  std::string name;  // e.g. "[3 kappa delta]_s = 2 delta"
  std::string lhs;   // exact value as a fraction
  std::string rhs;
  bool holds = false;
};

// The six rounding facts the parity cell relies on, evaluated at precision p.
std::vector<IdentityCheck> cell_identities(Precision p);

// x -> alpha (x - (beta <x,k>_s) k) + (beta v) k, rounded per scalar.
FixedVector apply_macro_update(const FixedVector& x, Macro m, Precision p);

// B(0) -> (Z, Z), B(1) -> (G, F).
std::vector<Macro> macros_for_bits(const pcr::Bits& bits);

// Final state after the table prefix, starting from P0.
FixedVector macro_trajectory(const pcr::Bits& bits, Precision p);

// Named coordinates of the residual stream.
struct EmbeddingLayout {
  std::size_t n = 0;
  std::size_t m = 0;  // code length; 0 when no address slots exist
  std::size_t d_model = 0;

  // token type one-hots
  std::size_t type_zero = 0, type_one = 0, type_mark = 0, type_blank = 0;
  std::size_t seg_table = 0, seg_query = 0;
  std::size_t r1 = 0, r2 = 0;
  // table token "1" at offset r = 1 (cell_g) or r = 2 (cell_f)
  std::size_t cell_g = 0, cell_f = 0;
  // protected coordinates
  std::size_t parity_raw = 0, parity = 0, bit = 0, answer = 0;
  // m-wide slots
  std::size_t address = 0;    // E(l) at query offset l
  std::size_t key_code = 0;   // E(l) at the first token of table block l, E(DUMMY) elsewhere
  std::size_t retrieved = 0;  // written by the first GA layer

  std::size_t fixed_coordinates() const { return 14; }
};

// Places the coordinates and pads d_model to a multiple of `align`.
EmbeddingLayout make_layout(std::size_t n, std::size_t m, std::size_t align);

// Vocabulary shared by all built decoders: YES, NO, #, 0, 1, MARK, BLANK.
nn::Vocabulary pcr_vocabulary();
std::vector<nn::TokenId> prompt_tokens(const nn::Vocabulary& vocab, const std::vector<pcr::Symbol>& prompt);
std::vector<nn::TokenId> prompt_tokens(const nn::Vocabulary& vocab, const pcr::PcrInstance& inst);
// The 2n table tokens B(Y_1) ... B(Y_n).
std::vector<nn::TokenId> table_tokens(const nn::Vocabulary& vocab, const pcr::Bits& y);

// Parity-cell head (head_dim 2) reading cell_g / cell_f from the layout.
nn::GdnHeadParams build_parity_cell(Precision p, const EmbeddingLayout& layout);

struct HybridDecoder {
  nn::DecoderSpec spec;
  codes::CodeTable code;
  EmbeddingLayout layout;
};

// Throws CodeSearchExhausted from the code search.
HybridDecoder build_hybrid(std::size_t n, Precision p, std::uint64_t seed);
nn::DecoderSpec build_hybrid_decoder(std::size_t n, Precision p, std::uint64_t seed);

// Pure GDN decoder: the parity cell alone, answering YES iff parity(Y) = 1.
nn::DecoderSpec build_parity_only_decoder(std::size_t n, Precision p);

}  // namespace pcrsim::construct
