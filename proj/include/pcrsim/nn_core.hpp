#pragma once

// Gated Attention and Gated DeltaNet decoders evaluated over F_s.
//
// Every tensor that leaves a block is a FixedVector. Affine maps use the
// strict convention (round after each product and each addition, folding
// over input coordinates in increasing order and adding the bias last); the
// only wide accumulators are the QK dot product, the RMS/l2 reductions and the
// softmax denominator, all inside pcrsim::fixed.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcrsim/fixed.hpp"

namespace pcrsim::nn {

using fixed::FixedMatrix;
using fixed::FixedScalar;
using fixed::FixedVector;
using fixed::Precision;

using TokenId = std::size_t;

// (coordinate, numerator) pairs sorted by coordinate, no zero numerators.
using SparseVector = std::vector<std::pair<std::uint32_t, std::int64_t>>;

// x -> W x + b with sparse W. Zero weights are never stored; skipping them is
// exact because adding 0 to a grid value is the identity.
class AffineMap {
 public:
  AffineMap(Precision p, std::size_t in_dim, std::size_t out_dim);

  Precision precision() const { return p_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return rows_.size(); }

  void set_weight(std::size_t row, std::size_t col, const FixedScalar& w);
  void set_weight_numerator(std::size_t row, std::size_t col, std::int64_t k);
  void set_bias(std::size_t row, const FixedScalar& b);
  void set_bias_numerator(std::size_t row, std::int64_t k);
  std::int64_t weight_numerator(std::size_t row, std::size_t col) const;
  std::int64_t bias_numerator(std::size_t row) const { return bias_.at(row); }
  const SparseVector& row(std::size_t r) const { return rows_.at(r); }
  std::size_t nonzeros() const;
  bool is_zero() const;

  FixedVector apply(const FixedVector& x) const;

  friend bool operator==(const AffineMap&, const AffineMap&) = default;

 private:
  Precision p_;
  std::size_t in_dim_;
  std::vector<SparseVector> rows_;
  std::vector<std::int64_t> bias_;
};

// Scalar nonlinearity with range [0, 1] used for the GDN decay and step size.
enum class UnitActivation { kClamp, kSigmoid };

struct GaHeadParams {
  AffineMap query;
  AffineMap key;
  AffineMap value;
  AffineMap gate;
};

struct GdnHeadParams {
  AffineMap query;
  AffineMap key;
  AffineMap value;
  AffineMap alpha;  // out_dim 1
  AffineMap beta;   // out_dim 1
  AffineMap gate;
  UnitActivation alpha_activation = UnitActivation::kClamp;
  UnitActivation beta_activation = UnitActivation::kClamp;
  FixedMatrix initial_state;
};

// One hidden ReLU layer; a hidden width of 0 makes the MLP the constant bias.
struct MlpParams {
  AffineMap hidden;
  AffineMap output;

  FixedVector apply(const FixedVector& x) const;
};

enum class LayerKind { kGa, kGdn };

const char* to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kGa;
  std::size_t head_dim = 0;
  std::vector<GaHeadParams> ga_heads;    // used when kind == kGa
  std::vector<GdnHeadParams> gdn_heads;  // used when kind == kGdn
  AffineMap out_proj;                    // (heads * head_dim) -> d_model
  MlpParams mlp;

  std::size_t head_count() const { return kind == LayerKind::kGa ? ga_heads.size() : gdn_heads.size(); }
};

// Answer tokens come first in the tie order, then the scratch alphabet.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> symbols, std::string yes, std::string no, std::vector<std::string> scratch);

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& name(TokenId id) const { return symbols_.at(id); }
  TokenId id(const std::string& name) const;
  std::optional<TokenId> find(const std::string& name) const;
  TokenId yes() const { return yes_; }
  TokenId no() const { return no_; }
  bool is_scratch(TokenId id) const;
  const std::vector<TokenId>& scratch() const { return scratch_; }

 private:
  std::vector<std::string> symbols_;
  TokenId yes_;
  TokenId no_;
  std::vector<TokenId> scratch_;
};

// Emb(z, i) = [[token(z) + position(i)] + joint(z, i)] coordinatewise, with
// positions 1-based and bounded by max_context.
class Embedding {
 public:
  Embedding(Precision p, std::size_t d_model, std::size_t vocab_size, std::size_t max_context);

  Precision precision() const { return p_; }
  std::size_t d_model() const { return d_model_; }
  std::size_t vocab_size() const { return token_rows_.size(); }
  std::size_t max_context() const { return position_rows_.size(); }

  void set_token(TokenId z, std::size_t coord, std::int64_t k);
  void set_position(std::size_t pos, std::size_t coord, std::int64_t k);
  void set_joint(TokenId z, std::size_t pos, std::size_t coord, std::int64_t k);

  const SparseVector& token_row(TokenId z) const { return token_rows_.at(z); }
  const SparseVector& position_row(std::size_t pos) const { return position_rows_.at(pos - 1); }
  const std::map<std::pair<TokenId, std::size_t>, SparseVector>& joint_rows() const { return joint_; }

  FixedVector embed(TokenId z, std::size_t pos) const;

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  Precision p_;
  std::size_t d_model_;
  std::vector<SparseVector> token_rows_;
  std::vector<SparseVector> position_rows_;
  std::map<std::pair<TokenId, std::size_t>, SparseVector> joint_;
};

struct DecoderSpec {
  Precision precision;
  std::size_t d_model;
  Vocabulary vocab;
  Embedding embedding;
  std::vector<LayerSpec> layers;
  AffineMap output;  // d_model -> |vocab|
  std::string label;

  std::size_t max_context() const { return embedding.max_context(); }
  bool has(LayerKind kind) const;
  bool is_hybrid() const { return has(LayerKind::kGa) && has(LayerKind::kGdn); }
  bool is_pure_ga() const { return !layers.empty() && !has(LayerKind::kGdn); }
  bool is_pure_gdn() const { return !layers.empty() && !has(LayerKind::kGa); }
  // Number of rounded recurrent-state scalars across all GDN heads.
  std::size_t recurrent_scalar_count() const;

  // Throws DimensionMismatch / InvalidPrecision on inconsistent shapes.
  void validate() const;
};

// Copy of spec with every layer of the given kind removed.
DecoderSpec strip_layers(const DecoderSpec& spec, LayerKind kind);

// Recurrent state of one GDN layer: one d_h x d_h matrix per head.
struct GdnState {
  std::vector<FixedMatrix> heads;

  friend bool operator==(const GdnState&, const GdnState&) = default;
};

GdnState initial_state(const LayerSpec& layer);

// Observations collected during a forward pass.
struct ForwardTrace {
  // [layer][head]: attention weights of the last position over the prefix.
  // Empty for GDN layers.
  std::vector<std::vector<FixedVector>> last_position_weights;
  // [layer]: state after the last position. Empty states for GA layers.
  std::vector<GdnState> final_states;
};

std::vector<FixedVector> ga_layer_forward(const LayerSpec& layer, const std::vector<FixedVector>& hiddens,
                                          std::vector<FixedVector>* last_weights = nullptr);

std::pair<GdnState, FixedVector> gdn_layer_step(const LayerSpec& layer, const GdnState& state,
                                                const FixedVector& h);

std::vector<FixedVector> gdn_layer_forward(const LayerSpec& layer, const std::vector<FixedVector>& hiddens,
                                           GdnState* final_state = nullptr);

// Final hidden state at every position.
std::vector<FixedVector> decoder_hiddens(const DecoderSpec& spec, const std::vector<TokenId>& tokens,
                                         ForwardTrace* trace = nullptr);

// Logits at the last position.
FixedVector decoder_forward(const DecoderSpec& spec, const std::vector<TokenId>& tokens,
                            ForwardTrace* trace = nullptr);

// Greedy argmax; ties resolve to the smallest token id.
TokenId argmax_token(const FixedVector& logits);

// Streaming evaluation of a pure-GDN decoder, one token at a time. All
// information about the consumed prefix lives in state().
class GdnScanner {
 public:
  explicit GdnScanner(const DecoderSpec& spec);

  // Consumes the next token and returns the final hidden state there.
  FixedVector push(TokenId token);
  FixedVector logits() const;
  std::size_t position() const { return position_; }

  const std::vector<GdnState>& state() const { return states_; }
  // Numerators of every recurrent scalar, layers then heads, row-major.
  std::vector<std::int64_t> fingerprint() const;

 private:
  const DecoderSpec* spec_;
  std::vector<GdnState> states_;
  std::size_t position_ = 0;
  std::optional<FixedVector> last_;
};

enum class Answer { kYes, kNo, kBudgetExceeded };

const char* to_string(Answer a);

struct Transcript {
  std::vector<TokenId> scratch_tokens;
  Answer answer = Answer::kBudgetExceeded;
  std::size_t steps = 0;
  std::vector<FixedVector> step_logits;

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

Transcript greedy_decode(const DecoderSpec& spec, const std::vector<TokenId>& prompt, std::size_t budget);

}  // namespace pcrsim::nn
