#include <map>
#include <optional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pcrsim/nn_core.hpp"
#include "random_decoder.hpp"

namespace pcrsim::nn {
namespace {

using namespace testing;

// ---------------------------------------------------------------------------

TEST(AffineMap, StrictFoldRoundsAfterEveryStep) {
  const Precision p(2);
  AffineMap m(p, 3, 1);
  // 0.25 * 0.75 rounds to 0.25, so (0.25 + 0.25) + 0.25 + bias.
  for (std::size_t c = 0; c < 3; ++c) m.set_weight_numerator(0, c, 1);
  m.set_bias_numerator(0, -1);
  const auto x = FixedVector::from_numerators(p, {3, 3, 3});
  EXPECT_EQ(m.apply(x).numerator(0), 2);
  // Saturation inside the fold is visible: 3.75 + 3.75 - 3.75 = 0 strict.
  AffineMap sat(p, 3, 1);
  sat.set_weight_numerator(0, 0, 4);
  sat.set_weight_numerator(0, 1, 4);
  sat.set_weight_numerator(0, 2, -4);
  EXPECT_EQ(sat.apply(FixedVector::from_numerators(p, {15, 15, 15})).numerator(0), 0);
}

TEST(AffineMap, ZeroWeightsAreNotStoredAndShapesChecked) {
  const Precision p(3);
  AffineMap m(p, 2, 2);
  m.set_weight_numerator(0, 1, 5);
  m.set_weight_numerator(0, 1, 0);
  EXPECT_EQ(m.nonzeros(), 0u);
  EXPECT_TRUE(m.is_zero());
  EXPECT_THROW(m.set_weight_numerator(0, 1, 64), InvalidPrecision);
  EXPECT_THROW(m.apply(FixedVector(p, 3)), DimensionMismatch);
  EXPECT_THROW(m.set_weight_numerator(2, 0, 1), DimensionMismatch);
}

TEST(Embedding, SumsTokenPositionAndJointRows) {
  const Precision p(2);
  Embedding e(p, 3, 2, 4);
  e.set_token(1, 0, 4);
  e.set_position(2, 0, 3);
  e.set_joint(1, 2, 2, -4);
  EXPECT_EQ(e.embed(1, 2).numerators()[0], 7);
  EXPECT_EQ(e.embed(1, 2).numerators()[2], -4);
  EXPECT_EQ(e.embed(1, 3).numerators()[2], 0);
  EXPECT_THROW(e.embed(0, 5), ContextOverflow);
  EXPECT_THROW(e.embed(0, 0), ContextOverflow);
}

TEST(Vocabulary, TieOrderRequiresAnswersFirst) {
  EXPECT_THROW(Vocabulary({"NO", "YES"}, "YES", "NO", {}), FormatError);
  EXPECT_THROW(Vocabulary({"#", "YES", "NO"}, "YES", "NO", {"#"}), FormatError);
  const Vocabulary v = small_vocab();
  EXPECT_TRUE(v.is_scratch(2));
  EXPECT_FALSE(v.is_scratch(3));
  EXPECT_EQ(v.id("b"), 4u);
}

TEST(Argmax, TiesGoToSmallestId) {
  const Precision p(2);
  EXPECT_EQ(argmax_token(FixedVector::from_numerators(p, {1, 3, 3, 2})), 1u);
  EXPECT_EQ(argmax_token(FixedVector::from_numerators(p, {0, 0})), 0u);
}

// ---------------------------------------------------------------------------
// Gated Attention.

// One GA layer with d_model = 2 * m, a single head of width 2m whose query is
// a fixed code and whose key is taken from the hidden state.
struct SelectionFixture {
  Precision p;
  std::size_t m;
  LayerSpec layer;
};

SelectionFixture selection_layer(int s, std::size_t m, const std::vector<int>& query_code) {
  const Precision p(s);
  const std::size_t d = 2 * m;
  SelectionFixture f{p, m, empty_layer(LayerKind::kGa, p, d, d)};
  GaHeadParams& h = f.layer.ga_heads[0];
  for (std::size_t r = 0; r < m; ++r) {
    h.query.set_bias_numerator(2 * r, query_code[r] * p.unit());
    h.query.set_bias_numerator(2 * r + 1, p.unit());
    // Hidden coordinate r carries the key code bit; K(d) = (d_1, -1, ...).
    h.key.set_weight_numerator(2 * r, r, p.unit());
    h.key.set_bias_numerator(2 * r + 1, -p.unit());
  }
  // Value = hidden coordinates m..2m-1 copied to head coordinates 0..m-1.
  for (std::size_t r = 0; r < m; ++r) h.value.set_weight_numerator(r, m + r, p.unit());
  for (std::size_t c = 0; c < d; ++c) h.gate.set_bias_numerator(c, p.max_numerator());
  for (std::size_t c = 0; c < m; ++c) f.layer.out_proj.set_weight_numerator(m + c, c, p.unit());
  return f;
}

FixedVector position_hidden(const SelectionFixture& f, const std::vector<int>& code, std::int64_t payload) {
  FixedVector h(f.p, 2 * f.m);
  for (std::size_t r = 0; r < f.m; ++r) h.set_numerator(r, code[r] * f.p.unit());
  h.set_numerator(f.m, payload);
  return h;
}

TEST(GatedAttention, HardSelectionReturnsMatchingValueExactly) {
  // m = 21 >= m0(2) with codes at mutual distance >= 7.
  const std::size_t m = 21;
  std::vector<int> target(m, 1), far1(m, 1), far2(m, -1);
  for (std::size_t r = 0; r < 7; ++r) far1[3 * r] = -1;
  for (std::size_t r = 0; r < 7; ++r) far2[3 * r + 1] = 1;
  auto f = selection_layer(2, m, target);
  const std::vector<FixedVector> hs = {position_hidden(f, far1, 5), position_hidden(f, target, 3),
                                       position_hidden(f, far2, 7)};
  std::vector<FixedVector> weights;
  const auto out = ga_layer_forward(f.layer, hs, &weights);
  ASSERT_EQ(weights.size(), 1u);
  EXPECT_EQ(weights[0], FixedVector::from_numerators(f.p, {0, 4, 0}));
  // Residual: payload coordinate m becomes 7 + 3 = 10 (0.25 units).
  EXPECT_EQ(out[2].numerator(m), 10);
}

TEST(GatedAttention, AllMismatchedKeysGiveZeroWeights) {
  const std::size_t m = 21;
  std::vector<int> target(m, 1), far1(m, 1);
  for (std::size_t r = 0; r < 7; ++r) far1[3 * r] = -1;
  auto f = selection_layer(2, m, target);
  const std::vector<FixedVector> hs = {position_hidden(f, far1, 5), position_hidden(f, far1, 6)};
  std::vector<FixedVector> weights;
  const auto out = ga_layer_forward(f.layer, hs, &weights);
  EXPECT_TRUE(weights[0].is_zero());
  EXPECT_EQ(out[1], hs[1]);
}

TEST(GatedAttention, SingletonAttendsToItself) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const DecoderSpec spec = random_decoder(100 + trial, {LayerKind::kGa});
    ForwardTrace trace;
    decoder_forward(spec, random_tokens(rng, 1), &trace);
    for (const auto& w : trace.last_position_weights[0]) {
      ASSERT_EQ(w.size(), 1u);
      // exp_s of a score is either 0 or positive; a positive one normalizes to 1.
      EXPECT_TRUE(w.numerator(0) == 0 || w.numerator(0) == spec.precision.unit());
    }
  }
}

TEST(GatedAttention, OneHotExactnessOnRandomValues) {
  // Whenever only one position has a nonzero exp score, the mixed value is that
  // position's value vector; check through the observable weights.
  const std::size_t m = 21;
  std::vector<int> target(m, 1), far(m, 1);
  for (std::size_t r = 0; r < 7; ++r) far[3 * r + 2] = -1;
  auto f = selection_layer(2, m, target);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    const std::size_t hit = rng() % n;
    std::vector<FixedVector> hs;
    for (std::size_t i = 0; i < n; ++i)
      hs.push_back(position_hidden(f, i == hit ? target : far, static_cast<std::int64_t>(rng() % 15) - 7));
    const auto out = ga_layer_forward(f.layer, hs);
    const std::int64_t expect = fixed::kernel::add(hs[n - 1].numerator(m), hs[hit].numerator(m), f.p);
    EXPECT_EQ(out[n - 1].numerator(m), expect) << "trial " << trial;
  }
}

// ---------------------------------------------------------------------------
// Gated DeltaNet.

// d_model = 4, hidden = (cell_G, cell_F, 0, 0); head 0 is the parity cell.
LayerSpec parity_cell_layer(const Precision p, std::int64_t row0_col0, std::int64_t row0_col1) {
  LayerSpec l = empty_layer(LayerKind::kGdn, p, 4, 2);
  GdnHeadParams& h = l.gdn_heads[0];
  const std::int64_t one = p.unit(), quarter = p.unit() / 4, half = p.unit() / 2;
  h.key.set_bias_numerator(0, one);
  h.key.set_weight_numerator(1, 0, one);
  h.key.set_weight_numerator(0, 1, -2 * one);
  h.key.set_weight_numerator(1, 1, one);
  h.alpha.set_bias_numerator(0, 3 * quarter);
  h.alpha.set_weight_numerator(0, 1, -half);
  h.beta.set_bias_numerator(0, quarter);
  h.beta.set_weight_numerator(0, 0, quarter);
  h.beta.set_weight_numerator(0, 1, half);
  h.value.set_weight_numerator(0, 0, 6);
  h.query.set_bias_numerator(0, one);
  for (std::size_t c = 0; c < 2; ++c) h.gate.set_bias_numerator(c, p.max_numerator());
  h.initial_state.set(0, 0, FixedScalar::from_numerator(row0_col0, p));
  h.initial_state.set(0, 1, FixedScalar::from_numerator(row0_col1, p));
  // Readout coordinate 0 of head 0 lands in hidden coordinate 2.
  l.out_proj.set_weight_numerator(2, 0, one);
  return l;
}

FixedVector macro_input(Precision p, char macro) {
  FixedVector h(p, 4);
  if (macro == 'G') h.set_numerator(0, p.unit());
  if (macro == 'F') h.set_numerator(1, p.unit());
  return h;
}

std::pair<std::int64_t, std::int64_t> run_cell(Precision p, std::pair<std::int64_t, std::int64_t> start,
                                               const std::string& macros) {
  const LayerSpec l = parity_cell_layer(p, start.first, start.second);
  GdnState st = initial_state(l);
  for (char c : macros) st = gdn_layer_step(l, st, macro_input(p, c)).first;
  const auto& S = st.heads[0];
  EXPECT_EQ(S.at(1, 0).numerator(), 0);
  EXPECT_EQ(S.at(1, 1).numerator(), 0);
  return {S.at(0, 0).numerator(), S.at(0, 1).numerator()};
}

TEST(GatedDeltaNet, ParityCellMacroTable) {
  using State = std::pair<std::int64_t, std::int64_t>;
  for (int s = 2; s <= 8; ++s) {
    const Precision p(s);
    const State P0{0, 1}, P1{1, 0}, H0{2, 3}, H1{3, 2};
    EXPECT_EQ(run_cell(p, P0, "Z"), P0) << "s=" << s;
    EXPECT_EQ(run_cell(p, P1, "Z"), P1) << "s=" << s;
    EXPECT_EQ(run_cell(p, P0, "G"), H0) << "s=" << s;
    EXPECT_EQ(run_cell(p, P1, "G"), H1) << "s=" << s;
    EXPECT_EQ(run_cell(p, H0, "F"), P1) << "s=" << s;
    EXPECT_EQ(run_cell(p, H1, "F"), P0) << "s=" << s;
  }
}

TEST(GatedDeltaNet, ParityCellReadout) {
  const Precision p(4);
  const LayerSpec l = parity_cell_layer(p, 0, 1);
  GdnState st = initial_state(l);
  auto [s1, y1] = gdn_layer_step(l, st, macro_input(p, 'Z'));
  EXPECT_EQ(y1.numerator(2), 0);  // P0: S q = 0
  auto [s2, y2] = gdn_layer_step(l, s1, macro_input(p, 'G'));
  auto [s3, y3] = gdn_layer_step(l, s2, macro_input(p, 'F'));
  // P1: S q = (delta, 0), rmsnorm gives ([sqrt 2]_s, 0).
  EXPECT_EQ(s3.heads[0].at(0, 0).numerator(), 1);
  EXPECT_EQ(y3.numerator(2), fixed::sqrt_s(2, p).numerator());
  EXPECT_NE(y3.numerator(2), 0);
}

TEST(GatedDeltaNet, ZeroStateAndZeroValueStaysZero) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    DecoderSpec spec = random_decoder(seed, {LayerKind::kGdn});
    for (auto& h : spec.layers[0].gdn_heads) h.value = zero_map(spec.precision, 4, 2);
    std::mt19937_64 rng(seed);
    GdnScanner scan(spec);
    for (TokenId t : random_tokens(rng, 8)) scan.push(t);
    for (auto x : scan.fingerprint()) EXPECT_EQ(x, 0);
  }
}

// ---------------------------------------------------------------------------
// Decoder-level properties.

TEST(Decoder, CausalityOnRandomSpecs) {
  std::mt19937_64 rng(17);
  const std::vector<std::vector<LayerKind>> stacks = {
      {LayerKind::kGa}, {LayerKind::kGdn}, {LayerKind::kGdn, LayerKind::kGa, LayerKind::kGa}};
  for (int trial = 0; trial < 30; ++trial) {
    const DecoderSpec spec = random_decoder(1000 + trial, stacks[trial % stacks.size()]);
    const auto tokens = random_tokens(rng, 10);
    const auto full = decoder_hiddens(spec, tokens);
    const std::size_t cut = 1 + rng() % 9;
    const auto prefix = decoder_hiddens(spec, std::vector<TokenId>(tokens.begin(), tokens.begin() + cut));
    for (std::size_t i = 0; i < cut; ++i) EXPECT_EQ(prefix[i], full[i]) << "trial " << trial;
  }
}

TEST(Decoder, ScannerMatchesFullForward) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const DecoderSpec spec = random_decoder(2000 + trial, {LayerKind::kGdn, LayerKind::kGdn});
    const auto tokens = random_tokens(rng, 9);
    ForwardTrace trace;
    const auto logits = decoder_forward(spec, tokens, &trace);
    GdnScanner scan(spec);
    for (TokenId t : tokens) scan.push(t);
    EXPECT_EQ(scan.logits(), logits);
    EXPECT_EQ(scan.state()[0], trace.final_states[0]);
    EXPECT_EQ(scan.state()[1], trace.final_states[1]);
  }
}

TEST(Decoder, PureGdnBehaviourDependsOnlyOnState) {
  // Find prefixes of equal length with identical state and check that every
  // suffix then produces identical logits.
  const DecoderSpec spec = random_decoder(77, {LayerKind::kGdn}, 2);
  std::mt19937_64 rng(31);
  std::map<std::vector<std::int64_t>, std::vector<TokenId>> seen;
  int collisions = 0;
  for (int trial = 0; trial < 400 && collisions < 10; ++trial) {
    const auto prefix = random_tokens(rng, 4);
    GdnScanner scan(spec);
    for (TokenId t : prefix) scan.push(t);
    auto [it, fresh] = seen.emplace(scan.fingerprint(), prefix);
    if (fresh || it->second == prefix) continue;
    ++collisions;
    const auto suffix = random_tokens(rng, 5);
    auto a = it->second, b = prefix;
    a.insert(a.end(), suffix.begin(), suffix.end());
    b.insert(b.end(), suffix.begin(), suffix.end());
    for (std::size_t len = 5; len <= a.size(); ++len) {
      EXPECT_EQ(decoder_forward(spec, std::vector<TokenId>(a.begin(), a.begin() + len)),
                decoder_forward(spec, std::vector<TokenId>(b.begin(), b.begin() + len)));
    }
  }
  EXPECT_GT(collisions, 0);
}

TEST(Decoder, ContextOverflowAndEmptyInput) {
  const DecoderSpec spec = random_decoder(3, {LayerKind::kGa});
  EXPECT_THROW(decoder_forward(spec, std::vector<TokenId>(13, 3)), ContextOverflow);
  EXPECT_THROW(decoder_forward(spec, {}), EmptyInput);
  EXPECT_NO_THROW(decoder_forward(spec, std::vector<TokenId>(12, 3)));
}

TEST(Decoder, ValidateRejectsBadShapes) {
  DecoderSpec spec = random_decoder(4, {LayerKind::kGa});
  spec.layers[0].head_dim = 3;
  EXPECT_THROW(spec.validate(), DimensionMismatch);
  DecoderSpec other = random_decoder(4, {LayerKind::kGa});
  other.output = zero_map(other.precision, 4, 3);
  EXPECT_THROW(other.validate(), DimensionMismatch);
}

TEST(Decoder, StripLayersAndFlags) {
  const DecoderSpec hybrid = random_decoder(5, {LayerKind::kGdn, LayerKind::kGa});
  EXPECT_TRUE(hybrid.is_hybrid());
  EXPECT_EQ(hybrid.recurrent_scalar_count(), 8u);
  const DecoderSpec ga = strip_layers(hybrid, LayerKind::kGdn);
  EXPECT_TRUE(ga.is_pure_ga());
  EXPECT_EQ(ga.recurrent_scalar_count(), 0u);
  EXPECT_THROW(GdnScanner{ga}, NotPureGdn);
}

// ---------------------------------------------------------------------------
// Greedy decoding.

// Emits the token whose output bias is largest; position features can switch
// the choice after a given length.
DecoderSpec constant_emitter(TokenId first, std::optional<std::pair<std::size_t, TokenId>> switch_at = {}) {
  const Precision p(2);
  DecoderSpec spec = empty_decoder(p, 2, 10);
  spec.layers.push_back(empty_layer(LayerKind::kGa, p, 2, 2));
  spec.output.set_bias_numerator(first, 4);
  if (switch_at) {
    for (std::size_t pos = switch_at->first; pos <= 10; ++pos) spec.embedding.set_position(pos, 0, 4);
    spec.output.set_weight_numerator(switch_at->second, 0, 8);
  }
  spec.validate();
  return spec;
}

TEST(GreedyDecode, AnswerImmediately) {
  const auto t = greedy_decode(constant_emitter(1), {3, 4}, 0);
  EXPECT_EQ(t.answer, Answer::kNo);
  EXPECT_TRUE(t.scratch_tokens.empty());
  EXPECT_EQ(t.steps, 1u);
}

TEST(GreedyDecode, ZeroBudgetWithScratchFirstExceeds) {
  const auto t = greedy_decode(constant_emitter(2), {3}, 0);
  EXPECT_EQ(t.answer, Answer::kBudgetExceeded);
  EXPECT_TRUE(t.scratch_tokens.empty());
}

TEST(GreedyDecode, ScratchThenAnswerWithinBudget) {
  // Prompt length 2; from position 4 on the YES logit wins, so two scratch
  // tokens are emitted first.
  const auto spec = constant_emitter(2, std::make_pair(std::size_t{4}, TokenId{0}));
  const auto ok = greedy_decode(spec, {3, 4}, 2);
  EXPECT_EQ(ok.answer, Answer::kYes);
  EXPECT_EQ(ok.scratch_tokens, (std::vector<TokenId>{2, 2}));
  EXPECT_EQ(ok.steps, 3u);
  EXPECT_EQ(greedy_decode(spec, {3, 4}, 1).answer, Answer::kBudgetExceeded);
  EXPECT_EQ(greedy_decode(spec, {3, 4}, 2), ok);
}

TEST(GreedyDecode, NonScratchEmissionIsAnError) {
  EXPECT_THROW(greedy_decode(constant_emitter(4), {3}, 5), NonScratchNonAnswerEmission);
}

}  // namespace
}  // namespace pcrsim::nn
